import csv
import json

import numpy as np
import pytest

from mjls import cli
from mjls.config import FIXTURES, fixture_path, load_fixture, loads, parse_config
from mjls.errors import ValidationError


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = json.loads(capsys.readouterr().out)
    assert out["exit_code"] == code
    return code, out


def minimal(**extra):
    raw = {"components": [{"label": 1, "interval": [0, 1], "nodes": 4}],
           "mode_matrix": [[1.0]],
           "coefficients": {"A": {"1": {"value": [[0.5]]}}}}
    raw.update(extra)
    return raw


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_load(name):
    cfg = load_fixture(name)
    assert cfg.name == name and cfg.system.grid.size >= 2


def test_optional_channels_zero_filled():
    cfg = parse_config(minimal())
    s = cfg.system
    assert (s.n, s.r, s.m) == (1, 1, 1)
    assert not s.B.values.any() and not s.C.values.any() and not s.D.values.any()


def test_affine_coefficients():
    raw = minimal(coefficients={"A": {"1": {"at_0": [[1.0]], "at_1": [[3.0]]}}})
    s = parse_config(raw).system
    np.testing.assert_allclose(s.A.values[:, 0, 0], 1.0 + 2.0 * s.grid.t, rtol=1e-14)


def test_grid_override_and_quadrature():
    cfg = load_fixture("two_mode_borel", grid_nodes=7, quadrature="trapezoid")
    assert cfg.system.grid.size == 14 and cfg.system.grid.rule == "trapezoid"
    assert all(c["nodes"] == 7 for c in cfg.dump()["components"])


def test_counting_measure_ignores_override():
    assert load_fixture("two_mode_finite", grid_nodes=50).system.grid.size == 2


@pytest.mark.parametrize("mutate, match", [
    (lambda r: r.pop("mode_matrix"), "mode_matrix"),
    (lambda r: r.pop("components"), "components"),
    (lambda r: r["coefficients"].pop("A"), "coefficients.A"),
    (lambda r: r.update(measure="weird"), "measure"),
    (lambda r: r.update(initial_density=3), "initial_density"),
])
def test_config_rejections(mutate, match):
    raw = minimal()
    mutate(raw)
    with pytest.raises(ValidationError, match=match):
        parse_config(raw)


def test_cross_term_rejected():
    raw = minimal(coefficients={"A": {"1": {"value": [[0.5]]}}, "C": {"1": {"value": [[1.0]]}},
                                "D": {"1": {"value": [[1.0]]}}})
    with pytest.raises(ValidationError):
        parse_config(raw)


def test_json_error_has_position():
    with pytest.raises(ValidationError, match=r"line 2, column"):
        loads('{"components": [],\n  oops}')


def test_dump_round_trip(tmp_path, capsys):
    code, out = run(capsys, "solve-are", fixture_path("hinf"), "--dump-config", "--grid-nodes", 12)
    assert code == 0
    p = tmp_path / "dumped.json"
    p.write_text(json.dumps(out["config"]))
    a = load_fixture("hinf", grid_nodes=12).system
    b = parse_config(json.loads(p.read_text())).system
    for nm in "ABCD":
        assert np.abs(getattr(a, nm).values - getattr(b, nm).values).max() <= 1e-15
    np.testing.assert_array_equal(a.kernel.density, b.kernel.density)


def test_analyze_stability_finite(capsys):
    code, out = run(capsys, "analyze-stability", fixture_path("two_mode_finite"))
    assert code == 0
    assert out["report"]["r_sigma_L"] == pytest.approx(0.6, abs=1e-6)
    assert out["report"]["consistent"]


def test_analyze_stability_unstable(tmp_path, capsys):
    p = tmp_path / "u.json"
    p.write_text(json.dumps(minimal(coefficients={"A": {"1": {"value": [[1.2]]}}})))
    code, out = run(capsys, "analyze-stability", p)
    assert code == 2 and out["report"]["emss_c_verdict"] is False


def test_solve_are_writes_csv(tmp_path, capsys):
    code, out = run(capsys, "solve-are", fixture_path("hinf"), "--grid-nodes", 20,
                    "--csv-dir", tmp_path, "--horizon", 5, "--out", tmp_path / "r.json")
    assert code == 0 and out["status"] == "verified"
    assert out["finite_horizon"]["feasible"]
    rows = list(csv.reader(open(tmp_path / "K.csv")))
    assert rows[0] == ["label", "t", "i", "j", "value"] and len(rows) == 1 + 40 * 4
    assert json.loads((tmp_path / "r.json").read_text())["exit_code"] == 0


def test_solve_are_sign_failure(tmp_path, capsys):
    code, out = run(capsys, "solve-are", fixture_path("hinf"), "--gamma", 0.01,
                    "--grid-nodes", 10, "--csv-dir", tmp_path)
    assert code == 2 and out["status"] == "sign_condition_failed"


def test_solve_are_non_convergence(tmp_path, capsys):
    code, out = run(capsys, "solve-are", fixture_path("hinf"), "--grid-nodes", 10,
                    "--eps", 1e-14, "--max-rounds", 3, "--csv-dir", tmp_path)
    assert code == 3 and out["status"] == "not_converged"


def test_solve_are_missing_gamma(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(minimal()))
    code, out = run(capsys, "solve-are", p, "--csv-dir", tmp_path)
    assert code == 1 and "gamma" in out["message"]


def test_simulate_outputs(tmp_path, capsys):
    code, out = run(capsys, "simulate", fixture_path("hinf"), "--grid-nodes", 10, "--traj", 4,
                    "--steps", 30, "--csv-dir", tmp_path)
    assert code == 0 and out["max_ratio"] <= 0.5
    energy = list(csv.DictReader(open(tmp_path / "energy.csv")))
    assert len(energy) == 31 and set(energy[0]) == {"time", "vE", "yE", "ratio"}
    assert float(energy[1]["time"]) == pytest.approx(0.01)
    traj = list(csv.DictReader(open(tmp_path / "trajectories.csv")))
    assert len(traj) == 4 * 31
    assert (tmp_path / "moments.csv").exists()


@pytest.mark.parametrize("tag", ["zero", "exp(0.5)", "impulse(3)"])
def test_simulate_disturbance_tags(tmp_path, capsys, tag):
    code, out = run(capsys, "simulate", fixture_path("hinf"), "--grid-nodes", 5, "--traj", 2,
                    "--steps", 8, "--disturbance", tag, "--csv-dir", tmp_path)
    assert code == 0 and out["disturbance"] == tag


def test_simulate_disturbance_file(tmp_path, capsys):
    f = tmp_path / "v.csv"
    np.savetxt(f, np.linspace(1, 0, 9)[:, None], delimiter=",")
    code, out = run(capsys, "simulate", fixture_path("hinf"), "--grid-nodes", 5, "--traj", 2,
                    "--steps", 8, "--disturbance", f"file({f})", "--csv-dir", tmp_path)
    assert code == 0 and out["max_ratio"] is not None


@pytest.mark.parametrize("tag", ["sine(2)", "exp()", "file(/nonexistent/v.csv)"])
def test_simulate_bad_disturbance(tmp_path, capsys, tag):
    code, _ = run(capsys, "simulate", fixture_path("hinf"), "--grid-nodes", 5, "--disturbance", tag,
                  "--csv-dir", tmp_path)
    assert code == 1


def test_simulate_bad_x0(tmp_path, capsys):
    code, _ = run(capsys, "simulate", fixture_path("hinf"), "--grid-nodes", 5, "--x0", "1,2,3",
                  "--csv-dir", tmp_path)
    assert code == 1


def test_hinf_bound(capsys):
    code, out = run(capsys, "hinf-bound", fixture_path("hinf"), "--grid-nodes", 20)
    lo, hi = out["interval"]
    assert code == 0 and 0.05 < lo < hi <= 0.5 and hi - lo <= 1e-3


def test_hinf_bound_degenerate_bracket(capsys):
    code, _ = run(capsys, "hinf-bound", fixture_path("hinf"), "--lo", 0.3, "--hi", 0.3)
    assert code == 1


def test_hinf_bound_without_disturbance(tmp_path, capsys):
    p = tmp_path / "nb.json"
    p.write_text(json.dumps(minimal(coefficients={"A": {"1": {"value": [[0.5]]}},
                                                  "C": {"1": {"value": [[1.0]]}}})))
    code, out = run(capsys, "hinf-bound", p, "--lo", 0.1, "--hi", 1.0)
    assert code == 1 and "disturbance" in out["message"]


def test_malformed_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{\n  \"components\": [,]\n}")
    code, out = run(capsys, "analyze-stability", p)
    assert code == 1 and "line 2" in out["message"]
    code, _ = run(capsys, "analyze-stability", tmp_path / "missing.json")
    assert code == 1


def test_usage_errors(capsys):
    code, _ = run(capsys, "no-such-command")
    assert code == 1
    code, _ = run(capsys, "solve-are")
    assert code == 1


def test_thread_cap(monkeypatch, capsys):
    monkeypatch.setenv("MJLS_THREADS", "1")
    code, _ = run(capsys, "analyze-stability", fixture_path("two_mode_finite"))
    assert code == 0
