import numpy as np
import pytest

from mjls.config import load_fixture
from mjls.errors import PremiseError, SignConditionError, ValidationError
from mjls.fields import MatrixField, norm_inf, uniform_psd_margin
from mjls.grid import finite_grid
from mjls.operators import MjlsSystem, apply_E, apply_T, gain_F, riccati_blocks
from mjls.riccati import (are_feasible, check_finite_brl, closed_loop_lyapunov_margin,
                          forward_iterate, hinf_bisection, riccati_map, solve_are, solve_dre,
                          verify_brl_infinite)
from mjls.stability import solve_lyapunov_T

from _util import random_sym, random_system, scalar_are_root


@pytest.fixture(scope="module")
def hinf():
    return load_fixture("hinf").system


def scalar_system(a, b, c):
    g, k = finite_grid([1], [[1.0]])
    f = lambda v: MatrixField.constant(g, [[v]])
    return MjlsSystem.from_fields(k, f(a), f(b), f(c))


def test_zero_horizon_is_output_weight():
    rng = np.random.default_rng(1)
    sys_ = random_system(rng, 4, n=3, r=2, m=2)
    sol = solve_dre(sys_, 1.0, 0)
    CtC = np.swapaxes(sys_.C.values, 1, 2) @ sys_.C.values
    np.testing.assert_allclose(sol.Y[0].values, CtC, atol=1e-14)
    assert sol.Y[1].allclose(MatrixField.zeros(sys_.grid, 3), atol=0)


def test_no_disturbance_channel_reduces_to_lyapunov():
    rng = np.random.default_rng(2)
    sys_ = random_system(rng, 5, n=2, b_scale=0.0)
    U = random_sym(rng, sys_.grid, 2, psd=True)
    CtC = MatrixField(sys_.grid, np.swapaxes(sys_.C.values, 1, 2) @ sys_.C.values, True)
    expected = apply_T(sys_.kernel, sys_.A, U) + CtC
    assert riccati_map(sys_, U, 0.7).allclose(expected, atol=1e-13)
    np.testing.assert_allclose(gain_F(sys_, U, 0.7).values, 0.0, atol=0)


def test_zero_output_keeps_zero():
    rng = np.random.default_rng(3)
    sys_ = random_system(rng, 3)
    sys_ = MjlsSystem(sys_.grid, sys_.kernel, sys_.A, sys_.B, 0.0 * sys_.C, sys_.D)
    K = forward_iterate(sys_, 0.5, 5)
    assert all(norm_inf(k) == 0.0 for k in K)


def test_riccati_map_equals_closed_loop_form():
    # R(U) = T_{A+BF}(U) + C'C + F'D'DF - gamma^2 F'F with F the optimal gain
    rng = np.random.default_rng(4)
    sys_ = random_system(rng, 6, n=3, r=2, m=2, b_scale=0.3)
    gamma = 3.0
    U = random_sym(rng, sys_.grid, 3, psd=True) * 0.1
    F = gain_F(sys_, U, gamma).values
    closed = sys_.A.values + sys_.B.values @ F
    Ft = np.swapaxes(F, 1, 2)
    Dv, Cv = sys_.D.values, sys_.C.values
    lhs = riccati_map(sys_, U, gamma).values
    rhs = (apply_T(sys_.kernel, MatrixField(sys_.grid, closed), U).values
           + np.swapaxes(Cv, 1, 2) @ Cv + Ft @ np.swapaxes(Dv, 1, 2) @ Dv @ F - gamma ** 2 * Ft @ F)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_completed_square_identity():
    rng = np.random.default_rng(5)
    sys_ = random_system(rng, 4, n=2, r=2)
    gamma = 2.0
    U = random_sym(rng, sys_.grid, 2, psd=True) * 0.05
    b = riccati_blocks(sys_, U.values, gamma)
    F = gain_F(sys_, U, gamma).values
    R = riccati_map(sys_, U, gamma).values
    W = np.block([[b.psi1 - R, b.psi2], [np.swapaxes(b.psi2, 1, 2), b.psi3]])
    IF = np.concatenate([np.broadcast_to(np.eye(2), F.shape[:1] + (2, 2)), F], axis=1)
    cong = np.swapaxes(IF, 1, 2) @ W @ IF
    assert np.abs(cong).max() < 1e-9


def test_gain_formula_against_explicit_solve():
    rng = np.random.default_rng(6)
    sys_ = random_system(rng, 3, n=2, r=2)
    U = random_sym(rng, sys_.grid, 2, psd=True) * 0.1
    gamma = 2.5
    E = apply_E(sys_.kernel, U).values
    for l in range(sys_.grid.size):
        A, B = sys_.A.values[l], sys_.B.values[l]
        psi3 = B.T @ E[l] @ B - gamma ** 2 * np.eye(2)
        F = -np.linalg.solve(psi3, B.T @ E[l] @ A)
        np.testing.assert_allclose(gain_F(sys_, U, gamma).values[l], F, atol=1e-12)


@pytest.mark.parametrize("T", [0, 3, 17])
def test_time_reversal(T):
    rng = np.random.default_rng(30 + T)
    sys_ = random_system(rng, 6, n=2)
    gamma = 5.0
    Y = solve_dre(sys_, gamma, T).Y
    K = forward_iterate(sys_, gamma, T + 1)
    for k in range(T + 2):
        assert np.abs(K[k].values - Y[T + 1 - k].values).max() <= 1e-12


def test_forward_iterates_monotone(hinf):
    K = forward_iterate(hinf, 0.5, 40)
    for a, b in zip(K, K[1:]):
        assert uniform_psd_margin((b - a).symmetrized()).min_eigenvalue_over_nodes >= -1e-10


def test_literal_and_incremental_agree():
    cfg = load_fixture("hinf", grid_nodes=10)
    a = solve_are(cfg.system, 0.5, 1e-6)
    b = solve_are(cfg.system, 0.5, 1e-6, literal=True)
    assert a.iterations == b.iterations
    assert np.abs(a.K.values - b.K.values).max() == 0.0


def test_are_fixed_point():
    rng = np.random.default_rng(7)
    sys_ = random_system(rng, 5, n=2)
    sol = solve_are(sys_, 4.0, 1e-12)
    assert norm_inf(riccati_map(sys_, sol.K, 4.0) - sol.K) < 1e-10
    assert sol.stabilizing and sol.sign_margin > 0


@pytest.mark.parametrize("a,b,c,gamma", [(0.5, 0.3, 1.0, 1.0), (0.9, 0.2, 0.5, 2.0),
                                         (0.0, 1.0, 1.0, 3.0), (-0.7, 0.4, 2.0, 3.0)])
def test_scalar_are_against_root(a, b, c, gamma):
    sol = solve_are(scalar_system(a, b, c), gamma, 1e-14)
    assert sol.K.values[0, 0, 0] == pytest.approx(scalar_are_root(a, b, c, gamma), abs=1e-8)


def test_scalar_infeasible_level():
    # below the gain |bc| / (1 - |a|) no real root exists
    sys_ = scalar_system(0.5, 0.5, 1.0)
    assert not are_feasible(sys_, 0.9).feasible
    assert are_feasible(sys_, 1.1).feasible


def test_example_three_at_half(hinf):
    sol = solve_are(hinf, 0.5, 1e-5)
    v = verify_brl_infinite(hinf, 0.5, sol)
    assert v.feasible, v.reason
    assert sol.min_eigenvalue >= -1e-10
    assert sol.sign_margin > 0 and sol.closed_loop_radius < 1 and sol.residual_inf < 1e-3


def test_small_level_fails_sign(hinf):
    with pytest.raises(SignConditionError) as info:
        solve_are(hinf, 0.01)
    assert info.value.max_eigenvalue > 0
    v = are_feasible(hinf, 0.01)
    assert not v.feasible and v.failed_node is not None


def test_finite_horizon_brl(hinf):
    assert check_finite_brl(hinf, 0.5, 10).feasible
    v = check_finite_brl(hinf, 0.01, 10)
    assert not v.feasible and v.failed_step is not None


def test_finite_horizon_gain_grows_with_horizon(hinf):
    # feasibility for the long horizon implies it for every shorter one
    for T in (1, 5, 20):
        assert check_finite_brl(hinf, 0.5, T).feasible


def test_bisection_brackets_gain(hinf):
    lo, hi = hinf_bisection(hinf, 0.05, 0.5, 1e-3)
    assert 0.05 < lo < hi <= 0.5 and hi - lo <= 1e-3
    assert are_feasible(hinf, hi).feasible
    assert not are_feasible(hinf, lo).feasible


def test_bisection_premises(hinf):
    with pytest.raises(PremiseError):
        hinf_bisection(hinf, 0.5, 0.5)
    with pytest.raises(PremiseError):
        hinf_bisection(hinf, 0.6, 0.9)
    nob = MjlsSystem(hinf.grid, hinf.kernel, hinf.A, 0.0 * hinf.B, hinf.C, hinf.D)
    with pytest.raises(PremiseError, match="disturbance"):
        hinf_bisection(nob, 0.05, 0.5)


def test_closed_loop_lyapunov_check(hinf):
    sol = solve_are(hinf, 0.5)
    closed = hinf.with_A(MatrixField(hinf.grid, hinf.A.values + hinf.B.values @ sol.gain.values))
    Y = solve_lyapunov_T(closed, MatrixField.identity(hinf.grid, hinf.n) * 2.0)
    assert closed_loop_lyapunov_margin(hinf, sol.gain, Y) == pytest.approx(1.0, abs=1e-8)


def test_invalid_arguments(hinf):
    with pytest.raises(ValidationError):
        solve_are(hinf, -1.0)
    with pytest.raises(ValidationError):
        solve_dre(hinf, 0.5, -1)
