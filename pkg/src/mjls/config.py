"""JSON model configs.

Schema::

    {
      "name": "hinf",
      "components": [{"label": 1, "interval": [0, 1], "nodes": 100}, ...],
      "quadrature": "midpoint",               # or "trapezoid"
      "measure": "lebesgue",                  # or "counting" (one node per label)
      "mode_matrix": [[...], ...],
      "initial_density": "uniform",           # or per-component probabilities
      "coefficients": {
        "A": {"1": {"at_0": [[...]], "at_1": [[...]]}, "2": {"value": [[...]]}},
        "B": ..., "C": ..., "D": ...          # B, C, D optional
      },
      "defaults": {"gamma": 0.5, "eps": 1e-5, "x0": [1, 0], ...}
    }

Coefficients are affine in the coordinate: ``M(i, t) = at_0 + t (at_1 - at_0)``;
``value`` is shorthand for a constant piece.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import build_grid, build_mode_block_kernel
from .operators import CoefficientModel, MjlsSystem

FIXTURES = ("solar", "two_mode_finite", "two_mode_borel", "hinf")


@dataclass
class ModelConfig:
    raw: dict
    system: MjlsSystem
    defaults: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.raw.get("name", "")

    def dump(self) -> dict:
        return copy.deepcopy(self.raw)


def _matrix(value, where):
    try:
        m = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: not a numeric matrix ({exc})") from None
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValidationError(f"{where}: expected a matrix, got {m.ndim}-d data")
    return m


def _pieces(spec, labels, name):
    if not isinstance(spec, dict):
        raise ValidationError(f"coefficients.{name}: expected an object keyed by label")
    out = {}
    for lab in labels:
        entry = spec.get(str(lab), spec.get(lab))
        if entry is None:
            raise ValidationError(f"coefficients.{name}: missing entry for label {lab}")
        where = f"coefficients.{name}.{lab}"
        if "value" in entry:
            m0 = m1 = _matrix(entry["value"], where + ".value")
        elif "at_0" in entry and "at_1" in entry:
            m0 = _matrix(entry["at_0"], where + ".at_0")
            m1 = _matrix(entry["at_1"], where + ".at_1")
        else:
            raise ValidationError(f"{where}: need 'value' or both 'at_0' and 'at_1'")
        if m0.shape != m1.shape:
            raise ValidationError(f"{where}: at_0 and at_1 shapes differ")
        out[lab] = (m0, m1)
    shapes = {m0.shape for m0, _ in out.values()}
    if len(shapes) != 1:
        raise ValidationError(f"coefficients.{name}: pieces have different shapes {sorted(shapes)}")
    return out


def _zero_pieces(labels, shape):
    z = np.zeros(shape)
    return {lab: (z, z) for lab in labels}


def parse_config(raw: dict, grid_nodes: int | None = None, quadrature: str | None = None) -> ModelConfig:
    """Validate a config dictionary and build the system it describes.

    ``grid_nodes`` overrides every component's node count and ``quadrature``
    the rule (both ignored under the counting measure).
    """
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    comps = raw.get("components")
    if not comps:
        raise ValidationError("config.components: at least one component required")
    measure = raw.get("measure", "lebesgue")
    triples = []
    for i, c in enumerate(comps):
        try:
            label = int(c["label"])
            interval = c.get("interval", [0.0, 1.0])
            nodes = int(c.get("nodes", 1))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"config.components[{i}]: {exc}") from None
        if measure == "counting":
            interval, nodes = [0.0, 1.0], 1
        elif grid_nodes is not None:
            nodes = int(grid_nodes)
        triples.append((label, interval, nodes))
    if measure not in ("lebesgue", "counting"):
        raise ValidationError(f"config.measure: unknown measure {measure!r}")
    rule = "midpoint" if measure == "counting" else (quadrature or raw.get("quadrature", "midpoint"))
    grid = build_grid(triples, rule)
    labels = grid.label_set

    if "mode_matrix" not in raw:
        raise ValidationError("config.mode_matrix: required")
    init = raw.get("initial_density", "uniform")
    if init == "uniform":
        init = None
    elif isinstance(init, list):
        init = np.array(init, dtype=float)
    else:
        raise ValidationError("config.initial_density: 'uniform' or per-component probabilities")
    kernel = build_mode_block_kernel(grid, raw["mode_matrix"], init)

    coeffs = raw.get("coefficients") or {}
    if "A" not in coeffs:
        raise ValidationError("config.coefficients.A: required")
    pieces = {"A": _pieces(coeffs["A"], labels, "A")}
    n = next(iter(pieces["A"].values()))[0].shape[0]
    if "B" in coeffs:
        pieces["B"] = _pieces(coeffs["B"], labels, "B")
    else:
        pieces["B"] = _zero_pieces(labels, (n, 1))
    r = next(iter(pieces["B"].values()))[0].shape[1]
    if "C" in coeffs:
        pieces["C"] = _pieces(coeffs["C"], labels, "C")
    else:
        pieces["C"] = _zero_pieces(labels, (1, n))
    m = next(iter(pieces["C"].values()))[0].shape[0]
    if "D" in coeffs:
        pieces["D"] = _pieces(coeffs["D"], labels, "D")
    else:
        pieces["D"] = _zero_pieces(labels, (m, r))

    model = CoefficientModel(pieces)
    fields = {nm: model.sample(grid, nm) for nm in "ABCD"}
    system = MjlsSystem(grid, kernel, fields["A"], fields["B"], fields["C"], fields["D"],
                        model, raw.get("name", ""))
    if grid_nodes is not None and measure != "counting":
        for c in raw["components"]:
            c["nodes"] = int(grid_nodes)
    if quadrature is not None and measure != "counting":
        raw["quadrature"] = quadrature
    return ModelConfig(raw, system, dict(raw.get("defaults") or {}))


def loads(text: str, **overrides) -> ModelConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, **overrides)


def load(path, **overrides) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    try:
        return loads(text, **overrides)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def fixture_path(name: str) -> Path:
    """Path of a bundled fixture (``solar``, ``two_mode_finite``,
    ``two_mode_borel`` or ``hinf``)."""
    if name not in FIXTURES:
        raise ValidationError(f"unknown fixture {name!r}; available: {FIXTURES}")
    return Path(str(resources.files("mjls") / "data" / f"{name}.json"))


def load_fixture(name: str, **overrides) -> ModelConfig:
    return load(fixture_path(name), **overrides)
