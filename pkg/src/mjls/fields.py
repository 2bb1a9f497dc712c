"""Matrix-valued functions on a grid, with the norms and ordering used
throughout the analysis.

A :class:`MatrixField` stores one ``(rows, cols)`` matrix per grid node in a
``(N, rows, cols)`` array.  Integrals over the mode space become weighted
sums over nodes, and "almost everywhere" statements are checked at nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError
from .grid import GridSpace

SYMMETRY_TOL = 1e-12


def symmetrize(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values + np.swapaxes(values, -1, -2))


class MatrixField:
    """Per-node matrices sharing one shape.

    Parameters
    ----------
    grid : GridSpace
    values : array_like, shape (N, rows, cols)
    symmetric : bool or None
        ``True`` asserts that every value is symmetric (checked against
        ``SYMMETRY_TOL``); ``None`` detects it.
    """

    __slots__ = ("grid", "values", "symmetric")

    def __init__(self, grid: GridSpace, values, symmetric: bool | None = None):
        values = np.array(values, dtype=float)
        if values.ndim != 3 or values.shape[0] != grid.size:
            raise ValidationError(
                f"field values must have shape ({grid.size}, rows, cols), got {values.shape}")
        square = values.shape[1] == values.shape[2]
        asym = np.abs(values - np.swapaxes(values, 1, 2)).max() if square and values.size else 0.0
        if symmetric is None:
            symmetric = bool(square and asym <= SYMMETRY_TOL)
        elif symmetric:
            if not square:
                raise ValidationError("a non-square field cannot be symmetric")
            if asym > SYMMETRY_TOL:
                raise ValidationError(f"field flagged symmetric but asymmetry is {asym:.3e}")
        values.setflags(write=False)
        self.grid = grid
        self.values = values
        self.symmetric = bool(symmetric)

    # construction helpers
    @classmethod
    def constant(cls, grid: GridSpace, matrix) -> "MatrixField":
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(grid, np.broadcast_to(m, (grid.size,) + m.shape))

    @classmethod
    def identity(cls, grid: GridSpace, n: int) -> "MatrixField":
        return cls.constant(grid, np.eye(n))

    @classmethod
    def zeros(cls, grid: GridSpace, rows: int, cols: int | None = None) -> "MatrixField":
        return cls(grid, np.zeros((grid.size, rows, rows if cols is None else cols)))

    @classmethod
    def from_function(cls, grid: GridSpace, f: Callable) -> "MatrixField":
        """Sample ``f(label, t)`` at every node."""
        vals = [np.atleast_2d(np.asarray(f(int(lab), float(tt)), dtype=float))
                for lab, tt in zip(grid.labels, grid.t)]
        return cls(grid, np.stack(vals))

    @classmethod
    def per_label(cls, grid: GridSpace, matrices: dict) -> "MatrixField":
        """Field that is constant on each component."""
        return cls.from_function(grid, lambda lab, t: matrices[lab])

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    def __len__(self):
        return self.values.shape[0]

    def _check(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        if other.grid is not self.grid and other.grid.size != self.grid.size:
            raise ValidationError("fields live on different grids")
        if other.shape != self.shape:
            raise ValidationError(f"shape mismatch {self.shape} vs {other.shape}")
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return MatrixField(self.grid, self.values + other.values,
                           True if self.symmetric and other.symmetric else None)

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return MatrixField(self.grid, self.values - other.values,
                           True if self.symmetric and other.symmetric else None)

    def __neg__(self):
        return MatrixField(self.grid, -self.values, self.symmetric or None)

    def __mul__(self, c):
        return MatrixField(self.grid, float(c) * self.values, self.symmetric or None)

    __rmul__ = __mul__

    def transpose(self) -> "MatrixField":
        return MatrixField(self.grid, np.swapaxes(self.values, 1, 2))

    @property
    def T(self):
        return self.transpose()

    def matmul(self, other: "MatrixField") -> "MatrixField":
        return MatrixField(self.grid, self.values @ other.values)

    def symmetrized(self) -> "MatrixField":
        return MatrixField(self.grid, symmetrize(self.values), True)

    def min_eigenvalues(self) -> np.ndarray:
        """Smallest eigenvalue at every node (symmetric fields only)."""
        if not self.symmetric:
            raise ValidationError("eigenvalue ordering needs a symmetric field")
        return np.linalg.eigvalsh(self.values)[:, 0]

    def allclose(self, other: "MatrixField", atol=1e-12, rtol=0.0) -> bool:
        return self.shape == other.shape and np.allclose(self.values, other.values, atol=atol, rtol=rtol)

    def __repr__(self):
        return f"MatrixField(nodes={len(self)}, shape={self.shape}, symmetric={self.symmetric})"

    # serialization
    def to_json_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "symmetric": self.symmetric,
            "nodes": [
                {"label": int(lab), "t": float(tt), "value": v.tolist()}
                for lab, tt, v in zip(self.grid.labels, self.grid.t, self.values)
            ],
        }

    def csv_rows(self):
        """Yield ``(label, t, i, j, value)`` with 1-based matrix indices."""
        rows, cols = self.shape
        for lab, tt, v in zip(self.grid.labels, self.grid.t, self.values):
            for i in range(rows):
                for j in range(cols):
                    yield int(lab), float(tt), i + 1, j + 1, float(v[i, j])


@dataclass(frozen=True)
class OrderingCertificate:
    """Smallest node eigenvalue of a symmetric field and where it occurs.

    ``holds`` is ``min_eigenvalue_over_nodes > threshold`` (or ``>=`` when
    ``strict`` is false).
    """

    min_eigenvalue_over_nodes: float
    argmin_node: int
    threshold: float = 0.0
    strict: bool = True

    @property
    def holds(self) -> bool:
        if self.strict:
            return self.min_eigenvalue_over_nodes > self.threshold
        return self.min_eigenvalue_over_nodes >= self.threshold

    def to_json_dict(self) -> dict:
        return {"min_eigenvalue_over_nodes": self.min_eigenvalue_over_nodes,
                "argmin_node": self.argmin_node, "threshold": self.threshold,
                "holds": self.holds}


def spectral_norms(P: MatrixField) -> np.ndarray:
    """Largest singular value of every node value."""
    if P.values.size == 0:
        return np.zeros(len(P))
    return np.linalg.norm(P.values, ord=2, axis=(1, 2))


def norm_one(P: MatrixField) -> float:
    """Weighted sum of node spectral norms (integrable-field norm)."""
    return float(spectral_norms(P) @ P.grid.weights)


def norm_inf(P: MatrixField) -> float:
    """Largest node spectral norm (essential-supremum norm at nodes)."""
    return float(spectral_norms(P).max(initial=0.0))


def pairing(V: MatrixField, U: MatrixField) -> float:
    """Weighted sum over nodes of ``trace(V' U)``."""
    if V.shape != U.shape:
        raise ValidationError(f"pairing shape mismatch {V.shape} vs {U.shape}")
    traces = np.einsum("kij,kij->k", V.values, U.values)
    return float(traces @ V.grid.weights)


def uniform_psd_margin(P: MatrixField, threshold: float = 0.0) -> OrderingCertificate:
    """Minimum over nodes of the smallest eigenvalue of ``P``.

    The field is uniformly positive definite at the grid resolution when the
    returned certificate ``holds`` with ``threshold=0``.
    """
    if not P.symmetric:
        raise ValidationError("uniform_psd_margin needs a symmetric field")
    lam = P.min_eigenvalues()
    k = int(np.argmin(lam))
    return OrderingCertificate(float(lam[k]), k, float(threshold))
