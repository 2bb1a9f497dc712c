"""Discretized mode space and transition kernels.

The mode space is a finite union of labeled intervals ``{label} x [lo, hi]``
carrying Lebesgue measure on each piece.  Integrals against the measure are
replaced by a positive-weight quadrature rule, and the transition density
``g(s | l)`` is stored as a dense ``(N, N)`` array indexed ``[source, target]``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError

QUADRATURE_RULES = ("midpoint", "trapezoid")

_STOCHASTIC_TOL = 1e-10
_RESCALE_WARN = 1e-3


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Component:
    label: int
    lo: float
    hi: float
    node_count: int

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True, eq=False)
class GridSpace:
    """Quadrature discretization of the mode space.

    Attributes
    ----------
    components : tuple of Component
    labels : ndarray of int, shape (N,)
        Component label of every node.
    t : ndarray, shape (N,)
        Coordinate of every node inside its interval.
    weights : ndarray, shape (N,)
        Positive quadrature weights (measure units).
    cell_lo, cell_hi : ndarray, shape (N,)
        Sub-interval of the component represented by each node; used by the
        sampler to draw continuous coordinates.
    """

    components: tuple
    labels: np.ndarray
    t: np.ndarray
    weights: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    rule: str = "midpoint"

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValidationError("quadrature weights must be positive")
        for comp in self.components:
            mask = self.labels == comp.label
            total = self.weights[mask].sum()
            if abs(total - comp.length) > 1e-12 * max(1.0, comp.length):
                raise ValidationError(
                    f"weights of component {comp.label} sum to {total}, expected {comp.length}")
            tt = self.t[mask]
            if np.any(tt < comp.lo) or np.any(tt > comp.hi):
                raise ValidationError(f"node outside interval of component {comp.label}")

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    @property
    def label_set(self) -> list:
        return [c.label for c in self.components]

    def component_index(self) -> np.ndarray:
        """Position of each node's component in ``components``."""
        order = {c.label: i for i, c in enumerate(self.components)}
        return np.array([order[int(lab)] for lab in self.labels], dtype=int)

    def nodes(self) -> list:
        return [(int(lab), float(tt)) for lab, tt in zip(self.labels, self.t)]

    def locate(self, label: int, t: float) -> int:
        """Flat index of the node whose cell contains ``(label, t)``."""
        idx = np.flatnonzero(self.labels == label)
        if idx.size == 0:
            raise ValidationError(f"unknown component label {label}")
        lo, hi = self.cell_lo[idx], self.cell_hi[idx]
        inside = np.flatnonzero((t >= lo) & (t <= hi))
        if inside.size:
            return int(idx[inside[0]])
        return int(idx[np.argmin(np.abs(self.t[idx] - t))])

    def integrate(self, values) -> float:
        """Quadrature sum of per-node scalar values."""
        return float(np.dot(np.asarray(values, dtype=float), self.weights))


def build_grid(components: Sequence, rule: str = "midpoint") -> GridSpace:
    """Build a :class:`GridSpace` from ``(label, (lo, hi), node_count)`` triples.

    The midpoint rule places node ``j`` at ``lo + (j + 1/2) h`` with weight
    ``h = (hi - lo) / node_count``.  The trapezoid rule uses ``node_count``
    equispaced points including both endpoints.
    """
    if rule not in QUADRATURE_RULES:
        raise ValidationError(f"unknown quadrature rule {rule!r}; expected one of {QUADRATURE_RULES}")
    if len(components) == 0:
        raise ValidationError("grid needs at least one component")

    comps, labels, ts, ws, clo, chi = [], [], [], [], [], []
    seen = set()
    for entry in components:
        label, interval, count = entry
        label = int(label)
        lo, hi = (float(v) for v in interval)
        count = int(count)
        if label in seen:
            raise ValidationError(f"duplicate component label {label}")
        seen.add(label)
        if count < 1:
            raise ValidationError(f"component {label}: node_count must be positive, got {count}")
        if not hi > lo:
            raise ValidationError(f"component {label}: degenerate interval [{lo}, {hi}]")
        length = hi - lo
        if rule == "midpoint":
            h = length / count
            edges = lo + h * np.arange(count + 1)
            edges[-1] = hi
            t = 0.5 * (edges[:-1] + edges[1:])
            w = np.full(count, h)
            # make the component sum exact to rounding
            w *= length / w.sum()
            lo_c, hi_c = edges[:-1], edges[1:]
        else:
            if count < 2:
                raise ValidationError(f"component {label}: trapezoid rule needs node_count >= 2")
            h = length / (count - 1)
            t = np.linspace(lo, hi, count)
            w = np.full(count, h)
            w[0] = w[-1] = h / 2
            w *= length / w.sum()
            lo_c = np.maximum(t - h / 2, lo)
            hi_c = np.minimum(t + h / 2, hi)
        comps.append(Component(label, lo, hi, count))
        labels.append(np.full(count, label, dtype=int))
        ts.append(t)
        ws.append(w)
        clo.append(lo_c)
        chi.append(hi_c)

    lab = np.concatenate(labels)
    lab.setflags(write=False)
    return GridSpace(
        components=tuple(comps),
        labels=lab,
        t=_frozen(np.concatenate(ts)),
        weights=_frozen(np.concatenate(ws)),
        cell_lo=_frozen(np.concatenate(clo)),
        cell_hi=_frozen(np.concatenate(chi)),
        rule=rule,
    )


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Discretized transition density and initial density.

    ``density[l, s]`` is ``g(s | l)``: row ``l`` is the source node.
    ``mode_matrix`` is kept when the kernel was built from label-to-label
    probabilities, for reporting and serialization.
    """

    grid: GridSpace
    density: np.ndarray
    initial_density: np.ndarray
    mode_matrix: np.ndarray | None = None
    rescale: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        N = self.grid.size
        if self.density.shape != (N, N):
            raise ValidationError(f"kernel density must have shape {(N, N)}, got {self.density.shape}")
        if self.initial_density.shape != (N,):
            raise ValidationError("initial density must have one value per node")
        if np.any(self.density < 0):
            raise ValidationError("kernel density must be nonnegative")
        w = self.grid.weights
        rows = self.density @ w
        bad = np.flatnonzero(np.abs(rows - 1.0) > _STOCHASTIC_TOL)
        if bad.size:
            raise ValidationError(
                f"kernel row {bad[0]} integrates to {rows[bad[0]]}, not 1")
        inflow = self.density.T @ w
        bad = np.flatnonzero(inflow <= 0)
        if bad.size:
            raise ValidationError(f"node {bad[0]} is unreachable (no incoming transition mass)")
        if np.any(self.initial_density <= 0):
            raise ValidationError("initial density must be positive at every node")
        mass = float(self.initial_density @ w)
        if abs(mass - 1.0) > _STOCHASTIC_TOL:
            raise ValidationError(f"initial density integrates to {mass}, not 1")

    @property
    def weighted(self) -> np.ndarray:
        """``density * weights[None, :]``: row-stochastic transition matrix."""
        return self.density * self.grid.weights[None, :]

    @property
    def weighted_inflow(self) -> np.ndarray:
        """``Q[l, s] = g(l | s) w[s]``: mass flowing into ``l`` from ``s``."""
        return self.density.T * self.grid.weights[None, :]

    def label_transition_matrix(self) -> np.ndarray:
        """Label-to-label transition probabilities seen from each source node."""
        comp = self.grid.component_index()
        ncomp = len(self.grid.components)
        P = self.weighted
        out = np.zeros((self.grid.size, ncomp))
        for j in range(ncomp):
            out[:, j] = P[:, comp == j].sum(axis=1)
        return out


def _uniform_initial(grid: GridSpace) -> np.ndarray:
    return np.full(grid.size, 1.0 / grid.total_measure)


def _normalize_rows(grid: GridSpace, density: np.ndarray):
    rows = density @ grid.weights
    if np.any(rows <= 0):
        bad = int(np.flatnonzero(rows <= 0)[0])
        raise ValidationError(f"kernel row {bad} has no mass")
    dev = np.abs(rows - 1.0)
    if np.any(dev > _RESCALE_WARN):
        warnings.warn(
            f"kernel rows rescaled by up to {dev.max():.3e} to restore stochasticity",
            RuntimeWarning, stacklevel=3)
    return density / rows[:, None], rows


def _initial_from_label_mass(grid: GridSpace, label_mass) -> np.ndarray:
    label_mass = np.asarray(label_mass, dtype=float)
    if label_mass.shape != (len(grid.components),):
        raise ValidationError("initial label masses must have one entry per component")
    if np.any(label_mass <= 0):
        raise ValidationError("initial density must be positive at every node")
    if abs(label_mass.sum() - 1.0) > _STOCHASTIC_TOL:
        raise ValidationError("initial label masses must sum to 1")
    comp = grid.component_index()
    lengths = np.array([c.length for c in grid.components])
    return label_mass[comp] / lengths[comp]


def build_mode_block_kernel(grid: GridSpace, mode_matrix, initial_density=None) -> TransitionKernel:
    """Kernel that jumps between labels with ``mode_matrix`` and draws the
    target coordinate uniformly on the target interval.

    ``density(s | l) = P[label(l), label(s)] / length(label(s))``, so on unit
    intervals the density equals the label transition probability.

    ``initial_density`` may be ``None`` (uniform over the whole space), a
    per-component probability vector, or a per-node density array.
    """
    P = np.asarray(mode_matrix, dtype=float)
    ncomp = len(grid.components)
    if P.shape != (ncomp, ncomp):
        raise ValidationError(
            f"mode matrix must be {ncomp}x{ncomp} to match the grid components, got {P.shape}")
    if np.any(P < 0):
        raise ValidationError("mode matrix entries must be nonnegative")
    dev = np.abs(P.sum(axis=1) - 1.0)
    if np.any(dev > _STOCHASTIC_TOL):
        i = int(np.argmax(dev))
        raise ValidationError(f"mode matrix row {i} sums to {P[i].sum()}, not 1")

    comp = grid.component_index()
    lengths = np.array([c.length for c in grid.components])
    density = P[comp][:, comp] / lengths[comp][None, :]
    density, rows = _normalize_rows(grid, density)

    if initial_density is None:
        nu = _uniform_initial(grid)
    else:
        nu = np.asarray(initial_density, dtype=float)
        if nu.shape == (ncomp,):
            nu = _initial_from_label_mass(grid, nu)
    return TransitionKernel(grid, _frozen(density), _frozen(nu), _frozen(P), _frozen(rows))


def finite_grid(labels: Sequence, mode_matrix, initial_distribution=None):
    """Grid and kernel for a finite chain under the counting measure.

    Each label becomes a single node of weight 1 (the unit interval with one
    midpoint node), and the density equals the transition probabilities.
    """
    labels = list(labels)
    grid = build_grid([(lab, (0.0, 1.0), 1) for lab in labels], rule="midpoint")
    kernel = build_mode_block_kernel(grid, mode_matrix, initial_distribution)
    return grid, kernel


def kernel_from_density(grid: GridSpace, g: Callable, nu: Callable | None = None) -> TransitionKernel:
    """Discretize a user density ``g(target_label, target_t, source_label, source_t)``.

    Rows are rescaled to integrate to one under the quadrature rule; a
    :class:`RuntimeWarning` is emitted when a factor departs from 1 by more
    than 1e-3.
    """
    L, T = grid.labels, grid.t
    density = np.empty((grid.size, grid.size))
    for i in range(grid.size):
        density[i] = [g(int(L[j]), float(T[j]), int(L[i]), float(T[i])) for j in range(grid.size)]
    if np.any(density < 0):
        raise ValidationError("density function returned negative values")
    density, rows = _normalize_rows(grid, density)
    if nu is None:
        init = _uniform_initial(grid)
    else:
        init = np.array([nu(int(lab), float(tt)) for lab, tt in zip(L, T)], dtype=float)
        mass = init @ grid.weights
        if mass <= 0:
            raise ValidationError("initial density has no mass")
        init = init / mass
    return TransitionKernel(grid, _frozen(density), _frozen(init), None, _frozen(rows))
