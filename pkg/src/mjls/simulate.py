"""Monte Carlo simulation of the jump system.

The chain is sampled in continuous coordinates: from the current node's
kernel row a target cell is drawn by inverse CDF, and the coordinate is
then drawn uniformly inside that cell.  For label-block kernels this is
exactly the continuous chain (uniform target coordinate).  Coefficients are
evaluated from the system's affine parameterization when available, else
the value at the containing grid node is used and the batch is flagged.

Every trajectory ``i`` owns a random stream derived from ``(seed, i)`` so
batches are reproducible and independent of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from .grid import TransitionKernel
from .operators import MjlsSystem


class ChainSampler:
    """Inverse-CDF sampler for the discretized kernel."""

    def __init__(self, kernel: TransitionKernel, seed: int = 0):
        self.kernel = kernel
        self.seed = int(seed)
        grid = kernel.grid
        self._cdf = np.cumsum(kernel.weighted, axis=1)
        self._cdf[:, -1] = 1.0
        init = kernel.initial_density * grid.weights
        self._init_cdf = np.cumsum(init / init.sum())
        self._init_cdf[-1] = 1.0

    def stream(self, i: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(int(i),)))

    def _cell_coordinate(self, nodes, u):
        g = self.kernel.grid
        return g.cell_lo[nodes] + u * (g.cell_hi[nodes] - g.cell_lo[nodes])

    def draw(self, uniforms: np.ndarray, start=None):
        """Vectorized chain paths from pre-drawn uniforms.

        ``uniforms`` has shape ``(n_paths, horizon + 1, 2)``.  Returns node
        indices and continuous coordinates, both ``(n_paths, horizon + 1)``.
        """
        grid = self.kernel.grid
        n_paths, length, _ = uniforms.shape
        nodes = np.empty((n_paths, length), dtype=int)
        coords = np.empty((n_paths, length))
        if start is None:
            nodes[:, 0] = np.searchsorted(self._init_cdf, uniforms[:, 0, 0], side="right")
            np.minimum(nodes[:, 0], grid.size - 1, out=nodes[:, 0])
            coords[:, 0] = self._cell_coordinate(nodes[:, 0], uniforms[:, 0, 1])
        else:
            label, t = start
            nodes[:, 0] = grid.locate(int(label), float(t))
            coords[:, 0] = float(t)
        for k in range(1, length):
            rows = self._cdf[nodes[:, k - 1]]
            idx = (rows < uniforms[:, k, 0][:, None]).sum(axis=1)
            nodes[:, k] = np.minimum(idx, grid.size - 1)
            coords[:, k] = self._cell_coordinate(nodes[:, k], uniforms[:, k, 1])
        return nodes, coords


def sample_chain(sampler: ChainSampler, horizon: int, start=None, stream: int = 0):
    """One path of length ``horizon + 1`` as ``(labels, t)`` arrays.

    ``start`` is an optional ``(label, t)``; otherwise the initial density is
    sampled.
    """
    u = sampler.stream(stream).random((1, horizon + 1, 2))
    nodes, coords = sampler.draw(u, start)
    return sampler.kernel.grid.labels[nodes[0]], coords[0]


@dataclass
class TrajectoryBatch:
    """Simulated paths; arrays are indexed ``[trajectory, k, ...]``.

    ``v`` is shared by all trajectories with shape ``(horizon + 1, r)``.
    """

    labels: np.ndarray
    t: np.ndarray
    nodes: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    horizon: int
    disturbance: str = ""
    grid_interpolated: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.x.shape[0]


def _coefficients(system, nodes, coords):
    if system.model is not None:
        labels = system.grid.labels[nodes]
        return tuple(system.model.evaluate(nm, labels, coords) for nm in "ABCD"), False
    return tuple(getattr(system, nm).values[nodes] for nm in "ABCD"), True


def disturbance_values(disturbance, horizon: int, r: int) -> np.ndarray:
    """Evaluate ``disturbance(k)`` for ``k = 0..horizon`` as a ``(horizon+1, r)`` array."""
    if disturbance is None:
        return np.zeros((horizon + 1, r))
    if callable(disturbance):
        vals = [np.broadcast_to(np.asarray(disturbance(k), dtype=float).reshape(-1), (r,))
                for k in range(horizon + 1)]
        return np.array(vals)
    arr = np.asarray(disturbance, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    out = np.zeros((horizon + 1, r))
    m = min(horizon + 1, arr.shape[0])
    out[:m] = np.broadcast_to(arr[:m], (m, r))
    return out


def simulate_phi(system: MjlsSystem, sampler: ChainSampler, x0, disturbance: Callable | None,
                 horizon: int, n_traj: int, start=None, label: str = "") -> TrajectoryBatch:
    """Simulate ``n_traj`` independent trajectories over ``k = 0..horizon``.

    ``disturbance`` maps ``k`` to a vector in ``R^r`` (or is an array of
    values, or ``None`` for zero input).  ``start`` fixes the initial mode.
    """
    if sampler.kernel is not system.kernel:
        raise ValidationError("sampler kernel differs from the system kernel")
    if horizon < 0 or n_traj < 1:
        raise ValidationError("need horizon >= 0 and at least one trajectory")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (system.n,):
        raise ValidationError(f"x0 must have {system.n} entries")

    u = np.stack([sampler.stream(i).random((horizon + 1, 2)) for i in range(n_traj)])
    nodes, coords = sampler.draw(u, start)
    (A, B, C, D), interp = _coefficients(system, nodes, coords)
    v = disturbance_values(disturbance, horizon, system.r)

    x = np.empty((n_traj, horizon + 1, system.n))
    y = np.empty((n_traj, horizon + 1, system.m))
    x[:, 0] = x0
    for k in range(horizon + 1):
        xk = x[:, k, :, None]
        vk = np.broadcast_to(v[k][:, None], (n_traj, system.r, 1))
        y[:, k] = (C[:, k] @ xk + D[:, k] @ vk)[..., 0]
        if k < horizon:
            x[:, k + 1] = (A[:, k] @ xk + B[:, k] @ vk)[..., 0]
    return TrajectoryBatch(system.grid.labels[nodes], coords, nodes, x, y, v, horizon,
                           label, interp, {"seed": sampler.seed})


@dataclass
class EnergyCurve:
    k: np.ndarray
    y_energy: np.ndarray
    v_energy: np.ndarray
    ratio: np.ndarray

    def rows(self, dt: float = 1.0):
        """``(time, v_energy, y_energy, ratio)`` rows; undefined ratios are ``None``."""
        for k, ye, ve, q in zip(self.k, self.y_energy, self.v_energy, self.ratio):
            yield k * dt, float(ve), float(ye), (None if np.isnan(q) else float(q))


def energy_ratio_curve(batch: TrajectoryBatch) -> EnergyCurve:
    """Cumulative output and input energies averaged over trajectories and
    the square root of their ratio at every time ``s``.

    Times where the input energy is still zero get ``nan`` as ratio.
    """
    y_energy = np.cumsum((batch.y ** 2).sum(axis=2), axis=1).mean(axis=0)
    v_energy = np.cumsum((batch.v ** 2).sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(v_energy > 0, np.sqrt(y_energy / np.where(v_energy > 0, v_energy, 1.0)), np.nan)
    return EnergyCurve(np.arange(batch.horizon + 1), y_energy, v_energy, ratio)


def _bucket_mask(batch, bucket):
    if bucket is None:
        return np.ones(batch.n_traj, dtype=bool)
    label, lo, hi = bucket
    return (batch.labels[:, 0] == label) & (batch.t[:, 0] >= lo) & (batch.t[:, 0] <= hi)


def empirical_second_moment(batch: TrajectoryBatch, bucket=None):
    """Per-step mean of ``x(k) x(k)'``.

    ``bucket = (label, lo, hi)`` restricts to trajectories whose initial mode
    falls in that cell.  Returns ``None`` for an empty bucket.
    """
    mask = _bucket_mask(batch, bucket)
    if not mask.any():
        return None
    x = batch.x[mask]
    return np.einsum("tki,tkj->kij", x, x) / x.shape[0]


def second_moment_trace_stats(batch: TrajectoryBatch, bucket=None):
    """Mean and standard error of ``||x(k)||^2`` across trajectories."""
    mask = _bucket_mask(batch, bucket)
    if not mask.any():
        return None, None
    sq = (batch.x[mask] ** 2).sum(axis=2)
    n = sq.shape[0]
    se = sq.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(sq.shape[1], np.inf)
    return sq.mean(axis=0), se
