"""Coupled Riccati equations for disturbance attenuation.

The Riccati map used by both horizons is ::

    R(U) = psi1(U) - psi2(U) psi3(U)^{-1} psi2(U)'

The finite-horizon equation runs it backward from ``Y(T+1) = 0``; the
forward recursion ``K(k+1) = R(K(k))``, ``K(0) = 0`` yields the same
sequence reversed in time, and its limit solves the algebraic equation
``K = R(K)``.  Every step requires ``psi3 < 0`` at every node.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PremiseError, SignConditionError, ValidationError
from .fields import MatrixField, norm_inf, symmetrize
from .operators import (MjlsSystem, T_op, check_sign, gain_from_blocks, riccati_blocks,
                        spectral_radius)

log = logging.getLogger(__name__)

PSD_SLACK = 1e-10


def _step(system, U, gamma, sign_tol, step=None):
    b = riccati_blocks(system, U, gamma)
    margins = check_sign(b, sign_tol, step)
    corr = b.psi2 @ np.linalg.solve(b.psi3, np.swapaxes(b.psi2, 1, 2))
    return symmetrize(b.psi1 - corr), float(margins.min()), b


def riccati_map(system: MjlsSystem, U: MatrixField, gamma: float, sign_tol: float = 0.0) -> MatrixField:
    """One application of ``R``; raises :class:`SignConditionError` on failure."""
    out, _, _ = _step(system, U.values, gamma, sign_tol)
    return MatrixField(system.grid, out, True)


def _min_eig(values):
    return float(np.linalg.eigvalsh(values)[:, 0].min())


@dataclass
class DreSolution:
    """Backward solution ``Y(0..T+1)``; ``sign_margins[k]`` is the smallest
    eigenvalue of ``-psi3(Y(k+1))`` over nodes."""

    horizon: int
    Y: list
    gamma: float
    sign_margins: np.ndarray

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([_min_eig(y.values) for y in self.Y])

    def to_json_dict(self) -> dict:
        return {"horizon": self.horizon, "gamma": self.gamma,
                "sign_margins": self.sign_margins.tolist(),
                "min_eigenvalues": self.min_eigenvalues().tolist()}


def solve_dre(system: MjlsSystem, gamma: float, T: int, sign_tol: float = 0.0) -> DreSolution:
    """Backward recursion ``Y(k) = R(Y(k+1))`` for ``k = T..0`` with ``Y(T+1) = 0``.

    Raises :class:`SignConditionError` naming the step and node where the
    sign condition first fails; that failure means the finite-horizon gain
    is not below ``gamma``.
    """
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    if T < 0:
        raise ValidationError("horizon must be nonnegative")
    n = system.n
    Y = [None] * (T + 2)
    Y[T + 1] = MatrixField.zeros(system.grid, n)
    margins = np.empty(T + 1)
    cur = Y[T + 1].values
    for k in range(T, -1, -1):
        cur, margins[k], _ = _step(system, cur, gamma, sign_tol, step=k)
        Y[k] = MatrixField(system.grid, cur, True)
    return DreSolution(T, Y, gamma, margins)


def forward_iterate(system: MjlsSystem, gamma: float, steps: int, sign_tol: float = 0.0) -> list:
    """``[K(0), ..., K(steps)]`` with ``K(0) = 0`` and ``K(k+1) = R(K(k))``."""
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    K = [MatrixField.zeros(system.grid, system.n)]
    cur = K[0].values
    for k in range(steps):
        cur, _, _ = _step(system, cur, gamma, sign_tol, step=k)
        K.append(MatrixField(system.grid, cur, True))
    return K


@dataclass
class AreSolution:
    K: MatrixField
    gamma: float
    iterations: int
    residual_inf: float
    sign_margin: float
    closed_loop_radius: float
    stabilizing: bool
    last_increment: float = 0.0
    min_eigenvalue: float = 0.0
    gain: MatrixField | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {"gamma": self.gamma, "iterations": self.iterations,
                "residual_inf": self.residual_inf, "sign_margin": self.sign_margin,
                "closed_loop_radius": self.closed_loop_radius,
                "stabilizing": self.stabilizing, "last_increment": self.last_increment,
                "min_eigenvalue": self.min_eigenvalue}


def _node_diff(X, Y):
    return np.linalg.norm(X - Y, ord=2, axis=(1, 2))


def _iterate_literal(system, gamma, eps, max_rounds, sign_tol):
    # Double run from zero for horizons T and T+1 each round.
    n, N = system.n, system.grid.size
    zero = np.zeros((N, n, n))
    diff = np.inf
    for T in range(1, max_rounds + 1):
        Y = zero
        for _ in range(T):
            Y, _, _ = _step(system, Y, gamma, sign_tol)
        X = zero
        for _ in range(T + 1):
            X, _, _ = _step(system, X, gamma, sign_tol)
        diff = _node_diff(Y, X).max()
        if diff < eps:
            return X, T, diff
    raise ConvergenceError(
        f"Riccati iteration did not converge in {max_rounds} rounds (last increment {diff:.3e})",
        report={"rounds": max_rounds, "last_increment": float(diff)})


def _iterate_incremental(system, gamma, eps, max_rounds, sign_tol):
    n, N = system.n, system.grid.size
    Y, _, _ = _step(system, np.zeros((N, n, n)), gamma, sign_tol)
    X, _, _ = _step(system, Y, gamma, sign_tol)
    diff = np.inf
    for T in range(1, max_rounds + 1):
        diff = _node_diff(Y, X).max()
        if diff < eps:
            return X, T, diff
        Y = X
        X, _, _ = _step(system, Y, gamma, sign_tol)
    raise ConvergenceError(
        f"Riccati iteration did not converge in {max_rounds} rounds (last increment {diff:.3e})",
        report={"rounds": max_rounds, "last_increment": float(diff)})


def solve_are(system: MjlsSystem, gamma: float, eps: float = 1e-5, max_rounds: int = 100000,
              literal: bool = False, sign_tol: float = 0.0) -> AreSolution:
    """Solve ``K = R(K)`` by the forward recursion from zero.

    Round ``T`` compares the ``T``-step and ``(T+1)``-step iterates and stops
    once their node-wise spectral distance is below ``eps`` at every node.
    ``literal=True`` recomputes both iterates from zero in every round; the
    default reuses the previous iterate, which produces the same sequence.

    The returned solution also carries the stationary residual, the sign
    margin of ``psi3(K)`` and the spectral radius of ``T`` for the
    closed loop ``A + B F(K)``.

    Raises
    ------
    SignConditionError
        ``psi3`` lost negativity: the attenuation level ``gamma`` is not met.
    ConvergenceError
        ``max_rounds`` exhausted.
    """
    if gamma <= 0 or eps <= 0:
        raise ValidationError("gamma and eps must be positive")
    runner = _iterate_literal if literal else _iterate_incremental
    Kv, rounds, diff = runner(system, gamma, eps, max_rounds, sign_tol)
    K = MatrixField(system.grid, Kv, True)
    nxt, margin, blocks = _step(system, Kv, gamma, sign_tol)
    residual = float(_node_diff(Kv, nxt).max())
    F = gain_from_blocks(blocks)
    closed = MatrixField(system.grid, system.A.values + system.B.values @ F)
    r_cl, _ = spectral_radius(T_op(system, closed))
    log.debug("solve_are: gamma=%g rounds=%d residual=%.3e r_cl=%.6f", gamma, rounds, residual, r_cl)
    return AreSolution(K, gamma, rounds, residual, margin, r_cl, r_cl < 1.0, float(diff),
                       _min_eig(Kv), MatrixField(system.grid, F))


@dataclass
class BrlVerdict:
    """Outcome of a bounded-real-lemma check.

    ``feasible`` true certifies the attenuation level ``gamma`` (and, in the
    infinite-horizon case, internal stability).
    """

    feasible: bool
    gamma: float
    checks: dict = field(default_factory=dict)
    reason: str = ""
    failed_step: int | None = None
    failed_node: int | None = None

    def to_json_dict(self) -> dict:
        return {"feasible": self.feasible, "gamma": self.gamma, "checks": dict(self.checks),
                "reason": self.reason, "failed_step": self.failed_step,
                "failed_node": self.failed_node}


def verify_brl_infinite(system: MjlsSystem, gamma: float, solution: AreSolution,
                        tol_res: float | None = None, eps: float = 1e-5) -> BrlVerdict:
    """Accept ``solution`` when the residual is small, ``K`` is PSD, the sign
    margin is positive and the induced closed loop is conditioned-stable."""
    tol_res = 100 * eps if tol_res is None else tol_res
    checks = {
        "residual": solution.residual_inf < tol_res,
        "psd": solution.min_eigenvalue >= -PSD_SLACK,
        "sign": solution.sign_margin > 0.0,
        "stabilizing": solution.closed_loop_radius < 1.0,
    }
    ok = all(checks.values())
    reason = "" if ok else "failed: " + ", ".join(k for k, v in checks.items() if not v)
    return BrlVerdict(ok, gamma, checks, reason)


def check_finite_brl(system: MjlsSystem, gamma: float, T: int) -> BrlVerdict:
    """Finite-horizon test: the backward recursion completes with positive
    sign margins and PSD iterates."""
    try:
        sol = solve_dre(system, gamma, T)
    except SignConditionError as exc:
        return BrlVerdict(False, gamma, {"sign": False}, str(exc), exc.step, exc.node)
    psd = bool(sol.min_eigenvalues().min() >= -PSD_SLACK)
    sign = bool(np.all(sol.sign_margins > 0))
    ok = psd and sign
    return BrlVerdict(ok, gamma, {"sign": sign, "psd": psd}, "" if ok else "iterate not PSD")


def are_feasible(system: MjlsSystem, gamma: float, eps: float = 1e-5,
                 max_rounds: int = 100000) -> BrlVerdict:
    """Run :func:`solve_are` and :func:`verify_brl_infinite`, turning solver
    failures into an infeasible verdict."""
    try:
        sol = solve_are(system, gamma, eps, max_rounds)
    except SignConditionError as exc:
        return BrlVerdict(False, gamma, {"sign": False}, str(exc), exc.step, exc.node)
    except ConvergenceError as exc:
        return BrlVerdict(False, gamma, {"converged": False}, str(exc))
    return verify_brl_infinite(system, gamma, sol, eps=eps)


def hinf_bisection(system: MjlsSystem, gamma_lo: float, gamma_hi: float, tol_gamma: float = 1e-3,
                   eps: float = 1e-5, max_rounds: int = 100000):
    """Bracket the smallest attenuation level certified by the infinite-horizon test.

    Requires infeasibility at ``gamma_lo`` and feasibility at ``gamma_hi``.
    Returns ``(lo, hi)`` with ``hi - lo <= tol_gamma``; ``hi`` is an upper
    estimate of the worst-case gain.
    """
    if not gamma_lo < gamma_hi:
        raise PremiseError(f"degenerate bracket [{gamma_lo}, {gamma_hi}]")
    if gamma_lo <= 0 or tol_gamma <= 0:
        raise PremiseError("bracket and tolerance must be positive")
    if not np.any(system.B.values) and not np.any(system.D.values):
        raise PremiseError("no disturbance channel (B = 0 and D = 0): the gain is zero")
    if not are_feasible(system, gamma_hi, eps, max_rounds).feasible:
        raise PremiseError(f"upper level {gamma_hi} is not feasible")
    if are_feasible(system, gamma_lo, eps, max_rounds).feasible:
        raise PremiseError(f"lower level {gamma_lo} is already feasible")
    lo, hi = gamma_lo, gamma_hi
    while hi - lo > tol_gamma:
        mid = 0.5 * (lo + hi)
        if are_feasible(system, mid, eps, max_rounds).feasible:
            hi = mid
        else:
            lo = mid
    return lo, hi


def closed_loop_lyapunov_margin(system: MjlsSystem, gain: MatrixField, Y: MatrixField) -> float:
    """Smallest node eigenvalue of ``Y - T_{A+BF}(Y) - I`` for a given gain."""
    from .stability import check_lyapunov_inequality

    closed = system.with_A(MatrixField(system.grid, system.A.values + system.B.values @ gain.values))
    return check_lyapunov_inequality(closed, Y, 1.0).min_eigenvalue_over_nodes
