"""Mean-square stability tests.

Two notions are distinguished: stability with conditioning on the initial
mode (EMSS-C), decided by the spectral radius of ``T_A``, and unconditional
mean-square stability (EMSS), decided by the spectral radius of ``L_A``.
Lyapunov-type equations and inequalities for ``T_A`` give certificates for
the conditioned notion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, UnstableError, ValidationError
from .fields import MatrixField, OrderingCertificate, norm_inf, uniform_psd_margin
from .operators import (MjlsSystem, apply_T, densify, field_to_vector, spectral_radius,
                        L_op, T_op, vector_to_field)

EPS_SPECTRAL = 1e-9


@dataclass
class StabilityReport:
    emss_c_verdict: bool | None = None
    emss_verdict: bool | None = None
    r_sigma_T: float | None = None
    r_sigma_L: float | None = None
    lyapunov_solution: MatrixField | None = None
    lyapunov_margin: float | None = None
    method_tags: list = field(default_factory=list)
    inconclusive: bool = False
    iterations: dict = field(default_factory=dict)

    def consistent(self) -> bool:
        """Conditioned stability must imply unconditional stability."""
        if self.emss_c_verdict and self.emss_verdict is not None:
            return bool(self.emss_verdict)
        return True

    def to_json_dict(self) -> dict:
        return {
            "emss_c_verdict": self.emss_c_verdict,
            "emss_verdict": self.emss_verdict,
            "r_sigma_T": self.r_sigma_T,
            "r_sigma_L": self.r_sigma_L,
            "lyapunov_margin": self.lyapunov_margin,
            "method_tags": list(self.method_tags),
            "inconclusive": self.inconclusive,
            "iterations": dict(self.iterations),
            "consistent": self.consistent(),
        }


def _verdict(r: float, eps: float):
    """``(stable, inconclusive)``; estimates within ``eps`` of 1 are not
    trusted either way and count as not stable."""
    return r < 1.0 - eps, abs(r - 1.0) <= eps


def check_emss_c(system: MjlsSystem, tol: float = 1e-10, eps_spectral: float = EPS_SPECTRAL,
                 report: StabilityReport | None = None) -> StabilityReport:
    """Spectral test ``r(T_A) < 1``."""
    report = report or StabilityReport()
    r, its = spectral_radius(T_op(system), tol=tol)
    report.r_sigma_T = r
    report.emss_c_verdict, inc = _verdict(r, eps_spectral)
    report.inconclusive = report.inconclusive or inc
    report.iterations["T"] = its
    report.method_tags.append("spectral:T_A")
    return report


def check_emss(system: MjlsSystem, tol: float = 1e-10, eps_spectral: float = EPS_SPECTRAL,
               report: StabilityReport | None = None) -> StabilityReport:
    """Spectral test ``r(L_A) < 1``."""
    report = report or StabilityReport()
    r, its = spectral_radius(L_op(system), tol=tol)
    report.r_sigma_L = r
    report.emss_verdict, inc = _verdict(r, eps_spectral)
    report.inconclusive = report.inconclusive or inc
    report.iterations["L"] = its
    report.method_tags.append("spectral:L_A")
    return report


def analyze_stability(system: MjlsSystem, tol: float = 1e-10, eps_spectral: float = EPS_SPECTRAL,
                      with_lyapunov: bool = True) -> StabilityReport:
    """Both spectral tests plus, when conditioned-stable, a Lyapunov certificate
    ``U - T_A(U) = I`` whose uniform positivity margin is reported."""
    report = check_emss_c(system, tol, eps_spectral)
    check_emss(system, tol, eps_spectral, report)
    if with_lyapunov and report.emss_c_verdict:
        V = MatrixField.identity(system.grid, system.n)
        U = solve_lyapunov_T(system, V, r_sigma=report.r_sigma_T)
        report.lyapunov_solution = U
        report.lyapunov_margin = check_lyapunov_inequality(system, U).min_eigenvalue_over_nodes
        report.method_tags.append("lyapunov:neumann")
    return report


def _neumann(system, V, tol, max_iter):
    U = V.values.copy()
    term = V
    for it in range(1, max_iter + 1):
        term = apply_T(system.kernel, system.A, term)
        U += term.values
        if norm_inf(term) < tol:
            return MatrixField(system.grid, U, True), it
    raise ConvergenceError(
        f"Neumann series did not reach increment {tol} in {max_iter} terms "
        f"(last increment {norm_inf(term):.3e})")


def solve_lyapunov_T(system: MjlsSystem, V: MatrixField, tol: float = 1e-12,
                     max_iter: int = 1_000_000, r_sigma: float | None = None) -> MatrixField:
    """Solve ``U - T_A(U) = V`` by summing ``sum_k T_A^k(V)``.

    The series is cut once the increment drops below ``tol`` in sup-norm.
    Raises :class:`UnstableError` when ``r(T_A) >= 1``.
    """
    if not V.symmetric or V.shape != (system.n, system.n):
        raise ValidationError("right-hand side must be a symmetric n x n field")
    if r_sigma is None:
        r_sigma, _ = spectral_radius(T_op(system))
    if r_sigma >= 1.0:
        raise UnstableError(
            f"r(T_A) = {r_sigma:.6g} >= 1: unstable, Lyapunov equation has no positive "
            "solution in the Neumann sense", spectral_radius=r_sigma)
    U, _ = _neumann(system, V, tol, max_iter)
    return U


def solve_lyapunov_direct(system: MjlsSystem, V: MatrixField, budget: int = 20000) -> MatrixField:
    """Dense linear solve of ``(I - T_A) U = V``; small grids only."""
    M = densify(T_op(system), budget)
    x = np.linalg.solve(np.eye(M.shape[0]) - M, field_to_vector(V))
    return vector_to_field(system.grid, x, system.n)


def lyapunov_residual(system: MjlsSystem, U: MatrixField, V: MatrixField) -> float:
    """``||U - T_A(U) - V||_inf``."""
    return norm_inf(U - apply_T(system.kernel, system.A, U) - V)


def check_lyapunov_inequality(system: MjlsSystem, U: MatrixField,
                              xi: float | None = None) -> OrderingCertificate:
    """Certificate for ``U - T_A(U) >= xi I`` at every node.

    With ``xi=None`` the largest admissible ``xi`` is returned as the
    certificate value (threshold 0).  A uniformly positive definite ``U``
    with a positive margin certifies conditioned stability.
    """
    if not U.symmetric:
        raise ValidationError("U must be symmetric")
    gap = U - apply_T(system.kernel, system.A, U)
    if xi is None:
        return uniform_psd_margin(gap.symmetrized(), 0.0)
    shifted = gap - MatrixField.constant(system.grid, xi * np.eye(system.n))
    cert = uniform_psd_margin(shifted.symmetrized(), 0.0)
    return OrderingCertificate(cert.min_eigenvalue_over_nodes, cert.argmin_node, 0.0, strict=False)


def solve_output_lyapunov(system: MjlsSystem, tol: float = 1e-12,
                          max_iter: int = 1_000_000) -> MatrixField:
    """Solve ``U - T_A(U) = C'C``; the solution is only positive semidefinite."""
    CtC = MatrixField(system.grid, np.swapaxes(system.C.values, 1, 2) @ system.C.values, True)
    return solve_lyapunov_T(system, CtC, tol, max_iter)


def decay_profile_T(system: MjlsSystem, k_max: int) -> np.ndarray:
    """``[||T_A^k(I)||_inf for k = 0..k_max]``."""
    X = MatrixField.identity(system.grid, system.n)
    out = [norm_inf(X)]
    for _ in range(k_max):
        X = apply_T(system.kernel, system.A, X)
        out.append(norm_inf(X))
    return np.array(out)


def fit_decay(profile, k_min: int = 0):
    """Least-squares fit ``log p_k = log beta + k log alpha``.

    Returns ``(beta, alpha)``; a profile that hits exactly zero yields
    ``alpha = 0``.
    """
    p = np.asarray(profile, dtype=float)
    k = np.arange(p.size)
    keep = (k >= k_min) & (p > 0)
    if keep.sum() < p.size - k_min:
        return float(p[0]), 0.0
    if keep.sum() < 2:
        return float(p[k_min]), 0.0
    slope, intercept = np.polyfit(k[keep], np.log(p[keep]), 1)
    return float(np.exp(intercept)), float(np.exp(slope))
