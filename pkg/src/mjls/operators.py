"""Positive operators on matrix fields and the Riccati building blocks.

Notation on a grid with nodes ``l, s``, weights ``w`` and density
``g[l, s] = g(s | l)``::

    E(U)(l)    = sum_s g[l, s] w[s] U(s)
    T_K(U)(l)  = K(l)' E(U)(l) K(l)
    L_K(V)(l)  = sum_s g[s, l] w[s] K(s) V(s) K(s)'

``L_K`` propagates second moments forward in time, ``T_K`` is its adjoint
under :func:`mjls.fields.pairing`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ConvergenceError, SignConditionError, ValidationError
from .fields import MatrixField, norm_inf, pairing, symmetrize
from .grid import GridSpace, TransitionKernel

CDT_TOL = 1e-10
DENSE_BUDGET = 20000


@dataclass(frozen=True)
class CoefficientModel:
    """Affine-in-``t`` parameterization ``M(i, t) = M_i0 + t (M_i1 - M_i0)``.

    ``pieces[name][label] = (M_at_0, M_at_1)`` for ``name`` in ``A, B, C, D``.
    Used to evaluate coefficients at continuous coordinates during
    simulation and to rebuild configs.
    """

    pieces: dict

    def evaluate(self, name: str, labels: np.ndarray, t: np.ndarray) -> np.ndarray:
        table = self.pieces[name]
        labels = np.asarray(labels)
        t = np.asarray(t, dtype=float)
        first = next(iter(table.values()))[0]
        out = np.empty(labels.shape + first.shape)
        for lab, (m0, m1) in table.items():
            mask = labels == lab
            if np.any(mask):
                out[mask] = m0 + t[mask][:, None, None] * (m1 - m0)
        return out

    def sample(self, grid: GridSpace, name: str) -> MatrixField:
        return MatrixField(grid, self.evaluate(name, grid.labels, grid.t))


@dataclass(frozen=True, eq=False)
class MjlsSystem:
    """Coefficient fields of ``x(k+1) = A x + B v``, ``y = C x + D v``
    together with the grid and transition kernel of the jump process."""

    grid: GridSpace
    kernel: TransitionKernel
    A: MatrixField
    B: MatrixField
    C: MatrixField
    D: MatrixField
    model: CoefficientModel | None = field(default=None, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.kernel.grid is not self.grid:
            raise ValidationError("kernel and system must share the same grid")
        for nm in "ABCD":
            f = getattr(self, nm)
            if f.grid is not self.grid:
                raise ValidationError(f"field {nm} is not defined on the system grid")
            if not np.all(np.isfinite(f.values)):
                raise ValidationError(f"field {nm} has non-finite entries")
        n, r, m = self.n, self.r, self.m
        if self.A.shape != (n, n):
            raise ValidationError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, r):
            raise ValidationError(f"B must be {n}x{r}, got {self.B.shape}")
        if self.C.shape != (m, n):
            raise ValidationError(f"C must be {m}x{n}, got {self.C.shape}")
        if self.D.shape != (m, r):
            raise ValidationError(f"D must be {m}x{r}, got {self.D.shape}")
        cd = np.abs(np.swapaxes(self.C.values, 1, 2) @ self.D.values).max(initial=0.0)
        if cd > CDT_TOL:
            raise ValidationError(f"C'D must vanish at every node (max |C'D| = {cd:.3e})")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def r(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @classmethod
    def from_fields(cls, kernel, A, B=None, C=None, D=None, model=None, name=""):
        """Build a system filling missing channels with zeros (``r = m = 1``)."""
        grid = kernel.grid
        n = A.shape[0]
        B = B if B is not None else MatrixField.zeros(grid, n, 1)
        C = C if C is not None else MatrixField.zeros(grid, 1, n)
        D = D if D is not None else MatrixField.zeros(grid, C.shape[0], B.shape[1])
        return cls(grid, kernel, A, B, C, D, model, name)

    def with_A(self, A: MatrixField) -> "MjlsSystem":
        return MjlsSystem(self.grid, self.kernel, A, self.B, self.C, self.D, None, self.name)


# ---------------------------------------------------------------------------
# core operators

def _vals(F):
    return F.values if isinstance(F, MatrixField) else np.asarray(F, dtype=float)


def _expect(kernel: TransitionKernel, U: np.ndarray) -> np.ndarray:
    P = kernel.weighted
    N = P.shape[0]
    return (P @ U.reshape(N, -1)).reshape(U.shape)


def apply_E(kernel: TransitionKernel, U: MatrixField) -> MatrixField:
    """Conditional expectation ``E(U)(l) = sum_s g(s|l) U(s) w(s)``."""
    if len(U) != kernel.grid.size:
        raise ValidationError("field and kernel grids differ")
    out = _expect(kernel, U.values)
    if U.symmetric:
        return MatrixField(kernel.grid, symmetrize(out), True)
    return MatrixField(kernel.grid, out)


def apply_T(kernel: TransitionKernel, K: MatrixField, U: MatrixField) -> MatrixField:
    """``T_K(U)(l) = K(l)' E(U)(l) K(l)``."""
    if U.shape != (K.shape[0], K.shape[0]):
        raise ValidationError(f"T_K: K is {K.shape}, U is {U.shape}")
    EU = _expect(kernel, U.values)
    Kv = K.values
    out = np.swapaxes(Kv, 1, 2) @ EU @ Kv
    return MatrixField(kernel.grid, symmetrize(out), True)


def apply_L(kernel: TransitionKernel, K: MatrixField, V: MatrixField) -> MatrixField:
    """``L_K(V)(l) = sum_s g(l|s) K(s) V(s) K(s)' w(s)``."""
    if V.shape != (K.shape[1], K.shape[1]):
        raise ValidationError(f"L_K: K is {K.shape}, V is {V.shape}")
    Kv = K.values
    KVK = Kv @ V.values @ np.swapaxes(Kv, 1, 2)
    Q = kernel.weighted_inflow
    N = Q.shape[0]
    out = (Q @ KVK.reshape(N, -1)).reshape(KVK.shape)
    return MatrixField(kernel.grid, symmetrize(out), True)


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    """A linear operator on symmetric fields: ``kind`` is ``"L"``, ``"T"`` or ``"E"``."""

    kind: str
    kernel: TransitionKernel
    K: MatrixField | None = None

    def __post_init__(self):
        if self.kind not in ("L", "T", "E"):
            raise ValidationError(f"unknown operator kind {self.kind!r}")
        if self.kind != "E" and self.K is None:
            raise ValidationError(f"operator {self.kind} needs a coefficient field")
        if self.K is not None and self.K.shape[0] != self.K.shape[1]:
            raise ValidationError("operator coefficient must be square")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def __call__(self, X: MatrixField) -> MatrixField:
        if self.kind == "L":
            return apply_L(self.kernel, self.K, X)
        if self.kind == "T":
            return apply_T(self.kernel, self.K, X)
        return apply_E(self.kernel, X)

    def dim(self, n: int | None = None) -> int:
        n = self.n if n is None else n
        return self.kernel.grid.size * n * (n + 1) // 2


def L_op(system: MjlsSystem, K: MatrixField | None = None) -> OperatorHandle:
    return OperatorHandle("L", system.kernel, system.A if K is None else K)


def T_op(system: MjlsSystem, K: MatrixField | None = None) -> OperatorHandle:
    return OperatorHandle("T", system.kernel, system.A if K is None else K)


# ---------------------------------------------------------------------------
# Riccati blocks

def psi1(system: MjlsSystem, U: MatrixField) -> MatrixField:
    """``T_A(U) + C'C``."""
    CtC = np.swapaxes(system.C.values, 1, 2) @ system.C.values
    return MatrixField(system.grid, apply_T(system.kernel, system.A, U).values + CtC, True)


def psi2(system: MjlsSystem, U: MatrixField) -> MatrixField:
    """``A' E(U) B``."""
    EU = _expect(system.kernel, U.values)
    return MatrixField(system.grid, np.swapaxes(system.A.values, 1, 2) @ EU @ system.B.values)


def psi3(system: MjlsSystem, U: MatrixField, gamma: float) -> MatrixField:
    """``T_B(U) + D'D - gamma^2 I``."""
    DtD = np.swapaxes(system.D.values, 1, 2) @ system.D.values
    out = apply_T(system.kernel, system.B, U).values + DtD - gamma ** 2 * np.eye(system.r)
    return MatrixField(system.grid, out, True)


@dataclass
class RiccatiBlocks:
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: np.ndarray

    @property
    def sign_margins(self) -> np.ndarray:
        """Per-node smallest eigenvalue of ``-psi3``."""
        return -np.linalg.eigvalsh(self.psi3)[:, -1]


def riccati_blocks(system: MjlsSystem, U: np.ndarray, gamma: float) -> RiccatiBlocks:
    """All three blocks from a single conditional expectation of ``U``."""
    A, B, C, D = (system.A.values, system.B.values, system.C.values, system.D.values)
    At, Bt = np.swapaxes(A, 1, 2), np.swapaxes(B, 1, 2)
    EU = symmetrize(_expect(system.kernel, U))
    p1 = symmetrize(At @ EU @ A) + np.swapaxes(C, 1, 2) @ C
    p2 = At @ EU @ B
    p3 = symmetrize(Bt @ EU @ B) + np.swapaxes(D, 1, 2) @ D - gamma ** 2 * np.eye(B.shape[2])
    return RiccatiBlocks(p1, p2, p3)


def check_sign(blocks: RiccatiBlocks, sign_tol: float = 0.0, step=None) -> np.ndarray:
    """Raise :class:`SignConditionError` unless ``psi3 < -sign_tol I`` at every node."""
    margins = blocks.sign_margins
    k = int(np.argmin(margins))
    if not margins[k] > sign_tol:
        where = f" at step {step}" if step is not None else ""
        raise SignConditionError(
            f"sign condition violated{where} at node {k}: psi3 has eigenvalue {-margins[k]:.6e}",
            step=step, node=k, max_eigenvalue=float(-margins[k]))
    return margins


def gain_from_blocks(blocks: RiccatiBlocks) -> np.ndarray:
    """``F = -psi3^{-1} psi2'`` by a batched linear solve."""
    return -np.linalg.solve(blocks.psi3, np.swapaxes(blocks.psi2, 1, 2))


def gain_F(system: MjlsSystem, U: MatrixField, gamma: float, sign_tol: float = 0.0) -> MatrixField:
    """Worst-case disturbance gain ``F(U) = -psi3(U)^{-1} psi2(U)'``.

    Raises :class:`SignConditionError` naming the node where ``psi3`` fails
    to be negative definite.
    """
    blocks = riccati_blocks(system, U.values, gamma)
    check_sign(blocks, sign_tol)
    return MatrixField(system.grid, gain_from_blocks(blocks))


def brl_residual_block(system: MjlsSystem, Y_next: MatrixField, Y_now: MatrixField,
                       gamma: float) -> MatrixField:
    """Node-wise ``[[psi1(Y_next) - Y_now, psi2(Y_next)], [psi2', psi3(Y_next)]]``."""
    if Y_next.shape != (system.n, system.n) or Y_now.shape != Y_next.shape:
        raise ValidationError("residual block needs n x n fields")
    b = riccati_blocks(system, Y_next.values, gamma)
    top = np.concatenate([b.psi1 - Y_now.values, b.psi2], axis=2)
    bot = np.concatenate([np.swapaxes(b.psi2, 1, 2), b.psi3], axis=2)
    return MatrixField(system.grid, symmetrize(np.concatenate([top, bot], axis=1)), True)


# ---------------------------------------------------------------------------
# spectral radius

def spectral_radius(op: OperatorHandle, tol: float = 1e-10, max_iter: int = 100000,
                    min_iter: int = 10, plain_iter: int = 500):
    """Perron root of a positive operator by power iteration.

    Starts from the identity field and normalizes each iterate by its
    pairing with the identity, a strictly positive functional on the cone.
    The quotient ``<op(X); I> / <X; I>`` is declared converged once its
    relative change stays below ``tol`` over two consecutive iterations
    (after ``min_iter`` iterations).

    Other eigenvalues may share the modulus of the Perron root (or come
    very close to it), in which case the plain iteration oscillates.  If it
    has not settled after ``plain_iter`` steps it is restarted on
    ``op + c I`` with ``c`` the largest quotient seen so far; the shift
    keeps the cone invariant and makes the Perron root strictly dominant.

    Returns
    -------
    estimate : float
    iterations : int
        Total number of operator applications.
    """
    first = min(plain_iter, max_iter)
    q, it, history = _power_loop(op, 0.0, tol, first, min_iter)
    if q is not None:
        return q, it
    shift = max(history)
    q, it2, history = _power_loop(op, shift, tol, max_iter - first, min_iter)
    if q is not None:
        return q, it + it2
    last = history[-2:]
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations; last quotients {last}",
        report={"last_quotients": last, "iterations": max_iter, "shift": shift})


def _power_loop(op, shift, tol, max_iter, min_iter):
    grid = op.kernel.grid
    ident = MatrixField.identity(grid, op.n)
    X = ident
    history = []
    small = 0
    for it in range(1, max_iter + 1):
        Y = op(X)
        q = pairing(Y, ident) / pairing(X, ident)
        if q <= 0.0 or not np.isfinite(q):
            if np.all(Y.values == 0):
                return 0.0, it, history
            raise ConvergenceError(f"power iteration left the positive cone (quotient {q})")
        if history and abs(q - history[-1]) <= tol * abs(q):
            small += 1
        else:
            small = 0
        history.append(q)
        if small >= 2 and it >= min_iter:
            return float(q), it, history
        Z = Y.values + shift * X.values if shift else Y.values
        X = MatrixField(grid, Z / grid.integrate(np.trace(Z, axis1=1, axis2=2)), True)
    return None, max_iter, history


# ---------------------------------------------------------------------------
# dense representation

def _svec_index(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def field_to_vector(X: MatrixField) -> np.ndarray:
    """Coordinates in which :func:`pairing` is the Euclidean inner product."""
    n = X.shape[0]
    idx = _svec_index(n)
    scale = np.array([1.0 if i == j else np.sqrt(2.0) for i, j in idx])
    I, J = zip(*idx)
    coords = X.values[:, I, J] * scale[None, :]
    return (np.sqrt(X.grid.weights)[:, None] * coords).ravel()


def vector_to_field(grid: GridSpace, x: np.ndarray, n: int) -> MatrixField:
    idx = _svec_index(n)
    d = len(idx)
    coords = np.asarray(x, dtype=float).reshape(grid.size, d) / np.sqrt(grid.weights)[:, None]
    vals = np.zeros((grid.size, n, n))
    for c, (i, j) in enumerate(idx):
        v = coords[:, c] if i == j else coords[:, c] / np.sqrt(2.0)
        vals[:, i, j] = v
        vals[:, j, i] = v
    return MatrixField(grid, vals, True)


def densify(op: OperatorHandle, budget: int = DENSE_BUDGET) -> np.ndarray:
    """Explicit matrix of ``op`` on weighted half-vectorized symmetric fields.

    The coordinate map is an isometry of the weighted trace pairing, so the
    matrices of ``L_K`` and ``T_K`` are transposes of each other.
    """
    grid = op.kernel.grid
    n = op.n
    dim = op.dim(n)
    if dim > budget:
        raise BudgetError(f"dense operator would have {dim} columns (budget {budget})")
    d = n * (n + 1) // 2
    M = np.empty((dim, dim))
    basis = np.zeros((grid.size, n, n))
    sw = np.sqrt(grid.weights)
    for node in range(grid.size):
        for c, (i, j) in enumerate(_svec_index(n)):
            basis[:] = 0.0
            if i == j:
                basis[node, i, i] = 1.0
            else:
                basis[node, i, j] = basis[node, j, i] = 1.0 / np.sqrt(2.0)
            basis[node] /= sw[node]
            M[:, node * d + c] = field_to_vector(op(MatrixField(grid, basis, True)))
    return M


# ---------------------------------------------------------------------------
# moments

def initial_moment(system: MjlsSystem, x0) -> MatrixField:
    """``X0(l) = x0 x0' nu(l)``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    outer = np.outer(x0, x0)
    return MatrixField(system.grid, system.kernel.initial_density[:, None, None] * outer, True)


def moment_recursion(system: MjlsSystem, X0: MatrixField, steps: int) -> list:
    """``[X0, L_A(X0), ..., L_A^steps(X0)]``."""
    if not X0.symmetric:
        raise ValidationError("moment recursion needs a symmetric initial field")
    if X0.min_eigenvalues().min(initial=0.0) < -1e-12:
        raise ValidationError("initial second moment must be positive semidefinite")
    out = [X0]
    for _ in range(steps):
        out.append(apply_L(system.kernel, system.A, out[-1]))
    return out


def second_moment_trace_variance(system: MjlsSystem, x0, steps: int) -> np.ndarray:
    """Exact ``Var ||x(k)||^2`` for ``k = 0..steps`` under zero input.

    The lifted state ``x (x) x`` evolves with coefficient ``A (x) A``, so its
    second moment, and hence ``E ||x(k)||^4``, follows the same recursion.
    Used to size the sampling error of Monte Carlo moment estimates.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n = system.n
    AA = np.einsum("nij,nkl->nikjl", system.A.values, system.A.values).reshape(-1, n * n, n * n)
    AA = MatrixField(system.grid, AA)
    x2 = np.kron(x0, x0)
    nu = system.kernel.initial_density[:, None, None]
    fourth = [MatrixField(system.grid, nu * np.outer(x2, x2), True)]
    for _ in range(steps):
        fourth.append(apply_L(system.kernel, AA, fourth[-1]))
    second = moment_recursion(system, initial_moment(system, x0), steps)
    w = system.grid.weights
    m4 = np.array([np.trace(X.values, axis1=1, axis2=2) @ w for X in fourth])
    m2 = np.array([np.trace(X.values, axis1=1, axis2=2) @ w for X in second])
    return np.maximum(m4 - m2 ** 2, 0.0)


def operator_norm_bound(K: MatrixField) -> float:
    """``||K||_inf^2``, an upper bound for both ``r(L_K)`` and ``r(T_K)``."""
    return norm_inf(K) ** 2
