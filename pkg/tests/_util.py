"""Random fixtures and brute-force oracles shared by the test modules."""

import numpy as np

from mjls.fields import MatrixField
from mjls.grid import TransitionKernel, build_grid
from mjls.operators import MjlsSystem


def random_grid(rng, n_nodes, n_comp=None):
    n_comp = n_comp or (1 if n_nodes < 2 else int(rng.integers(1, min(3, n_nodes) + 1)))
    counts = np.full(n_comp, n_nodes // n_comp)
    counts[: n_nodes - counts.sum()] += 1
    comps = []
    for i, c in enumerate(counts):
        lo = float(rng.uniform(-1, 1))
        comps.append((i + 1, (lo, lo + float(rng.uniform(0.5, 2.0))), int(c)))
    return build_grid(comps)


def random_kernel(rng, grid):
    dens = rng.uniform(0.05, 1.0, size=(grid.size, grid.size))
    dens /= (dens @ grid.weights)[:, None]
    nu = rng.uniform(0.1, 1.0, size=grid.size)
    nu /= nu @ grid.weights
    return TransitionKernel(grid, dens, nu)


def random_field(rng, grid, rows, cols=None, scale=1.0):
    cols = rows if cols is None else cols
    return MatrixField(grid, scale * rng.standard_normal((grid.size, rows, cols)))


def random_sym(rng, grid, n, psd=False):
    M = rng.standard_normal((grid.size, n, n))
    vals = M @ np.swapaxes(M, 1, 2) if psd else M + np.swapaxes(M, 1, 2)
    return MatrixField(grid, vals, True)


def random_system(rng, n_nodes, n=2, r=1, m=1, a_norm=0.6, b_scale=0.5):
    """Random system with ``||A||_inf = a_norm`` (hence mean-square stable
    when ``a_norm < 1``) and ``D = 0``."""
    grid = random_grid(rng, n_nodes)
    kernel = random_kernel(rng, grid)
    A = rng.standard_normal((grid.size, n, n))
    A *= a_norm / np.linalg.norm(A, ord=2, axis=(1, 2)).max()
    B = b_scale * rng.standard_normal((grid.size, n, r))
    C = rng.standard_normal((grid.size, m, n))
    D = np.zeros((grid.size, m, r))
    return MjlsSystem(grid, kernel, *(MatrixField(grid, v) for v in (A, B, C, D)))


def kron_L_matrix(kernel, K):
    """Full ``(N n^2) x (N n^2)`` matrix of ``L_K`` on row-major vec(V)."""
    N = kernel.grid.size
    n = K.shape[0]
    w = kernel.grid.weights
    M = np.zeros((N * n * n, N * n * n))
    for l in range(N):
        for s in range(N):
            M[l * n * n:(l + 1) * n * n, s * n * n:(s + 1) * n * n] = (
                kernel.density[s, l] * w[s] * np.kron(K.values[s], K.values[s]))
    return M


def kron_T_matrix(kernel, K):
    """Full matrix of ``T_K`` on row-major vec(U)."""
    N = kernel.grid.size
    n = K.shape[0]
    w = kernel.grid.weights
    M = np.zeros((N * n * n, N * n * n))
    for l in range(N):
        Kt = K.values[l].T
        for s in range(N):
            M[l * n * n:(l + 1) * n * n, s * n * n:(s + 1) * n * n] = (
                kernel.density[l, s] * w[s] * np.kron(Kt, Kt))
    return M


def scalar_are_root(a, b, c, gamma, iters=200):
    """Smallest root of ``k = a^2 k gamma^2 / (gamma^2 - b^2 k) + c^2`` by bisection.

    Multiplying out gives ``q(k) = b^2 k^2 - (gamma^2 (1 - a^2) + b^2 c^2) k + c^2 gamma^2``;
    ``q(0) > 0`` and ``q`` is negative at its vertex when a real root exists.
    """
    beta = gamma ** 2 * (1 - a ** 2) + b ** 2 * c ** 2

    def q(k):
        return b ** 2 * k ** 2 - beta * k + c ** 2 * gamma ** 2

    lo, hi = 0.0, beta / (2 * b ** 2)
    assert q(lo) > 0 and q(hi) < 0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if q(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
