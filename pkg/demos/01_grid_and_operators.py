"""Mode spaces, kernels and the two second-moment operators.

Run with ``python demos/01_grid_and_operators.py``.
"""

import numpy as np

from mjls import MatrixField, build_grid, build_mode_block_kernel, pairing
from mjls.operators import apply_E, apply_L, apply_T, densify, spectral_radius, MjlsSystem, L_op, T_op

# Two labeled unit intervals, 50 midpoint nodes each.  Every node carries
# the weight 1/50, so each component has measure 1.
grid = build_grid([(1, (0.0, 1.0), 50), (2, (0.0, 1.0), 50)])
print("nodes:", grid.size, " total measure:", grid.total_measure)

# A label-level transition matrix lifted to a density: from any point of
# component i, jump to component j with probability P[i, j] and land
# uniformly inside it.
P = np.array([[0.7, 0.3],
              [0.4, 0.6]])
kernel = build_mode_block_kernel(grid, P)
print("rows integrate to one:", np.allclose(kernel.weighted.sum(axis=1), 1.0))

# A coefficient that drifts with the continuous coordinate.
A = MatrixField.from_function(grid, lambda lab, t: np.array([[0.5 + 0.3 * t, 0.1],
                                                             [0.0, 0.4 * lab]]))

# E averages a field over the next mode, T_A pulls it back through A,
# L_A pushes a second moment forward.
U = MatrixField.identity(grid, 2)
EU = apply_E(kernel, U)
print("E(I) is still I:", EU.allclose(U, atol=1e-12))

V = MatrixField.from_function(grid, lambda lab, t: np.diag([1.0 + t, float(lab)]))
lhs = pairing(apply_L(kernel, A, V), U)
rhs = pairing(V, apply_T(kernel, A, U))
print(f"<L V; U> = {lhs:.12f}   <V; T U> = {rhs:.12f}")

# Power iteration on the positive operators; both share the same Perron root.
system = MjlsSystem.from_fields(kernel, A)
rL, _ = spectral_radius(L_op(system))
rT, _ = spectral_radius(T_op(system))
print(f"r(L_A) = {rL:.10f}   r(T_A) = {rT:.10f}")

# On a grid this small the dense matrix is cheap and gives an independent check.
dense = max(abs(np.linalg.eigvals(densify(L_op(system)))))
print(f"dense eigenvalue check: {dense:.10f}")
