"""Mean-square stability of the bundled examples.

Each mode of the finite two-mode chain is unstable on its own, yet the
switching makes the second moment decay.
"""

import numpy as np

from mjls import MatrixField, analyze_stability, check_lyapunov_inequality, load_fixture
from mjls.stability import decay_profile_T, fit_decay

finite = load_fixture("two_mode_finite").system
for i in range(2):
    print(f"mode {i + 1} eigenvalues:", np.round(np.linalg.eigvals(finite.A.values[i]), 3))

report = analyze_stability(finite)
print(f"r(L_A) = {report.r_sigma_L:.6f}, r(T_A) = {report.r_sigma_T:.6f}")
print("stable with conditioning:", report.emss_c_verdict, " unconditionally:", report.emss_verdict)
print("Lyapunov margin of U - T_A(U) = I:", round(report.lyapunov_margin, 6))

# Same dynamics with the parameter spread over intervals; the coefficient
# shrinks toward half its value as t goes from 0 to 1.
cfg = load_fixture("two_mode_borel")
borel = cfg.system
rep = analyze_stability(borel)
print(f"\ncontinuous version: r(L_A) = {rep.r_sigma_L:.4f}")

# A piecewise-constant certificate Y checked against Y - T_A(Y) >= I.
Y = MatrixField.per_label(borel.grid, {int(k): np.array(v)
                                       for k, v in cfg.raw["certificates"]["Y"].items()})
cert = check_lyapunov_inequality(borel, Y, 1.0)
print("certificate holds:", cert.holds, " slack:", round(cert.min_eigenvalue_over_nodes, 3))

# Decay of ||T_A^k(I)||: the fitted rate approaches the spectral radius.
beta, alpha = fit_decay(decay_profile_T(borel, 60), k_min=20)
print(f"fitted decay rate {alpha:.4f}  vs  r(T_A) = {rep.r_sigma_T:.4f}")

# Scalar solar-style example: U = a^2 gives a uniformly positive margin.
solar = load_fixture("solar").system
U = MatrixField(solar.grid, solar.A.values ** 2, True)
c = check_lyapunov_inequality(solar, U)
node = c.argmin_node
print(f"\nscalar example: min of U - T_a(U) = {c.min_eigenvalue_over_nodes:.5f} "
      f"at label {solar.grid.labels[node]}, t = {solar.grid.t[node]:.3f}")
