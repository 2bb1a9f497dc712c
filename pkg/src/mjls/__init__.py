"""Stability and disturbance-attenuation analysis for Markov jump linear
systems whose jump parameter lives on a union of intervals."""

from .errors import (BudgetError, ConvergenceError, MjlsError, PremiseError, SignConditionError,
                     UnstableError, ValidationError)
from .grid import GridSpace, TransitionKernel, build_grid, build_mode_block_kernel, finite_grid
from .fields import MatrixField, OrderingCertificate, norm_inf, norm_one, pairing, uniform_psd_margin
from .operators import (CoefficientModel, MjlsSystem, OperatorHandle, apply_E, apply_L, apply_T,
                        brl_residual_block, densify, gain_F, initial_moment, moment_recursion,
                        psi1, psi2, psi3, second_moment_trace_variance, spectral_radius)
from .stability import (StabilityReport, analyze_stability, check_emss, check_emss_c,
                        check_lyapunov_inequality, decay_profile_T, solve_lyapunov_T,
                        solve_output_lyapunov)
from .riccati import (AreSolution, DreSolution, check_finite_brl, forward_iterate, hinf_bisection,
                      solve_are, solve_dre, verify_brl_infinite)
from .config import ModelConfig, load, load_fixture

__version__ = "0.1.0"
