"""Random conductance model laboratory.

Discrete calculus on weighted tori, corrector Poisson solves, continuous-time
random walks, Moser iteration machinery and the statistical verification of
the diffusive limit, behind one CLI (`rcm`).
"""

__version__ = "0.1.0"

from ._kernels import lane
from .environment import (EnvSpec, check_moment_condition, empirical_moments,
                          generate_env, load_env, save_env, shift_env,
                          spec_constant, spec_gff_exp, spec_iid_pareto_mix,
                          spec_layered, spec_uniform_elliptic)
from .lattice import (Ball, Environment, TorusLattice, ball_vertices,
                      dirichlet_form, divergence, edge_products, gradient,
                      isoperimetry_probe, laplacian, make_environment,
                      norm_avg, norm_avg_mu, weighted_dirichlet_form)
from .corrector import (CorrectorSolution, cube_average, harmonic_coordinate,
                        l1_profile, local_drift, sigma_from_corrector,
                        solve_corrector, sublinearity_profile)
from .solver import SolverConfig, SolverError
from .walk import (WalkConfig, WalkPath, corrector_sup_along_path,
                   martingale_path, rescale_path, simulate_csrw, simulate_vsrw,
                   walk_positions_at)
from .moser import (CutoffFamily, Exponents, MoserReport,
                    energy_estimate_check, exponents, moser_iterate,
                    poincare_l1_check, poisson_solve_dirichlet,
                    signed_power_field, small_exponent_bound, sobolev_check,
                    sobolev_s1_ratio)
from .ineq import (check_chain_lo, check_chain_ub1, check_chain_ub2,
                   check_edge_chain_rules, check_pol_ub, run_sweeps, signed_pow)
from .stats import (CltReport, estimate_sigma_mc, gaussianity_test,
                    occupation_uniformity, qfclt_suite)
