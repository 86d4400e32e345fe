"""Underdamped Langevin dynamics with distribution- and path-dependent drift.

Simulators for the mean-field, frozen-measure and self-interacting
dynamics, the explicit contraction constants of the underlying coupling
argument, reflection-coupled pair experiments, and Wasserstein-1
convergence measurement for running empirical measures.
"""

from .model import (ModelParams, PhaseState, Trajectory, external_force,
                    linear1d, mean_attraction, probe_dissipativity, zero_force)
from .theory import (AuxFunction, TheoryConstants, admissibility,
                     build_aux_function, build_constants, compute_geometry,
                     compute_tau, constants_report, delta_fn, r_l_norm,
                     r_s_norm, rho_semimetric)
from .measures import (EmpiricalMeasure, RunningMean, empirical_from_array,
                       gaussian_sampler, running_mean_update, w1_exact_1d,
                       w1_exact_small, w1_sliced)
from .dynamics import (IntegratorConfig, RunResult, em_step_frozen,
                       em_step_meanfield, em_step_selfinteracting,
                       exact_linear_paths, exact_linear_step,
                       exact_linear_step_exact_noise, linear1d_transition,
                       run_trajectory)
from .coupling import (BlendingParams, ContractionReport, CouplingState,
                       MomentReport, blending, contraction_experiment,
                       coupled_step, moment_experiment)

__version__ = "0.1.0"
