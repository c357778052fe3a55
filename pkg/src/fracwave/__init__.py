"""Spectral Galerkin solver for stochastic fractional wave equations driven
by white or fractional Gaussian noise, with trigonometric time integrators,
postprocessed noise convolutions, and a strong-convergence experiment
harness."""

from .convolution import (ConvolutionAccumulator, ConvolutionPlan,
                          convolution_second_moment, corrected_convolution,
                          exact_white_sample, gamma_bar, leftpoint_convolution,
                          postprocess_mode_count)
from .errors import ConfigurationError, DivergedTrajectory, NumericalError
from .harness import (ErrorReport, ExperimentPlan, convergence_rate,
                      holder_probe, mc_strong_error, run_figures, run_ladder,
                      run_table1, run_table2, run_table3, validate_noise)
from .integrator import (FilterSet, Problem, SchemeState, build_filters,
                         mstm_first_step, mstm_step, propagator_step,
                         reconstruct_u, reconstruct_v, run, stm_step)
from .noise import (NoiseBundle, NoiseConfig, build_joint_covariance, coarsen,
                    covariance_bruteforce, cross_cov, dump_bundle,
                    fbm_covariance, increment_cov, joint_cholesky, load_bundle,
                    mode_amplitudes, sample_bundle, trajectory_seed,
                    weighted_cov_diag, weighted_cov_offdiag)
from .spectrum import (ModeTable, Nonlinearity, SpectralField,
                       build_mode_table, frac_power_apply, l2_norm,
                       minimal_cutoff_for_modes, nonlinearity_apply, project,
                       trig_apply)

__version__ = "0.1.0"
