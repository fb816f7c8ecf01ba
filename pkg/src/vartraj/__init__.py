"""Variance-aware sampling-trajectory optimization for diffusion samplers.

Modules
-------
forward    : dense noise schedule, forward noising, per-step error weight
trajectory : decreasing ᾱ sequences, α-ratio form, predefined spacings
denoisers  : analytic posterior-mean ε-predictors, perturbed wrapper, specs
mlp        : small trainable regression denoiser (numpy, seed-deterministic)
profiler   : per-noise-level prediction-error measurement and interpolation
optimizer  : box-constrained projected gradient descent on the α vector
sampler    : deterministic trajectory sampler and error-propagation check
metrics    : cumulative prediction error, sliced Wasserstein, moments
cli        : pipeline entry point (profile / optimize / sample / simulate /
             eval / sweep / make-traj / train-denoiser)

The pipeline: profile a denoiser's error over noise levels, fit the
piecewise-linear error map, minimize the accumulated error variance of a
sampling trajectory inside a box around a predefined one, then verify the
optimized trajectory samples closer to ground truth.
"""

__version__ = "0.1.0"

from .forward import NoiseSchedule, diffuse, error_weight, linear_beta_schedule
from .trajectory import (Trajectory, alpha_from_alphabar, alphabar_from_alpha,
                         half_log_snr, make_trajectory)
from .denoisers import (Denoiser, GaussianDataSpec, GaussianOptimalDenoiser,
                        GmmDataSpec, GmmOptimalDenoiser, InjectedErrorCurve,
                        PerturbedDenoiser, data_spec_from_json,
                        denoiser_from_spec, gaussian_analytic_delta,
                        gaussian_optimal_predict, gmm_optimal_predict,
                        perturbed_predict)
from .mlp import MlpDenoiser, train_mlp_denoiser
from .profiler import (ErrorHistogram, ErrorProfile, default_grid,
                       error_histogram, f_delta, f_delta_slope, profile)
from .optimizer import (ObjectiveBreakdown, OptimizeConfig, OptimizeResult,
                        default_gamma, objective, objective_gradient,
                        optimize, project)
from .sampler import (PropagationReport, SampleBatch, ddim_step,
                      propagate_error_mc, sample)
from .metrics import EvalReport, cpe, moment_diagnostics, sliced_wasserstein
from .seeding import child_rng, child_seed_sequence
