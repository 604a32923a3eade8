"""Gaussianization flows with random rotations: exact simulator, spline
training and convergence-rate experiments."""
from .errors import (DegenerateSpectrumError, DomainError, FitError, InvalidDimensionError,
                     ItergaussError, SpectrumRejectedError, UndefinedRateError)
from .kernels import BACKEND
from .rotations import (CASE_LABELS, LAMBDA_MIN, Spectrum, alpha_grid, make_rng, make_spectrum,
                        rotate_covariance, sample_haar, spectrum_grid)
from .theory import (CovarianceState, amgm_bracket, apply_block_exact, block_loss_update,
                     coupling_rate, coupling_rate_limit, coupling_required_layers, gaussian_kl,
                     gaussianization_required_layers, haar_diagonal_moments,
                     iterative_rate_factor, kappa_upper_bound, pythagorean_decomposition_gaussian,
                     spectrum_kl, theory_bounds)
from .spline import MonotoneTransform1D, SplineStack, fit_from_samples
from .distributions import (BimodalTarget, Dataset, ToyDistribution, gaussian_dataset,
                            toy_dataset, toy_entropy, toy_entropy_exact, toy_log_density,
                            toy_sample)
from .model import (Block, GaussianizationModel, TrainConfig, kl_loss, load_model,
                    marginal_dependence_estimate, save_model, train_block, train_iterative)
from .experiments import (ConvergenceRecord, GaussianConfig, SpuriousResult, ToyConfig,
                          estimate_rate, find_spurious_projection, fit_scaling_exponent,
                          required_layers, run_gaussian_experiment, run_toy_experiment)

__version__ = "0.1.0"
