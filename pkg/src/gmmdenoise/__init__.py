"""Gaussian mixture center recovery by gradient descent on the denoising objective."""

from .rng import RngSeed, as_rng_seed
from .core import (
    MixtureParams,
    NoiseScale,
    SampleBatch,
    estimate_center_norm,
    forward_noise,
    make_noise_scale,
    posterior_weights,
    rescale_centers,
    reverse_sample,
    sample_mixture,
    student_score,
    tanh_derivatives,
)
from .objective import (
    GradSample,
    GradStats,
    McEstimate,
    SurrogateReport,
    batch_grad_k,
    batch_grad_two,
    batch_loss,
    g_function,
    pointwise_grad_k,
    pointwise_grad_two,
    pointwise_loss,
    population_grad_k_mc,
    population_grad_two_mc,
    power_surrogate,
    surrogate_deviation,
)
from .optim import (
    FitReport,
    GdConfig,
    RunRecord,
    default_projected_config,
    default_two_stage_configs,
    gmm_denoiser,
    projected_gd_fit,
    symmetrize_two_component,
    two_stage_fit,
    warm_start_k_fit,
)
from .baselines import (
    DegenerateComponentError,
    EmConfig,
    em_fit,
    em_step_k,
    em_step_two,
    gradient_em_step_k,
    power_iteration_fit,
    run_em,
)
from .diagnostics import (
    CheckReport,
    angle_metrics,
    check_angle_step,
    check_contraction,
    check_cross_weights,
    check_g_contraction,
    check_grad_em_equiv,
    check_init_correlation,
    check_power_deviation,
    check_radius_estimator,
    check_stein_k,
    check_stein_two,
    format_check_table,
    run_default_checks,
)
from .estimators import DenoisingGMM, EMGMM, PrincipalPairDirection
from .io import read_csv_dataset, read_dataset, read_mixture, write_dataset, write_mixture

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
