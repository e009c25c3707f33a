"""Bayesian density regression with logit stick-breaking mixture priors.

A truncated predictor-dependent mixture of Gaussians whose weights follow a
logit stick-breaking construction, fit by three interchangeable engines:
Gibbs sampling (exact posterior), expectation conditional maximization
(posterior modes), and coordinate-ascent variational inference (scalable
approximate posteriors).  Pólya-Gamma augmentation makes all three conjugate.
"""

__version__ = "0.1.0"

from .basis import (
    DataTransform,
    SplineSpec,
    StandardizationRecord,
    linear_kernel_design,
    spline_basis,
    standardize,
)
from .cavi import (
    VariationalState,
    compute_elbo,
    run_cavi,
    update_global,
    update_local,
    variational_density_summary,
)
from .density import CdfCurves, DensityGrid
from .ecm import EcmState, e_step, m_step, observed_log_posterior, run_ecm
from .gibbs import (
    ChainOutput,
    GibbsState,
    gibbs_sweep,
    posterior_density_summary,
    run_chain,
    step_allocate,
    step_update_alpha,
    step_update_kernels,
)
from .model import (
    Dataset,
    DegenerateSimplexError,
    MixtureParams,
    ModelConfig,
    WeightProfile,
    compute_weights,
    conditional_cdf,
    conditional_density,
    continuation_ratio,
    log_likelihood,
    truncation_bound,
)
from .polya_gamma import RngStream, make_stream, pg_mean, sample_pg1, sample_pg1_vector
from .prior_checks import (
    WeightMoments,
    logistic_probit_gap,
    mc_random_measure_check,
    mc_weight_moments,
    probit_rescale,
    random_measure_moments,
    survivor_mass_mc,
)
from .synthetic import SyntheticSpec, generate_synthetic, two_component_spec

__all__ = [name for name in dir() if not name.startswith("_")]
