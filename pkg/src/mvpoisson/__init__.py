"""Extreme joint distributions, correlation calibration and backward simulation
of multivariate Poisson processes."""

from .calibration import (
    CalibrationProblem,
    CalibrationResult,
    MixtureMeasure,
    admissible_bounds,
    build_mixture,
    calibrate,
    calibrate_to_target,
    check_admissible,
)
from .ejd import (
    ExtremeMeasure,
    MonotonicityVector,
    all_extreme_measures,
    closed_form_density,
    compute_extreme_measure,
    enumerate_structures,
    frechet_2d,
    signed_cdf,
)
from .errors import (
    ConfigurationError,
    DomainError,
    InadmissibleTargetError,
    InfeasibleTargetError,
    UndefinedCorrelationError,
)
from .marginals import DiscreteMarginal, TruncatedMarginal, cdf, poisson_pmf, truncate, truncated_poisson
from .moments import correlation_matrix, csm_correlation, mixture_correlation, pairwise_correlation
from .simulation import (
    EventPaths,
    backward_simulate,
    empirical_correlation,
    forward_continue,
    theoretical_corr,
)

__version__ = "0.1.0"
