"""Taylor moment expansion filters and smoothers for SDE state-space models."""
from .differentiation import Jet, SmoothScalarField, field, gradient, hessian, jacobian, nest
from .estimation import (
    EulerMaruyamaScheme,
    FilterResult,
    GaussianState,
    LinearExactScheme,
    SmootherResult,
    TMEScheme,
    ekf_rk4_filter,
    eks_rk4_smoother,
    gaussian_smoother,
    run_filter,
    smooth,
)
from .estimators import ExtendedSmoother, SigmaPointSmoother
from .exceptions import (
    ConditionViolatedError,
    DepthExceededError,
    DivergenceError,
    EstimationError,
    NotPSDError,
    RunFailedError,
    ScheduleMismatchError,
    SingularInnovationError,
    SingularPredictionError,
)
from .models import (
    DiffusionModel,
    InitialLaw,
    MeasurementModel,
    ObservationSchedule,
    make_benes,
    make_linear,
    make_lorenz63,
    make_ou,
)
from .quadrature import SigmaRule, cubature_rule, gauss_hermite_rule, unscented_rule
from .stability import StabilityConstants, gain_constant, mc_error_estimate, theoretical_bound
from .tme import TaylorMomentExpansion, ensure_psd, tme_cov, tme_mean

__version__ = "0.1.0"
