"""lsmvar: simulation-based Value-at-Risk for nonlinear portfolios.

Monte Carlo VaR engine estimating the t1-day 100(1-alpha)% VaR of portfolios
with early-exercise features by ranked-loss simulation: paths follow the
physical measure to the horizon and a risk-neutral measure beyond it,
continuation values are estimated by cross-sectional regression (LASSO with
cross-validated penalty, or least squares), and the VaR is the
ceil(alpha * N)-th largest simulated loss.  Includes comparison baselines
(delta-normal, delta-gamma, nested-simulation and closed-form oracles),
a forward-rate market-model calibrator, and an experiment harness.
"""

__version__ = "0.1.0"

from .basis import BasisMode, BasisSpec, enumerate_basis, evaluate_design, gram
from .engine import (
    EstimatorSettings,
    ExerciseState,
    VaRReport,
    backward_induction,
    estimate_var,
    value_at_horizon,
)
from .errors import LsmVarError
from .instruments import BermudanPut, EuropeanCall, PayerSwaption, RainbowMinCall
from .models import (
    GbmParams,
    LfmParams,
    PathSet,
    TimeGrid,
    simulate,
    simulate_gbm,
    simulate_lfm,
)
from .numerics import (
    CorrelationMatrix,
    SeededStream,
    cholesky,
    empirical_quantile_loss,
    mvn_cdf,
)
from .regression import (
    CvResult,
    RegressionFit,
    cross_validate_lambda,
    fit_lasso,
    fit_lasso_cv,
    fit_ols,
    soft_threshold,
)

__all__ = [
    "__version__",
    "BasisMode",
    "BasisSpec",
    "enumerate_basis",
    "evaluate_design",
    "gram",
    "EstimatorSettings",
    "ExerciseState",
    "VaRReport",
    "backward_induction",
    "estimate_var",
    "value_at_horizon",
    "LsmVarError",
    "BermudanPut",
    "EuropeanCall",
    "PayerSwaption",
    "RainbowMinCall",
    "GbmParams",
    "LfmParams",
    "PathSet",
    "TimeGrid",
    "simulate",
    "simulate_gbm",
    "simulate_lfm",
    "CorrelationMatrix",
    "SeededStream",
    "cholesky",
    "empirical_quantile_loss",
    "mvn_cdf",
    "CvResult",
    "RegressionFit",
    "cross_validate_lambda",
    "fit_lasso",
    "fit_lasso_cv",
    "fit_ols",
    "soft_threshold",
]
