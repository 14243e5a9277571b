"""Online debiasing of LASSO estimates for adaptively collected data."""

from ._backend import backend_name
from .model_core import (
    DimensionError,
    EpisodeSchedule,
    Origin,
    RegressionProblem,
    ScheduleError,
    SpectralSummary,
    VarModel,
    build_regression_view,
    make_schedule,
    spectral_params,
)
from .lasso import (
    DegreesOfFreedomError,
    LassoConfig,
    LassoFit,
    default_lambda,
    estimate_sigma,
    fit_lasso,
)
from .decorrelator import (
    DecorrelatorConfig,
    DecorrelatorMatrix,
    DecorrelatorRow,
    SingularityError,
    kkt_residual,
    project_l1,
    soft_threshold,
    solve_matrix,
    solve_row_cd,
    solve_row_pgd,
)
from .debias_ts import (
    DebiasedEstimate,
    build_M_sequence,
    conditional_covariance_ts,
    conditional_variance_ts,
    noise_component_ts,
    online_debias_ts,
)
from .debias_batch import (
    BatchDesign,
    build_batch_M,
    conditional_variance_batch,
    online_debias_batch,
)
from .debias_offline import (
    build_offline_M,
    offline_debias,
    offline_noise_component,
    ridge_online_baseline,
)
from .inference import (
    InferenceReport,
    benjamini_yekutieli,
    confidence_interval,
    group_region,
    p_value,
    p_values,
    report,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    MetricsRow,
    normality_diagnostics,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
