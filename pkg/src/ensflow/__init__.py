"""Probabilistic monthly streamflow prediction via ensemble post-processing.

A small numpy/scipy library that couples a two-parameter monthly
water-balance model with Bayesian parameter sampling, regression-based error
models and quantile averaging, plus interval scores to judge the result.
"""

from .calibrate import (
    CalibrationResult,
    Chain,
    ChainConfig,
    ChainSet,
    DegenerateChainsError,
    DegenerateFitError,
    ParameterBox,
    PosteriorSample,
    calibrate_catchment,
    dump_chains,
    log_likelihood,
    psrf,
    run_chains,
)
from .ensemble import (
    ALL_SCHEMES,
    DEFAULT_PROBABILITIES,
    AuxiliaryQuantiles,
    CombinedPrediction,
    SchemeConfig,
    SchemeResult,
    SisterEnsemble,
    TrainedErrorModels,
    combine,
    generate_sisters,
    intervals_from_prediction,
    member_interval_bounds,
    predict_error_quantiles,
    run_basic_scheme,
    run_ensemble_scheme,
    run_scheme,
    to_auxiliary,
    train_error_model,
)
from .evaluate import (
    INTERVAL_ALPHAS,
    DegenerateBenchmarkError,
    IntervalPrediction,
    MetricsRecord,
    WisdomRecord,
    average_interval_score,
    average_width,
    coverage_probability,
    crossing_count,
    rank_schemes,
    relative_improvement,
    wisdom_metrics,
)
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    SyntheticSpec,
    generate_synthetic,
    load_config,
    run_experiment,
    save_config,
    synthesize_monthly,
)
from .gr2m import (
    ROUTING_CAPACITY_MM,
    Gr2mParams,
    Gr2mState,
    default_initial_state,
    simulate,
    simulate_batch,
    step,
)
from .regress import (
    LinearFit,
    QuantileFit,
    QuantileFitError,
    RankDeficiencyError,
    RegressionDataset,
    average_pinball_loss,
    design_matrix,
    fit_ols,
    fit_quantile,
    fit_quantile_set,
    pinball_loss,
    predict_ols_quantile,
)
from .timeseries import (
    DailyRecord,
    MonthlySeries,
    PeriodPartition,
    aggregate_daily_to_monthly,
    load_catchment,
    partition,
    read_daily_csv,
    validate_series,
    write_daily_csv,
)

__version__ = "0.1.0"
