"""Interval-conditioned time-series forecasting.

Trains forecasters whose loss is shaped toward a region of interest of the
value domain, composes fine-grained interval models at inference time, and
quantifies the downstream impact of interval accuracy with a base-station
energy-saving simulator.
"""

from .data import (
    ScaleRecord,
    SplitSpec,
    TimeSeries,
    WindowConfig,
    WindowSample,
    chrono_split,
    denormalize,
    generate_synthds,
    load_csv,
    make_windows,
    normalize,
    write_csv,
)
from .energy import (
    DecisionErrors,
    EnergySimConfig,
    SimOutcome,
    compare_decisions,
    decide,
    default_threshold_grid,
    simulate,
    sweep_threshold,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateConfidenceError,
    DimensionError,
    FormatError,
    IntervalcastError,
    NumericError,
    ParseError,
    RatioUndefinedError,
    SplitError,
    TrainingError,
    UnsupportedQueryError,
)
from .evaluation import (
    ComparisonRow,
    IntervalMetric,
    improvement_table,
    interval_mae,
    rolling_eval,
    strategy_ratio,
    write_table_csv,
)
from .intervals import (
    DecaySpec,
    DiscretePartition,
    FULL_DOMAIN,
    INDICATOR,
    Interval,
    UniformSampler,
    decay_weight,
    encode_covariate,
    intersecting,
    sample_discrete,
    sample_uniform,
    target_weight,
)
from .models import (
    DualForecast,
    ModelArch,
    ModelParams,
    backward,
    forward,
    forward_batch,
    init,
)
from .numeric import GradCheckReport, check_gradient, matmul
from .patching import (
    PatchRequest,
    PatchTrace,
    STRATEGY_AVERAGE,
    STRATEGY_MAXCONF,
    forecast,
    patch_average,
    patch_maxconf,
)
from .training import (
    AdamwState,
    EpochRecord,
    PolicyConfig,
    SampleLossSpec,
    TrainReport,
    cosine_lr,
    load_checkpoint,
    make_batch_losses,
    masked_mae,
    save_checkpoint,
    train,
    validation_loss,
    weighted_bce,
)

__version__ = "0.1.0"
