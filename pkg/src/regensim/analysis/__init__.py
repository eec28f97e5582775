"""Output analysis: batch means, replicate experiments and fluctuation statistics."""
from .batch import (
    BatchMeansEstimate,
    BatchSchedule,
    ScheduleReport,
    batch_means,
    overlapping_batch_means,
    psi_power,
    psi_rate,
    sip_lambda,
    validate_batch_schedule,
)
from .experiments import (
    MseReport,
    NormalityReport,
    ReplicateRow,
    batch_means_replicates,
    bm_clt_check,
    clt_normality_check,
    mse_experiment,
    summarize_mse,
)
from .fluctuation import (
    BrownianIncrementReport,
    FluctuationStat,
    beta_normalizer,
    brownian_increment_check,
    fluctuation_statistic,
    increment_sup,
    window_extrema,
)

__all__ = [
    "BatchMeansEstimate",
    "BatchSchedule",
    "ScheduleReport",
    "batch_means",
    "overlapping_batch_means",
    "psi_power",
    "psi_rate",
    "sip_lambda",
    "validate_batch_schedule",
    "MseReport",
    "NormalityReport",
    "ReplicateRow",
    "batch_means_replicates",
    "bm_clt_check",
    "clt_normality_check",
    "mse_experiment",
    "summarize_mse",
    "BrownianIncrementReport",
    "FluctuationStat",
    "beta_normalizer",
    "brownian_increment_check",
    "fluctuation_statistic",
    "increment_sup",
    "window_extrema",
]
