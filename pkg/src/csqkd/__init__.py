"""Compressive-sensing channel parameter estimation for free-space CV-QKD."""

__version__ = "0.1.0"

from .channel import (
    DETECTIONS,
    ProtocolParams,
    QuadratureDataset,
    SubChannel,
    SubChannelEnsemble,
    build_ensemble,
    ensemble_from_csv,
    ensemble_means,
    sample_lognormal_transmittances,
    simulate_block,
)
from .estimators import (
    AggregateEstimate,
    SubChannelEstimate,
    aggregate_estimates,
    block_variances,
    estimate_subchannel_statistics,
    estimate_subchannel_variables,
    estimate_whole_channel_variables,
    measured_variance,
)
from .harness import (
    ExperimentConfig,
    RunReport,
    compute_mse,
    load_config,
    preset_config,
    run_sweep,
    write_config,
    write_reports,
)
from .security import (
    ChannelSummary,
    KeyRateReport,
    NoiseBudget,
    g_func,
    holevo_bound,
    mutual_information,
    noise_budget,
    secret_key_rate,
    summary_from_means,
    untrusted_referral,
)
from .sensing import (
    DenseOperator,
    OmpConfig,
    RowSampledIdftOperator,
    SamplingPlan,
    SensingOperator,
    SparseCoefficients,
    idft_basis,
    make_sampling_plan,
    mutual_incoherence,
    omp_solve,
)

__all__ = [
    "AggregateEstimate",
    "ChannelSummary",
    "DETECTIONS",
    "DenseOperator",
    "ExperimentConfig",
    "KeyRateReport",
    "NoiseBudget",
    "OmpConfig",
    "ProtocolParams",
    "QuadratureDataset",
    "RowSampledIdftOperator",
    "RunReport",
    "SamplingPlan",
    "SensingOperator",
    "SparseCoefficients",
    "SubChannel",
    "SubChannelEnsemble",
    "SubChannelEstimate",
    "aggregate_estimates",
    "block_variances",
    "build_ensemble",
    "compute_mse",
    "ensemble_from_csv",
    "ensemble_means",
    "estimate_subchannel_statistics",
    "estimate_subchannel_variables",
    "estimate_whole_channel_variables",
    "g_func",
    "holevo_bound",
    "idft_basis",
    "load_config",
    "make_sampling_plan",
    "measured_variance",
    "mutual_incoherence",
    "mutual_information",
    "noise_budget",
    "omp_solve",
    "preset_config",
    "run_sweep",
    "sample_lognormal_transmittances",
    "secret_key_rate",
    "simulate_block",
    "summary_from_means",
    "untrusted_referral",
    "write_config",
    "write_reports",
]
