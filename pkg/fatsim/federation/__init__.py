from fatsim.federation.aggregate import aggregate, weighted_average
from fatsim.federation.config import BASELINE_MODES, AggregationMode, FederationConfig
from fatsim.federation.history import MetricsRecord, RunHistory, csv_header
from fatsim.federation.schedule import (
    WEIGHT_TOLERANCE,
    Phase,
    RoundPlan,
    gaussian_rampup,
    normalized_weights,
    phase_of,
    ramp_weights,
)
from fatsim.federation.server import evaluate, run_baseline, run_fat, run_federation, run_weighted_ramp

__all__ = [
    "BASELINE_MODES",
    "WEIGHT_TOLERANCE",
    "AggregationMode",
    "FederationConfig",
    "MetricsRecord",
    "Phase",
    "RoundPlan",
    "RunHistory",
    "aggregate",
    "csv_header",
    "evaluate",
    "gaussian_rampup",
    "normalized_weights",
    "phase_of",
    "ramp_weights",
    "run_baseline",
    "run_fat",
    "run_federation",
    "run_weighted_ramp",
    "weighted_average",
]
