"""Slotted CSMA/CA simulation on multi-packet reception channels.

The package splits into reception modelling (:mod:`mprsim.channel`), station
behaviour (:mod:`mprsim.mac`), the slot-synchronous engine
(:mod:`mprsim.engine`), result accounting (:mod:`mprsim.metrics`) and the
experiment front end (:mod:`mprsim.cli`, :mod:`mprsim.plotting`).
"""

from .channel import (
    ChannelModel,
    GeneralizedChannel,
    KMprChannel,
    MatrixError,
    ProbabilityRangeError,
    ReceptionMatrix,
    RowLengthError,
    RowSumError,
    TieRule,
    equivalent_capability,
    expected_successes,
    kmpr_matrix,
    kmpr_success,
    load_matrix,
    validate_matrix,
)
from .engine import (
    ConfigError,
    SimConfig,
    SimWorld,
    TransmissionRecord,
    config_to_dict,
    generate_arrivals,
    offered_traffic_to_rate,
    ongoing_count,
    resolve_collisions,
    run_simulation,
    step_slot,
)
from .mac import (
    AdaptiveBackoff,
    BackoffPolicy,
    ConventionalDcf,
    MacParams,
    NodeState,
    Phase,
    QueuedPacket,
    StateError,
    ThresholdBackoff,
    TxOutcome,
    contention_window,
    decrement_amount,
    difs_slots,
    draw_backoff,
    frame_airtime,
    is_idle_slot,
    on_transmission_result,
)
from .metrics import (
    ConfigMismatchError,
    MetricsReport,
    NodeMetrics,
    ReplicationSummary,
    aggregate_replications,
    mac_delay,
    normalized_throughput,
    transmission_efficiency,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveBackoff",
    "BackoffPolicy",
    "ChannelModel",
    "ConfigError",
    "ConfigMismatchError",
    "ConventionalDcf",
    "GeneralizedChannel",
    "KMprChannel",
    "MacParams",
    "MatrixError",
    "MetricsReport",
    "NodeMetrics",
    "NodeState",
    "Phase",
    "ProbabilityRangeError",
    "QueuedPacket",
    "ReceptionMatrix",
    "ReplicationSummary",
    "RowLengthError",
    "RowSumError",
    "SimConfig",
    "SimWorld",
    "StateError",
    "ThresholdBackoff",
    "TieRule",
    "TransmissionRecord",
    "TxOutcome",
    "aggregate_replications",
    "config_to_dict",
    "contention_window",
    "decrement_amount",
    "difs_slots",
    "draw_backoff",
    "equivalent_capability",
    "expected_successes",
    "frame_airtime",
    "generate_arrivals",
    "is_idle_slot",
    "kmpr_matrix",
    "kmpr_success",
    "load_matrix",
    "mac_delay",
    "normalized_throughput",
    "offered_traffic_to_rate",
    "ongoing_count",
    "on_transmission_result",
    "resolve_collisions",
    "run_simulation",
    "step_slot",
    "transmission_efficiency",
    "validate_matrix",
]
