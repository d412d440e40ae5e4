"""CSMA/CA station behaviour: backoff policies, timing and retry state.

The three policies differ only in how they read the medium.  Conventional
DCF treats any ongoing transmission as busy.  The threshold variant still
counts down (by one) while no more than a fixed number of transmissions are
ongoing.  The adaptive variant additionally scales the decrement by the
remaining reception headroom, so a nearly-free medium drains counters faster
than an almost-full one.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class StateError(RuntimeError):
    """Raised when a state transition is applied to the wrong phase."""


@dataclass(frozen=True)
class ConventionalDcf:
    """Counts down one per slot only while the medium is completely idle."""


@dataclass(frozen=True)
class ThresholdBackoff:
    """Counts down one per slot while at most ``limit`` transmissions overlap."""

    limit: int

    def __post_init__(self) -> None:
        if self.limit < 0:
            raise ValueError(f"limit must be >= 0, got {self.limit}")


@dataclass(frozen=True)
class AdaptiveBackoff:
    """Counts down by the remaining headroom ``capability - ongoing``.

    The decrement applies while the ongoing count stays at or below
    ``threshold``; above it the countdown freezes.  Requires
    0 <= threshold < capability.
    """

    capability: int
    threshold: int

    def __post_init__(self) -> None:
        if self.capability < 1:
            raise ValueError(f"capability must be >= 1, got {self.capability}")
        if not 0 <= self.threshold < self.capability:
            raise ValueError(
                f"threshold must be in [0, {self.capability - 1}], got {self.threshold}"
            )


BackoffPolicy = Union[ConventionalDcf, ThresholdBackoff, AdaptiveBackoff]


def decrement_amount(policy: BackoffPolicy, ongoing: int) -> int:
    """Backoff decrement applied in a slot observing ``ongoing`` transmissions."""
    if ongoing < 0:
        raise ValueError(f"ongoing count must be >= 0, got {ongoing}")
    if isinstance(policy, ConventionalDcf):
        return 1 if ongoing == 0 else 0
    if isinstance(policy, ThresholdBackoff):
        return 1 if ongoing <= policy.limit else 0
    if isinstance(policy, AdaptiveBackoff):
        return policy.capability - ongoing if ongoing <= policy.threshold else 0
    raise TypeError(f"unknown policy {policy!r}")


def is_idle_slot(policy: BackoffPolicy, ongoing: int) -> bool:
    """Whether a slot with ``ongoing`` transmissions counts as idle.

    Used both for DIFS observation and as the gate for counting down.
    """
    if ongoing < 0:
        raise ValueError(f"ongoing count must be >= 0, got {ongoing}")
    if isinstance(policy, ConventionalDcf):
        return ongoing == 0
    if isinstance(policy, ThresholdBackoff):
        return ongoing <= policy.limit
    if isinstance(policy, AdaptiveBackoff):
        return ongoing <= policy.threshold
    raise TypeError(f"unknown policy {policy!r}")


@dataclass(frozen=True)
class MacParams:
    """Station timing and framing parameters.

    Defaults are the usual 1 Mb/s DSSS-style set: 8184 bit payload, 272 bit
    MAC header, 128 bit physical header, 50 us slots, 128 us DIFS, minimum
    contention window 128 doubling over at most 5 stages, and up to 4
    retransmissions per frame.
    """

    payload_bits: int = 8184          # [b]
    mac_header_bits: int = 272        # [b]
    phy_header_bits: int = 128        # [b]
    bitrate_bps: float = 1e6          # [b/s]
    slot_us: float = 50.0             # [us]
    difs_us: float = 128.0            # [us]
    cw_min: int = 128
    max_backoff_stage: int = 5        # window doubles this many times, then caps
    retry_limit: int = 4              # retransmissions, so retry_limit + 1 attempts

    def __post_init__(self) -> None:
        if self.payload_bits <= 0 or self.mac_header_bits < 0 or self.phy_header_bits < 0:
            raise ValueError("frame field sizes must be positive")
        if self.bitrate_bps <= 0:
            raise ValueError("bitrate must be positive")
        if self.slot_us <= 0 or self.difs_us <= 0:
            raise ValueError("slot and DIFS durations must be positive")
        if self.cw_min < 1:
            raise ValueError(f"cw_min must be >= 1, got {self.cw_min}")
        if self.max_backoff_stage < 0 or self.retry_limit < 0:
            raise ValueError("stage and retry limits must be >= 0")


def frame_airtime(params: MacParams) -> tuple[float, int]:
    """Airtime of one frame as (microseconds, whole slots).

    The slot count is rounded up: a frame holds the medium for every slot it
    touches.
    """
    bits = params.payload_bits + params.mac_header_bits + params.phy_header_bits
    airtime_us = bits * 1e6 / params.bitrate_bps
    return airtime_us, math.ceil(airtime_us / params.slot_us - 1e-12)


def difs_slots(params: MacParams) -> int:
    """DIFS observation length in whole slots, rounded up."""
    return math.ceil(params.difs_us / params.slot_us - 1e-12)


def contention_window(stage: int, params: MacParams) -> int:
    """Window size at a backoff stage: cw_min doubled per stage, capped."""
    if stage < 0:
        raise ValueError(f"stage must be >= 0, got {stage}")
    return params.cw_min * 2 ** min(stage, params.max_backoff_stage)


def draw_backoff(stage: int, params: MacParams, rng: np.random.Generator) -> int:
    """Uniform draw from {0, ..., CW(stage) - 1}; consumes exactly one draw."""
    return int(rng.integers(0, contention_window(stage, params)))


class Phase(enum.Enum):
    """What a station is doing in a slot."""

    IDLE = "I"            # nothing queued
    SENSING = "S"         # head packet waiting for a full DIFS of idle slots
    COUNTING_DOWN = "C"   # backoff counter active
    TRANSMITTING = "T"    # frame on air


class TxOutcome(enum.Enum):
    DELIVERED = "delivered"
    RETRYING = "retrying"
    DROPPED = "dropped"


@dataclass(slots=True)
class QueuedPacket:
    """One queue entry; service_start_us is stamped at head-of-queue."""

    arrival_us: float
    service_start_us: float = math.nan


@dataclass
class NodeState:
    """Per-station MAC state.

    ``pending_counter`` holds a drawn backoff value that has not started
    counting yet (it starts after a full DIFS of idle slots); None means no
    draw has happened for the current attempt.  ``difs_observed`` is the
    running count of consecutive idle slots seen while SENSING.
    """

    node_id: int
    phase: Phase = Phase.IDLE
    difs_observed: int = 0
    pending_counter: int | None = None
    counter: int = 0
    backoff_stage: int = 0
    retries_used: int = 0
    queue: deque[QueuedPacket] = field(default_factory=deque)


def on_transmission_result(
    node: NodeState, success: bool, params: MacParams, rng: np.random.Generator
) -> TxOutcome:
    """Apply the outcome of the node's finished transmission.

    Success delivers the head packet and resets the backoff state.  Failure
    either schedules a retransmission (stage bumped, fresh counter drawn,
    DIFS re-observed) or, once retry_limit retransmissions are exhausted,
    drops the packet.  The caller stamps service-start times and refills
    queues; here the phase is left SENSING when another packet is queued and
    IDLE otherwise.
    """
    if node.phase is not Phase.TRANSMITTING:
        raise StateError(f"node {node.node_id} finalized while {node.phase.name}")
    if not success and node.retries_used < params.retry_limit:
        node.retries_used += 1
        node.backoff_stage = min(node.backoff_stage + 1, params.max_backoff_stage)
        node.pending_counter = draw_backoff(node.backoff_stage, params, rng)
        node.difs_observed = 0
        node.phase = Phase.SENSING
        return TxOutcome.RETRYING
    node.queue.popleft()
    node.backoff_stage = 0
    node.retries_used = 0
    node.pending_counter = None
    node.difs_observed = 0
    node.phase = Phase.SENSING if node.queue else Phase.IDLE
    return TxOutcome.DELIVERED if success else TxOutcome.DROPPED
