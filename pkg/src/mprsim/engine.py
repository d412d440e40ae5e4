"""Slot-synchronous simulation of contending stations on an MPR channel.

Time advances in MAC slots.  Everything observable happens at slot
boundaries: arrivals take effect at the boundary after their timestamp,
transmissions start at the boundary after the slot in which they were
decided and occupy whole slots, and a slot where more frames overlap than
the channel capability allows dooms every overlapping frame.

run_simulation() normally advances with an event-jump loop: spans in which
every waiting station evolves linearly (constant ongoing count, no arrivals,
no frame boundaries) are applied in one step, and only slots where something
fires are run through the full per-slot logic.  Tracing forces plain
slot-by-slot stepping; both paths produce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .mac import (
    AdaptiveBackoff,
    BackoffPolicy,
    ConventionalDcf,
    MacParams,
    NodeState,
    Phase,
    QueuedPacket,
    ThresholdBackoff,
    TxOutcome,
    decrement_amount,
    difs_slots,
    draw_backoff,
    frame_airtime,
    is_idle_slot,
    on_transmission_result,
)
from .metrics import (
    MetricsReport,
    NodeMetrics,
    mac_delay,
    normalized_throughput,
    transmission_efficiency,
)

_NEVER = np.iinfo(np.int64).max // 2  # arrival sentinel far past any horizon


class ConfigError(ValueError):
    """Raised for inconsistent or incomplete simulation configuration."""


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    Exactly one of ``arrival_rate_pps`` (per-station Poisson rate) and
    ``offered_traffic`` (aggregate load normalized to channel capacity) must
    be given, unless ``saturated`` is set, in which case stations always
    hold a packet and no arrival process exists.  ``warmup_slots`` of None
    means a tenth of the duration.
    """

    n_stations: int
    mpr_capability: int
    policy: BackoffPolicy
    duration_slots: int
    mac: MacParams = MacParams()
    arrival_rate_pps: float | None = None
    offered_traffic: float | None = None
    saturated: bool = False
    warmup_slots: int | None = None
    seed: int = 1

    def __post_init__(self) -> None:
        if self.n_stations < 1:
            raise ConfigError(f"n_stations must be >= 1, got {self.n_stations}")
        if self.mpr_capability < 1:
            raise ConfigError(
                f"mpr_capability must be >= 1, got {self.mpr_capability}"
            )
        if not isinstance(
            self.policy, (ConventionalDcf, ThresholdBackoff, AdaptiveBackoff)
        ):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.duration_slots < 1:
            raise ConfigError(
                f"duration_slots must be >= 1, got {self.duration_slots}"
            )
        warmup = self.effective_warmup_slots
        if not 0 <= warmup < self.duration_slots:
            raise ConfigError(
                f"warmup_slots must lie in [0, duration), got {warmup}"
            )
        given = [
            x for x in (self.arrival_rate_pps, self.offered_traffic) if x is not None
        ]
        if self.saturated:
            if given:
                raise ConfigError(
                    "saturated runs have no arrival process; "
                    "drop arrival_rate_pps / offered_traffic"
                )
        else:
            if len(given) != 1:
                raise ConfigError(
                    "exactly one of arrival_rate_pps and offered_traffic "
                    "must be set for unsaturated runs"
                )
            if given[0] < 0:
                raise ConfigError(f"arrival load must be >= 0, got {given[0]}")

    @property
    def effective_warmup_slots(self) -> int:
        if self.warmup_slots is None:
            return self.duration_slots // 10
        return self.warmup_slots

    @property
    def arrival_rate(self) -> float:
        """Per-station Poisson rate in packets per second (0 when saturated)."""
        if self.saturated:
            return 0.0
        if self.arrival_rate_pps is not None:
            return self.arrival_rate_pps
        return offered_traffic_to_rate(
            self.offered_traffic, self.n_stations, self.mac
        )


def offered_traffic_to_rate(
    offered: float, n_stations: int, params: MacParams
) -> float:
    """Per-station packet rate whose aggregate payload equals ``offered``.

    ``offered`` is normalized to the channel bitrate, so the identity is
    n * rate * payload_bits == offered * bitrate.
    """
    if offered < 0:
        raise ConfigError(f"offered traffic must be >= 0, got {offered}")
    if n_stations < 1:
        raise ConfigError(f"n_stations must be >= 1, got {n_stations}")
    return offered * params.bitrate_bps / (n_stations * params.payload_bits)


def generate_arrivals(
    rate_pps: float, horizon_us: float, rng: np.random.Generator
) -> np.ndarray:
    """Ordered Poisson arrival timestamps in [0, horizon_us), microseconds."""
    if rate_pps < 0:
        raise ConfigError(f"rate must be >= 0, got {rate_pps}")
    if rate_pps == 0 or horizon_us <= 0:
        return np.empty(0, dtype=np.float64)
    scale_us = 1e6 / rate_pps
    chunk = max(16, int(horizon_us / scale_us * 1.2) + 16)
    pieces = []
    last = 0.0
    while last <= horizon_us:
        cum = np.cumsum(rng.exponential(scale_us, size=chunk)) + last
        pieces.append(cum)
        last = float(cum[-1])
    times = np.concatenate(pieces)
    return times[times < horizon_us]


@dataclass(slots=True)
class TransmissionRecord:
    """One frame on air: slots [start_slot, end_slot) inclusive-exclusive.

    ``collided`` only ever flips False -> True; a frame stays on the channel
    until end_slot regardless.  ``attempt_index`` is the sender's retry count
    when the frame started (0 for a first attempt).
    """

    owner: int
    start_slot: int
    end_slot: int
    collided: bool = False
    attempt_index: int = 0


def ongoing_count(
    records: Iterable[TransmissionRecord], slot: int, observer: int | None = None
) -> int:
    """Transmissions overlapping ``slot``, excluding the observer's own.

    Stations are half-duplex: a sender does not hear the medium, so its own
    frames never count toward what it observes.
    """
    return sum(
        1
        for r in records
        if r.start_slot <= slot < r.end_slot and r.owner != observer
    )


def resolve_collisions(
    records: Sequence[TransmissionRecord], slot: int, capability: int
) -> Sequence[TransmissionRecord]:
    """Mark every frame overlapping ``slot`` collided if they exceed capability.

    Marking is monotone; already-collided frames still occupy the channel
    and still count toward the overlap.
    """
    overlapping = [r for r in records if r.start_slot <= slot < r.end_slot]
    if len(overlapping) > capability:
        for r in overlapping:
            r.collided = True
    return records


class SimWorld:
    """Mutable simulation state; step_slot() advances exactly one slot."""

    def __init__(
        self,
        config: SimConfig,
        trace: Callable[[str], None] | None = None,
        keep_records: bool = False,
        force_slot_stepping: bool = False,
    ) -> None:
        self.config = config
        self.params = config.mac
        self.policy = config.policy
        self.mpr_capability = config.mpr_capability
        self.saturated = config.saturated
        self.slot_us = config.mac.slot_us
        self.airtime_us, self.airtime_slots = frame_airtime(config.mac)
        self.difs_needed = difs_slots(config.mac)
        self.warmup_slots = config.effective_warmup_slots
        self.slot = 0
        self._trace = trace
        self._force_slot_stepping = force_slot_stepping
        self.records: list[TransmissionRecord] = []
        self._keep_records = keep_records

        n = config.n_stations
        self.nodes = [NodeState(node_id=i) for i in range(n)]
        self._waiting: list[NodeState] = []  # nodes in SENSING or COUNTING_DOWN
        self.active: list[TransmissionRecord] = []
        self._ends: list[TransmissionRecord] = []  # active, in end_slot order
        self._ends_head = 0

        # One seed stream per station, split into (arrivals, backoff).
        streams = np.random.SeedSequence(config.seed).spawn(n)
        self._backoff_rngs: list[np.random.Generator] = []
        self._arrival_us: list[np.ndarray] = []
        self._arrival_slots: list[np.ndarray] = []
        self._arr_ptr = np.zeros(n, dtype=np.int64)
        self._next_arrival = np.full(n, _NEVER, dtype=np.int64)
        rate = config.arrival_rate
        horizon_us = config.duration_slots * self.slot_us
        for i, stream in enumerate(streams):
            arrival_seq, backoff_seq = stream.spawn(2)
            self._backoff_rngs.append(np.random.default_rng(backoff_seq))
            if self.saturated or rate == 0:
                times = np.empty(0, dtype=np.float64)
            else:
                times = generate_arrivals(
                    rate, horizon_us, np.random.default_rng(arrival_seq)
                )
            self._arrival_us.append(times)
            slots = (np.floor(times / self.slot_us) + 1.0).astype(np.int64)
            self._arrival_slots.append(slots)
            if len(slots):
                self._next_arrival[i] = slots[0]

        self._enqueued = np.zeros(n, dtype=np.int64)
        self._t_delivered = np.zeros(n, dtype=np.int64)
        self._t_dropped = np.zeros(n, dtype=np.int64)
        self._w_delivered = np.zeros(n, dtype=np.int64)
        self._w_dropped = np.zeros(n, dtype=np.int64)
        self._w_attempts = np.zeros(n, dtype=np.int64)
        self._w_bits = np.zeros(n, dtype=np.int64)
        self._w_delay_sum = np.zeros(n, dtype=np.float64)

        if self.saturated:
            for node in self.nodes:
                node.queue.append(QueuedPacket(0.0, 0.0))
                node.phase = Phase.SENSING
                self._waiting.append(node)
            self._enqueued += 1

    # -- helpers ---------------------------------------------------------

    def _put_to_service(self, node: NodeState, now_us: float) -> None:
        node.queue[0].service_start_us = now_us
        node.phase = Phase.SENSING
        node.difs_observed = 0
        node.pending_counter = None
        self._waiting.append(node)

    def _pop_ended(self, slot: int) -> list[TransmissionRecord]:
        ended = []
        ends = self._ends
        head = self._ends_head
        while head < len(ends) and ends[head].end_slot == slot:
            ended.append(ends[head])
            head += 1
        if ended:
            self._ends_head = head
            if head > 64:  # drop the consumed prefix now and then
                del ends[:head]
                self._ends_head = 0
            for rec in ended:
                self.active.remove(rec)
        return ended

    def _first_end(self) -> int | None:
        if self._ends_head < len(self._ends):
            return self._ends[self._ends_head].end_slot
        return None

    # -- the reference semantics: one slot -------------------------------

    def step_slot(self) -> None:
        t = self.slot
        boundary_us = t * self.slot_us
        params = self.params
        in_window = t > self.warmup_slots

        # (1) arrivals whose timestamp precedes this boundary join the queues
        if not self.saturated:
            next_arrival = self._next_arrival
            for i in np.flatnonzero(next_arrival <= t):
                node = self.nodes[i]
                slots = self._arrival_slots[i]
                times = self._arrival_us[i]
                ptr = int(self._arr_ptr[i])
                while ptr < len(slots) and slots[ptr] <= t:
                    node.queue.append(QueuedPacket(float(times[ptr])))
                    ptr += 1
                self._enqueued[i] += ptr - int(self._arr_ptr[i])
                self._arr_ptr[i] = ptr
                next_arrival[i] = slots[ptr] if ptr < len(slots) else _NEVER
                if node.phase is Phase.IDLE:
                    self._put_to_service(node, boundary_us)

        # (2) frames ending at this boundary are finalized before anyone senses
        for rec in self._pop_ended(t):
            node = self.nodes[rec.owner]
            packet = node.queue[0]
            success = not rec.collided
            outcome = on_transmission_result(
                node, success, params, self._backoff_rngs[rec.owner]
            )
            i = rec.owner
            if in_window:
                self._w_attempts[i] += 1
            if outcome is TxOutcome.RETRYING:
                self._waiting.append(node)
            else:
                if outcome is TxOutcome.DELIVERED:
                    self._t_delivered[i] += 1
                    if in_window:
                        self._w_delivered[i] += 1
                        self._w_bits[i] += params.payload_bits
                else:
                    self._t_dropped[i] += 1
                    if in_window:
                        self._w_dropped[i] += 1
                if in_window:
                    self._w_delay_sum[i] += mac_delay(
                        packet.service_start_us, boundary_us
                    )
                if self.saturated:
                    node.queue.append(QueuedPacket(boundary_us))
                    self._enqueued[i] += 1
                if node.queue:
                    self._put_to_service(node, boundary_us)

        # (3) waiting stations observe the slot; overlap set is fixed now,
        # and none of them owns an active frame, so they all see the same count
        c = len(self.active)
        starters: list[NodeState] = []
        if self._waiting:
            idle = is_idle_slot(self.policy, c)
            dec = decrement_amount(self.policy, c)
            need = self.difs_needed
            still_waiting: list[NodeState] = []
            for node in self._waiting:
                if node.phase is Phase.SENSING:
                    if idle:
                        node.difs_observed += 1
                        if node.difs_observed >= need:
                            pend = node.pending_counter
                            if pend is None or pend <= 0:
                                node.pending_counter = None
                                starters.append(node)
                                continue
                            node.counter = pend
                            node.pending_counter = None
                            node.phase = Phase.COUNTING_DOWN
                    else:
                        node.difs_observed = 0
                        if node.pending_counter is None:
                            node.pending_counter = draw_backoff(
                                node.backoff_stage,
                                params,
                                self._backoff_rngs[node.node_id],
                            )
                else:  # COUNTING_DOWN
                    node.counter -= dec
                    if node.counter <= 0:
                        starters.append(node)
                        continue
                still_waiting.append(node)
            self._waiting = still_waiting

        for node in starters:
            rec = TransmissionRecord(
                owner=node.node_id,
                start_slot=t + 1,
                end_slot=t + 1 + self.airtime_slots,
                attempt_index=node.retries_used,
            )
            node.phase = Phase.TRANSMITTING
            self.active.append(rec)
            self._ends.append(rec)
            if self._keep_records:
                self.records.append(rec)

        # (4) next slot's overlap set is now complete; too many means all die
        nxt = t + 1
        overlap = 0
        for rec in self.active:
            if rec.end_slot > nxt:
                overlap += 1
        if overlap > self.mpr_capability:
            for rec in self.active:
                if rec.end_slot > nxt:
                    rec.collided = True

        if self._trace is not None:
            self._trace(self._trace_line(t, c))
        self.slot = nxt

    def _trace_line(self, slot: int, ongoing: int) -> str:
        codes = []
        for node in self.nodes:
            ph = node.phase
            if ph is Phase.SENSING:
                codes.append(f"S{node.difs_observed}")
            elif ph is Phase.COUNTING_DOWN:
                codes.append(f"C{node.counter}")
            else:
                codes.append(ph.value)
        return f"{slot} {ongoing} " + " ".join(codes)

    # -- event-jump fast path ---------------------------------------------

    def _gap(self) -> int:
        """Slots until something can fire; the returned distance includes
        the firing slot, so a gap of g means g-1 linear slots then one real
        step.  Never exceeds the end of the run."""
        t = self.slot
        g = self.config.duration_slots - t
        first_end = self._first_end()
        if first_end is not None:
            g2 = first_end - t + 1
            if g2 < g:
                g = g2
        if not self.saturated:
            na = int(self._next_arrival.min()) if len(self._next_arrival) else _NEVER
            g2 = na - t + 1
            if g2 < g:
                g = g2
        if self._waiting:
            c = len(self.active)
            idle = is_idle_slot(self.policy, c)
            dec = decrement_amount(self.policy, c)
            need = self.difs_needed
            for node in self._waiting:
                if node.phase is Phase.SENSING:
                    if idle:
                        g2 = need - node.difs_observed
                        if g2 < g:
                            g = g2
                elif dec:
                    g2 = -(-node.counter // dec)
                    if g2 < g:
                        g = g2
        return g if g > 1 else 1

    def _bulk(self, span: int) -> None:
        """Apply ``span`` slots in which nothing fires: DIFS credit and
        counters move linearly under a constant ongoing count."""
        if self._waiting:
            c = len(self.active)
            idle = is_idle_slot(self.policy, c)
            dec = decrement_amount(self.policy, c)
            params = self.params
            for node in self._waiting:
                if node.phase is Phase.SENSING:
                    if idle:
                        node.difs_observed += span
                    else:
                        node.difs_observed = 0
                        if node.pending_counter is None:
                            node.pending_counter = draw_backoff(
                                node.backoff_stage,
                                params,
                                self._backoff_rngs[node.node_id],
                            )
                elif dec:
                    node.counter -= span * dec
        self.slot += span

    def run(self) -> MetricsReport:
        duration = self.config.duration_slots
        if self._trace is not None or self._force_slot_stepping:
            while self.slot < duration:
                self.step_slot()
        else:
            while self.slot < duration:
                g = self._gap()
                if g > 1:
                    self._bulk(g - 1)
                self.step_slot()
        return self.report()

    # -- reporting ---------------------------------------------------------

    def report(self) -> MetricsReport:
        cfg = self.config
        window_us = (cfg.duration_slots - self.warmup_slots) * self.slot_us
        bitrate = self.params.bitrate_bps
        per_node = []
        for i, node in enumerate(self.nodes):
            events = int(self._w_delivered[i] + self._w_dropped[i])
            per_node.append(
                NodeMetrics(
                    node_id=i,
                    normalized_throughput=normalized_throughput(
                        int(self._w_bits[i]), window_us, bitrate
                    ),
                    mean_mac_delay_us=(
                        float(self._w_delay_sum[i]) / events if events else 0.0
                    ),
                    transmission_efficiency_eta=transmission_efficiency(
                        int(self._w_delivered[i]), int(self._w_attempts[i])
                    ),
                    delivered=int(self._w_delivered[i]),
                    dropped=int(self._w_dropped[i]),
                    attempts=int(self._w_attempts[i]),
                    arrivals_enqueued=int(self._enqueued[i]),
                    delivered_total=int(self._t_delivered[i]),
                    dropped_total=int(self._t_dropped[i]),
                    still_queued=len(node.queue),
                )
            )
        delivered = int(self._w_delivered.sum())
        dropped = int(self._w_dropped.sum())
        attempts = int(self._w_attempts.sum())
        events = delivered + dropped
        return MetricsReport(
            normalized_throughput=normalized_throughput(
                int(self._w_bits.sum()), window_us, bitrate
            ),
            mean_mac_delay_us=(
                float(self._w_delay_sum.sum()) / events if events else 0.0
            ),
            transmission_efficiency_eta=transmission_efficiency(
                delivered, attempts
            ),
            delivered=delivered,
            dropped=dropped,
            attempts=attempts,
            sim_time_us=window_us,
            delivered_payload_bits=int(self._w_bits.sum()),
            arrivals_enqueued=int(self._enqueued.sum()),
            delivered_total=int(self._t_delivered.sum()),
            dropped_total=int(self._t_dropped.sum()),
            still_queued=sum(len(n.queue) for n in self.nodes),
            per_node=tuple(per_node),
            config=config_to_dict(cfg),
        )


def step_slot(world: SimWorld) -> None:
    """Advance the world by exactly one slot (reference semantics)."""
    world.step_slot()


def run_simulation(
    config: SimConfig,
    trace: Callable[[str], None] | None = None,
    force_slot_stepping: bool = False,
) -> MetricsReport:
    """Run one configured simulation and return its report.

    Identical (config, seed) pairs give bit-identical reports.  ``trace``
    receives one text line per slot and forces slot-by-slot stepping.
    """
    return SimWorld(
        config, trace=trace, force_slot_stepping=force_slot_stepping
    ).run()


def config_to_dict(config: SimConfig) -> dict:
    """Flat, JSON-friendly echo of a configuration."""
    policy = config.policy
    d: dict = {
        "n_stations": config.n_stations,
        "mpr_capability": config.mpr_capability,
        "saturated": config.saturated,
        "arrival_rate_pps": None if config.saturated else config.arrival_rate,
        "offered_traffic": config.offered_traffic,
        "duration_slots": config.duration_slots,
        "warmup_slots": config.effective_warmup_slots,
        "seed": config.seed,
    }
    if isinstance(policy, ConventionalDcf):
        d.update(policy="dcf", policy_limit=None, policy_capability=None,
                 policy_threshold=None)
    elif isinstance(policy, ThresholdBackoff):
        d.update(policy="threshold", policy_limit=policy.limit,
                 policy_capability=None, policy_threshold=None)
    else:
        d.update(policy="adaptive", policy_limit=None,
                 policy_capability=policy.capability,
                 policy_threshold=policy.threshold)
    p = config.mac
    d.update(
        payload_bits=p.payload_bits,
        mac_header_bits=p.mac_header_bits,
        phy_header_bits=p.phy_header_bits,
        bitrate_bps=p.bitrate_bps,
        slot_us=p.slot_us,
        difs_us=p.difs_us,
        cw_min=p.cw_min,
        max_backoff_stage=p.max_backoff_stage,
        retry_limit=p.retry_limit,
    )
    return d
