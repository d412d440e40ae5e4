"""Result accounting: per-run reports and replication aggregation.

All rates are normalized to the single-stream channel capacity, so a
throughput of 1.0 means the medium carries payload bits exactly as fast as
one uninterrupted sender could; with multi-packet reception the value may
exceed 1.  Delay is MAC service time only: head-of-queue to delivery or
drop, queueing excluded.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence


class ConfigMismatchError(ValueError):
    """Replications aggregated together must share everything but the seed."""


def normalized_throughput(
    delivered_payload_bits: float, sim_time_us: float, bitrate_bps: float
) -> float:
    """Delivered payload rate as a fraction of the raw channel bitrate."""
    if sim_time_us <= 0:
        raise ValueError(f"sim_time_us must be positive, got {sim_time_us}")
    return delivered_payload_bits / (bitrate_bps * sim_time_us / 1e6)


def mac_delay(service_start_us: float, completion_us: float) -> float:
    """Service time of one packet: head-of-queue until delivered or dropped."""
    if completion_us < service_start_us:
        raise ValueError("packet completed before entering service")
    return completion_us - service_start_us


def transmission_efficiency(delivered: int, attempts: int) -> float:
    """Fraction of transmission attempts that delivered; 1.0 when untested."""
    if delivered < 0 or attempts < 0 or delivered > attempts:
        raise ValueError(f"bad counts delivered={delivered} attempts={attempts}")
    return 1.0 if attempts == 0 else delivered / attempts


@dataclass(frozen=True)
class NodeMetrics:
    """Per-station slice of a run report; fields mirror the aggregate ones."""

    node_id: int
    normalized_throughput: float
    mean_mac_delay_us: float
    transmission_efficiency_eta: float
    delivered: int
    dropped: int
    attempts: int
    arrivals_enqueued: int
    delivered_total: int
    dropped_total: int
    still_queued: int


@dataclass(frozen=True)
class MetricsReport:
    """Everything measured in one run.

    The headline counters (delivered, dropped, attempts, delay, throughput)
    cover only transmissions completing inside the measurement window, i.e.
    after the warmup cut; sim_time_us is that window's length.  The *_total
    fields count the whole run and satisfy conservation:
    arrivals_enqueued == delivered_total + dropped_total + still_queued.
    """

    normalized_throughput: float
    mean_mac_delay_us: float
    transmission_efficiency_eta: float
    delivered: int
    dropped: int
    attempts: int
    sim_time_us: float
    delivered_payload_bits: int
    arrivals_enqueued: int
    delivered_total: int
    dropped_total: int
    still_queued: int
    per_node: tuple[NodeMetrics, ...]
    config: dict

    def to_dict(self) -> dict:
        return asdict(self)

    def to_kv_lines(self) -> list[str]:
        """Flat key = value text form, per-node fields prefixed nodeN."""
        lines = []
        for key, value in asdict(self).items():
            if key in ("per_node", "config"):
                continue
            lines.append(f"{key} = {value}")
        for key, value in self.config.items():
            lines.append(f"config.{key} = {value}")
        for node in self.per_node:
            prefix = f"node{node.node_id}"
            for key, value in asdict(node).items():
                if key != "node_id":
                    lines.append(f"{prefix}.{key} = {value}")
        return lines


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    # Sorted fsum reductions make the result independent of input order.
    ordered = sorted(values)
    n = len(ordered)
    mean = math.fsum(ordered) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in ordered) / (n - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class ReplicationSummary:
    """Mean and sample standard deviation of the headline metrics."""

    replications: int
    throughput_mean: float
    throughput_std: float
    delay_mean_us: float
    delay_std_us: float
    eta_mean: float
    eta_std: float
    delivered_mean: float
    dropped_mean: float
    attempts_mean: float

    def to_dict(self) -> dict:
        return asdict(self)


def aggregate_replications(reports: Iterable[MetricsReport]) -> ReplicationSummary:
    """Summarize replications that differ only in seed.

    Raises ConfigMismatchError when any two reports disagree on a
    configuration field other than the seed.  Means and standard deviations
    do not depend on the order of the reports.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    reference = {k: v for k, v in reports[0].config.items() if k != "seed"}
    for rep in reports[1:]:
        other = {k: v for k, v in rep.config.items() if k != "seed"}
        if other != reference:
            diff = {
                k
                for k in set(reference) | set(other)
                if reference.get(k) != other.get(k)
            }
            raise ConfigMismatchError(
                f"replications disagree on config fields: {sorted(diff)}"
            )
    thr_mean, thr_std = _mean_std([r.normalized_throughput for r in reports])
    delay_mean, delay_std = _mean_std([r.mean_mac_delay_us for r in reports])
    eta_mean, eta_std = _mean_std([r.transmission_efficiency_eta for r in reports])
    delivered_mean, _ = _mean_std([float(r.delivered) for r in reports])
    dropped_mean, _ = _mean_std([float(r.dropped) for r in reports])
    attempts_mean, _ = _mean_std([float(r.attempts) for r in reports])
    return ReplicationSummary(
        replications=len(reports),
        throughput_mean=thr_mean,
        throughput_std=thr_std,
        delay_mean_us=delay_mean,
        delay_std_us=delay_std,
        eta_mean=eta_mean,
        eta_std=eta_std,
        delivered_mean=delivered_mean,
        dropped_mean=dropped_mean,
        attempts_mean=attempts_mean,
    )
