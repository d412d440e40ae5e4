"""Simulation loop semantics: arrivals, sensing, collisions, accounting.

The hand-traced scenarios in here were worked out slot by slot on paper and
then frozen; the engine must reproduce them exactly.
"""

import math

import numpy as np
import pytest

from mprsim.engine import (
    ConfigError,
    SimConfig,
    SimWorld,
    TransmissionRecord,
    generate_arrivals,
    offered_traffic_to_rate,
    ongoing_count,
    resolve_collisions,
    run_simulation,
)
from mprsim.mac import (
    AdaptiveBackoff,
    ConventionalDcf,
    MacParams,
    NodeState,
    Phase,
    QueuedPacket,
    ThresholdBackoff,
)

DEFAULTS = MacParams()


# -- load conversion and arrival generation ---------------------------------

def test_offered_traffic_to_rate_reference_point():
    rate = offered_traffic_to_rate(0.75, 30, DEFAULTS)
    assert rate == pytest.approx(0.75e6 / (30 * 8184), rel=1e-12)
    assert rate == pytest.approx(3.0547, abs=5e-5)


def test_offered_traffic_to_rate_degenerate_cases():
    assert offered_traffic_to_rate(0.0, 7, DEFAULTS) == 0.0
    unit = MacParams(payload_bits=10**6)
    assert offered_traffic_to_rate(1.0, 1, unit) == pytest.approx(1.0)


def test_offered_traffic_to_rate_rejects_bad_input():
    with pytest.raises(ConfigError):
        offered_traffic_to_rate(-0.1, 5, DEFAULTS)
    with pytest.raises(ConfigError):
        offered_traffic_to_rate(0.5, 0, DEFAULTS)


def test_generate_arrivals_zero_rate_is_empty():
    out = generate_arrivals(0.0, 1e6, np.random.default_rng(1))
    assert out.size == 0


def test_generate_arrivals_count_statistics():
    """Sample mean of the count over 100 substreams within 3 sigma."""
    rate, horizon_us = 50.0, 10e6  # expect 500 per run
    seqs = np.random.SeedSequence(123).spawn(100)
    counts = [
        generate_arrivals(rate, horizon_us, np.random.default_rng(s)).size
        for s in seqs
    ]
    expected = rate * horizon_us / 1e6
    sigma_of_mean = math.sqrt(expected / len(counts))
    assert abs(np.mean(counts) - expected) < 3 * sigma_of_mean


def test_generate_arrivals_are_ordered_and_inside_horizon():
    out = generate_arrivals(200.0, 1e6, np.random.default_rng(5))
    assert np.all(np.diff(out) > 0)
    assert out[0] > 0
    assert out[-1] < 1e6


def test_same_seed_different_substreams_differ():
    a, b = np.random.SeedSequence(77).spawn(2)
    ta = generate_arrivals(10.0, 1e6, np.random.default_rng(a))
    tb = generate_arrivals(10.0, 1e6, np.random.default_rng(b))
    assert not np.array_equal(ta, tb)


# -- channel occupancy primitives -------------------------------------------

def _rec(owner, start, end, collided=False):
    return TransmissionRecord(owner=owner, start_slot=start, end_slot=end,
                              collided=collided)


def test_ongoing_count_empty():
    assert ongoing_count([], 5) == 0


def test_ongoing_count_excludes_observer_frames():
    records = [_rec(0, 0, 10), _rec(1, 2, 12), _rec(2, 4, 14)]
    assert ongoing_count(records, 5) == 3
    assert ongoing_count(records, 5, observer=1) == 2
    assert ongoing_count(records, 13) == 1  # only node 2 still on air


def test_resolve_collisions_at_capability_boundary():
    records = [_rec(i, 0, 10) for i in range(4)]
    resolve_collisions(records, 3, capability=4)
    assert not any(r.collided for r in records)
    records.append(_rec(4, 0, 10))
    resolve_collisions(records, 3, capability=4)
    assert all(r.collided for r in records)


def test_resolve_collisions_marks_are_monotone():
    records = [_rec(0, 0, 10, collided=True), _rec(1, 0, 10)]
    resolve_collisions(records, 5, capability=4)
    assert records[0].collided  # never cleared
    assert not records[1].collided  # 2 overlapping <= 4: no new marks


# -- configuration validation -----------------------------------------------

def test_config_requires_exactly_one_load_spec():
    with pytest.raises(ConfigError):
        SimConfig(n_stations=2, mpr_capability=1, policy=ConventionalDcf(),
                  duration_slots=100)
    with pytest.raises(ConfigError):
        SimConfig(n_stations=2, mpr_capability=1, policy=ConventionalDcf(),
                  duration_slots=100, arrival_rate_pps=1.0, offered_traffic=0.5)


def test_config_saturated_excludes_arrival_spec():
    with pytest.raises(ConfigError):
        SimConfig(n_stations=2, mpr_capability=1, policy=ConventionalDcf(),
                  duration_slots=100, saturated=True, offered_traffic=0.5)


def test_config_warmup_must_precede_end():
    with pytest.raises(ConfigError):
        SimConfig(n_stations=1, mpr_capability=1, policy=ConventionalDcf(),
                  duration_slots=100, warmup_slots=100, arrival_rate_pps=1.0)


def test_config_default_warmup_is_a_tenth():
    cfg = SimConfig(n_stations=1, mpr_capability=1, policy=ConventionalDcf(),
                    duration_slots=12345, arrival_rate_pps=1.0)
    assert cfg.effective_warmup_slots == 1234


def test_config_rejects_bad_counts():
    with pytest.raises(ConfigError):
        SimConfig(n_stations=0, mpr_capability=1, policy=ConventionalDcf(),
                  duration_slots=100, saturated=True)
    with pytest.raises(ConfigError):
        SimConfig(n_stations=1, mpr_capability=0, policy=ConventionalDcf(),
                  duration_slots=100, saturated=True)


# -- single-node immediate access -------------------------------------------

def test_single_node_never_draws_and_general_delay_is_exact():
    """Alone on the channel: DIFS then straight to the air, no backoff.

    Every packet's delay is exactly (3 + 172) slots = 8750 us, queued or
    not, because service starts at head-of-queue.
    """
    cfg = SimConfig(n_stations=1, mpr_capability=1, policy=ConventionalDcf(),
                    duration_slots=200_000, warmup_slots=0,
                    arrival_rate_pps=5.0, seed=9)
    world = SimWorld(cfg)
    report = world.run()
    assert report.dropped_total == 0
    assert report.transmission_efficiency_eta == 1.0
    assert report.delivered > 10
    assert report.mean_mac_delay_us == 8750.0
    # the backoff stream was never touched: it still matches a fresh spawn
    fresh = np.random.default_rng(np.random.SeedSequence(9).spawn(1)[0].spawn(2)[1])
    assert world._backoff_rngs[0].integers(2**31) == fresh.integers(2**31)


# -- hand-traced two-station overlap ----------------------------------------

def _inject_arrivals(world, per_node_us):
    for i, times in enumerate(per_node_us):
        arr = np.asarray(times, dtype=np.float64)
        world._arrival_us[i] = arr
        slots = (np.floor(arr / world.slot_us) + 1.0).astype(np.int64)
        world._arrival_slots[i] = slots
        world._next_arrival[i] = slots[0] if slots.size else np.iinfo(np.int64).max // 2


def test_two_station_overlap_trace_matches_hand_computation():
    """Two arrivals in the same slot, capability 2: one shared exchange.

    Hand time line (slot 50 us, DIFS 3 slots, airtime 172 slots):
      both packets arrive at t = 230 us, inside slot 4, so they join the
      queues at the slot-5 boundary (250 us) and service starts there;
      slots 5-7 are the three idle DIFS observations; both stations start
      on the slot-8 boundary with no counter drawn; frames occupy slots
      8..179; both finalize on the slot-180 boundary (9000 us).  Delay is
      9000 - 250 = 8750 us each, and the two frames never collide.
    """
    cfg = SimConfig(n_stations=2, mpr_capability=2,
                    policy=AdaptiveBackoff(capability=2, threshold=1),
                    duration_slots=200, warmup_slots=0,
                    arrival_rate_pps=0.0, seed=1)
    lines = []
    world = SimWorld(cfg, trace=lines.append, keep_records=True)
    _inject_arrivals(world, [[230.0], [230.0]])
    report = world.run()

    expected = (
        [f"{t} 0 I I" for t in range(0, 5)]
        + ["5 0 S1 S1", "6 0 S2 S2", "7 0 T T"]
        + [f"{t} 2 T T" for t in range(8, 180)]
        + [f"{t} 0 I I" for t in range(180, 200)]
    )
    assert lines == expected

    assert [(r.start_slot, r.end_slot, r.collided) for r in world.records] == [
        (8, 180, False), (8, 180, False)
    ]
    assert report.delivered == 2
    assert report.dropped_total == 0
    assert report.mean_mac_delay_us == 8750.0
    for node in report.per_node:
        assert node.mean_mac_delay_us == 8750.0
        assert node.transmission_efficiency_eta == 1.0


def test_countdown_decrement_follows_ongoing_headroom():
    """A counter of 5 with 2 frames on air drops by capability - 2 = 2."""
    cfg = SimConfig(n_stations=3, mpr_capability=4,
                    policy=AdaptiveBackoff(capability=4, threshold=3),
                    duration_slots=50, warmup_slots=0,
                    arrival_rate_pps=0.0, seed=1)
    world = SimWorld(cfg)
    watcher = world.nodes[0]
    watcher.queue.append(QueuedPacket(0.0, 0.0))
    watcher.phase = Phase.COUNTING_DOWN
    watcher.counter = 5
    world._waiting.append(watcher)
    for owner in (1, 2):
        node = world.nodes[owner]
        node.queue.append(QueuedPacket(0.0, 0.0))
        node.phase = Phase.TRANSMITTING
        rec = TransmissionRecord(owner=owner, start_slot=0, end_slot=10)
        world.active.append(rec)
        world._ends.append(rec)
    world.step_slot()
    assert watcher.counter == 3


def test_simultaneous_zero_crossing_within_capability_succeeds():
    """Two counters hit zero together; capability 2 carries both frames."""
    cfg = SimConfig(n_stations=2, mpr_capability=2,
                    policy=AdaptiveBackoff(capability=2, threshold=1),
                    duration_slots=300, warmup_slots=0,
                    arrival_rate_pps=0.0, seed=1)
    world = SimWorld(cfg, keep_records=True)
    for node in world.nodes:
        node.queue.append(QueuedPacket(0.0, 0.0))
        node.phase = Phase.COUNTING_DOWN
        node.counter = 4
        world._waiting.append(node)
    report = world.run()
    assert report.delivered == 2
    assert not any(r.collided for r in world.records)
    starts = {r.start_slot for r in world.records}
    assert len(starts) == 1  # same boundary


# -- forced-drop lockstep oracle --------------------------------------------

def test_forced_collision_lockstep_drops_after_five_attempts():
    """Six saturated stations, capability 1, degenerate window.

    Every draw is 0, so all six stations stay in lockstep forever: DIFS on
    slots 0-2, frames on slots [3, 175), retry DIFS on 175-177, and so on.
    Attempts start at slots 3 + 175*j; the fifth failure finalizes on the
    slot-875 boundary, so every packet drops with delay exactly 43750 us.
    """
    mac = MacParams(cw_min=1, max_backoff_stage=0)
    cfg = SimConfig(n_stations=6, mpr_capability=1, policy=ConventionalDcf(),
                    duration_slots=1800, warmup_slots=0, saturated=True,
                    mac=mac, seed=21)
    world = SimWorld(cfg, keep_records=True)
    report = world.run()

    assert report.delivered == 0
    assert report.normalized_throughput == 0.0
    assert report.transmission_efficiency_eta == 0.0
    assert report.dropped == 12  # two full drop cycles per station
    assert report.mean_mac_delay_us == 43750.0
    starts = sorted({r.start_slot for r in world.records})
    assert starts == [3 + 175 * j for j in range(len(starts))]
    assert all(r.collided for r in world.records if r.end_slot <= 1800)


# -- conservation, determinism, invariants -----------------------------------

def _mixed_configs():
    policies = [ConventionalDcf(), ThresholdBackoff(2), AdaptiveBackoff(3, 2)]
    out = []
    for i, policy in enumerate(policies):
        out.append(SimConfig(n_stations=4, mpr_capability=3, policy=policy,
                             duration_slots=40_000, offered_traffic=1.2,
                             seed=100 + i))
        out.append(SimConfig(n_stations=4, mpr_capability=3, policy=policy,
                             duration_slots=40_000, saturated=True,
                             seed=200 + i))
    return out


@pytest.mark.parametrize(
    "cfg", _mixed_configs(),
    ids=lambda c: f"{type(c.policy).__name__}-{'sat' if c.saturated else 'poisson'}",
)
def test_conservation_identity(cfg):
    report = run_simulation(cfg)
    assert report.arrivals_enqueued == (
        report.delivered_total + report.dropped_total + report.still_queued
    )
    for node in report.per_node:
        assert node.arrivals_enqueued == (
            node.delivered_total + node.dropped_total + node.still_queued
        )


def test_reports_are_bit_identical_for_fixed_seed():
    cfg = SimConfig(n_stations=5, mpr_capability=2, policy=AdaptiveBackoff(2, 1),
                    duration_slots=60_000, offered_traffic=0.9, seed=31)
    assert run_simulation(cfg).to_kv_lines() == run_simulation(cfg).to_kv_lines()


def test_traces_are_bit_identical_for_fixed_seed():
    cfg = SimConfig(n_stations=3, mpr_capability=2, policy=ThresholdBackoff(1),
                    duration_slots=5_000, offered_traffic=1.5, seed=13)
    first, second = [], []
    run_simulation(cfg, trace=first.append)
    run_simulation(cfg, trace=second.append)
    assert first == second


def test_event_jump_path_matches_slot_stepping():
    """The fast path must be an optimization, not a semantics change."""
    cases = []
    for policy in (ConventionalDcf(), ThresholdBackoff(1), AdaptiveBackoff(3, 2)):
        cases.append(SimConfig(n_stations=3, mpr_capability=3, policy=policy,
                               duration_slots=30_000, offered_traffic=1.0,
                               seed=51))
        cases.append(SimConfig(n_stations=3, mpr_capability=3, policy=policy,
                               duration_slots=30_000, saturated=True, seed=52))
    for cfg in cases:
        fast = run_simulation(cfg)
        slow = run_simulation(cfg, force_slot_stepping=True)
        assert fast.to_kv_lines() == slow.to_kv_lines()


def test_dcf_single_reception_never_exceeds_one_uncollided():
    cfg = SimConfig(n_stations=5, mpr_capability=1, policy=ConventionalDcf(),
                    duration_slots=60_000, saturated=True, seed=8)
    world = SimWorld(cfg, keep_records=True)
    report = world.run()
    good = [r for r in world.records if not r.collided]
    events = sorted([(r.start_slot, 1) for r in good] + [(r.end_slot, -1) for r in good])
    level = 0
    for _, delta in events:
        level += delta
        assert level <= 1
    assert report.normalized_throughput <= 1.0


def test_saturated_queues_never_drain():
    cfg = SimConfig(n_stations=4, mpr_capability=2, policy=AdaptiveBackoff(2, 1),
                    duration_slots=3_000, saturated=True, seed=17)
    world = SimWorld(cfg)
    while world.slot < cfg.duration_slots:
        world.step_slot()
        assert all(len(node.queue) >= 1 for node in world.nodes)


def test_adaptive_counter_never_below_negative_headroom():
    """Largest single decrement is the capability, so counters stay above
    -(capability - 1) even at the transmit-triggering crossing."""
    k = 4
    cfg = SimConfig(n_stations=8, mpr_capability=k,
                    policy=AdaptiveBackoff(k, k - 1),
                    duration_slots=30_000, saturated=True, seed=23)
    world = SimWorld(cfg)
    floor = -(k - 1)
    while world.slot < cfg.duration_slots:
        world.step_slot()
        for node in world.nodes:
            assert node.counter >= floor


def test_rate_zero_run_is_silent():
    cfg = SimConfig(n_stations=5, mpr_capability=2, policy=ConventionalDcf(),
                    duration_slots=10_000, arrival_rate_pps=0.0, seed=3)
    report = run_simulation(cfg)
    assert report.normalized_throughput == 0.0
    assert report.attempts == 0
    assert report.arrivals_enqueued == 0
