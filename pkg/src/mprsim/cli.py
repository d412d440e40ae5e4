"""Command-line front end: single runs, parameter sweeps, matrix tools.

Subcommands:

* ``run``    one configuration, JSON report on stdout
* ``sweep``  replicate one configuration across parameter values, CSV/JSON
             rows (optionally also a figure rendered next to the data)
* ``kequiv`` equivalent capability of a reception-matrix file
* ``plot``   re-render a figure from a previously written sweep CSV

Exit codes: 0 success, 2 configuration/usage errors, 1 internal errors.
A flat ``key = value`` config file can seed any simulation option; explicit
flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import traceback
from dataclasses import dataclass, replace

from .channel import MatrixError, TieRule, equivalent_capability, expected_successes, load_matrix
from .engine import (
    AdaptiveBackoff,
    ConfigError,
    ConventionalDcf,
    SimConfig,
    ThresholdBackoff,
    run_simulation,
)
from .mac import MacParams
from .metrics import ReplicationSummary, aggregate_replications

SWEEP_PARAMETERS = ("u", "n_stations", "mpr_k", "threshold", "cw_min")
CSV_COLUMNS = (
    "swept_value",
    "throughput_mean",
    "throughput_std",
    "delay_mean_us",
    "delay_std_us",
    "eta_mean",
    "eta_std",
    "dropped_mean",
    "replications",
)

# dest name -> (parser, hard default); None defaults mean "absent".
_OPTIONS: dict[str, tuple] = {
    "policy": (str, "dcf"),
    "k": (int, 1),
    "kt": (int, None),
    "lt": (int, None),
    "n": (int, 30),
    "u": (float, None),
    "rate_pps": (float, None),
    "saturated": (None, False),  # boolean, special-cased
    "cwmin": (int, 128),
    "m": (int, 5),
    "retry_limit": (int, 4),
    "slot_us": (float, 50.0),
    "difs_us": (float, 128.0),
    "payload_bits": (int, 8184),
    "mac_header_bits": (int, 272),
    "phy_header_bits": (int, 128),
    "bitrate": (float, 1e6),
    "duration_slots": (int, 2_000_000),
    "warmup_slots": (int, None),
    "seed": (int, 1),
    "replications": (int, 1),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_file(path: str) -> dict:
    """Read flat ``key = value`` lines; '#' starts a comment."""
    values: dict = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, val = text.partition("=")
            dest = key.strip().replace("-", "_")
            val = val.strip()
            if dest not in _OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown option {key.strip()!r}")
            parser, _ = _OPTIONS[dest]
            try:
                values[dest] = _parse_bool(val) if parser is None else parser(val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def _merge_options(args: argparse.Namespace) -> dict:
    """Flags beat config-file values beat hard defaults."""
    file_values = parse_config_file(args.config) if args.config else {}
    merged = {}
    for dest, (_, default) in _OPTIONS.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            merged[dest] = flag
        elif dest in file_values:
            merged[dest] = file_values[dest]
        else:
            merged[dest] = default
    return merged


def build_policy(merged: dict):
    kind = merged["policy"]
    k = merged["k"]
    if kind == "dcf":
        if merged["kt"] is not None or merged["lt"] is not None:
            raise ConfigError("--kt/--lt make no sense with --policy dcf")
        return ConventionalDcf()
    if kind == "threshold":
        if merged["kt"] is not None:
            raise ConfigError("--kt applies to the adaptive policy; use --lt")
        limit = merged["lt"] if merged["lt"] is not None else k - 1
        return ThresholdBackoff(limit=limit)
    if kind == "adaptive":
        if merged["lt"] is not None:
            raise ConfigError("--lt applies to the threshold policy; use --kt")
        threshold = merged["kt"] if merged["kt"] is not None else k - 1
        return AdaptiveBackoff(capability=k, threshold=threshold)
    raise ConfigError(f"unknown policy {kind!r}")


def build_config(merged: dict) -> SimConfig:
    try:
        policy = build_policy(merged)
        mac = MacParams(
            payload_bits=merged["payload_bits"],
            mac_header_bits=merged["mac_header_bits"],
            phy_header_bits=merged["phy_header_bits"],
            bitrate_bps=merged["bitrate"],
            slot_us=merged["slot_us"],
            difs_us=merged["difs_us"],
            cw_min=merged["cwmin"],
            max_backoff_stage=merged["m"],
            retry_limit=merged["retry_limit"],
        )
        return SimConfig(
            n_stations=merged["n"],
            mpr_capability=merged["k"],
            policy=policy,
            duration_slots=merged["duration_slots"],
            mac=mac,
            arrival_rate_pps=merged["rate_pps"],
            offered_traffic=merged["u"],
            saturated=merged["saturated"],
            warmup_slots=merged["warmup_slots"],
            seed=merged["seed"],
        )
    except ValueError as exc:  # MacParams/policy raise plain ValueError
        raise ConfigError(str(exc)) from None


# -- sweeps ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, applied pointwise to a base configuration."""

    base: SimConfig
    parameter: str
    values: tuple
    replications: int

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigError(
                f"swept parameter must be one of {SWEEP_PARAMETERS}, "
                f"got {self.parameter!r}"
            )
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if self.replications < 1:
            raise ConfigError(
                f"replications must be >= 1, got {self.replications}"
            )


def replication_seed(master_seed: int, point_index: int, rep: int) -> int:
    """Deterministic per-run seed: distinct per sweep point and replication."""
    return master_seed + point_index * 10007 + rep


def apply_sweep_value(base: SimConfig, parameter: str, value) -> SimConfig:
    """Derive the configuration of one sweep point.

    Capability sweeps (``mpr_k``) rederive the policy threshold as the new
    capability minus one, the convention used when comparing capabilities.
    """
    if parameter == "u":
        if base.saturated:
            raise ConfigError("cannot sweep u on a saturated configuration")
        return replace(base, offered_traffic=float(value), arrival_rate_pps=None)
    if parameter == "n_stations":
        return replace(base, n_stations=int(value))
    if parameter == "mpr_k":
        k = int(value)
        policy = base.policy
        if isinstance(policy, AdaptiveBackoff):
            policy = AdaptiveBackoff(capability=k, threshold=k - 1)
        elif isinstance(policy, ThresholdBackoff):
            policy = ThresholdBackoff(limit=k - 1)
        return replace(base, mpr_capability=k, policy=policy)
    if parameter == "threshold":
        v = int(value)
        policy = base.policy
        if isinstance(policy, AdaptiveBackoff):
            policy = AdaptiveBackoff(capability=policy.capability, threshold=v)
        elif isinstance(policy, ThresholdBackoff):
            policy = ThresholdBackoff(limit=v)
        else:
            raise ConfigError("cannot sweep threshold with --policy dcf")
        return replace(base, policy=policy)
    if parameter == "cw_min":
        return replace(base, mac=replace(base.mac, cw_min=int(value)))
    raise ConfigError(f"unknown sweep parameter {parameter!r}")


def run_sweep(spec: SweepSpec) -> list[tuple[float, ReplicationSummary]]:
    """Execute every (point, replication) run and aggregate per point.

    Results are keyed by (point index, replication index), so the outcome
    does not depend on execution order.
    """
    rows = []
    for s, value in enumerate(spec.values):
        point = apply_sweep_value(spec.base, spec.parameter, value)
        reports = [
            run_simulation(
                replace(point, seed=replication_seed(spec.base.seed, s, r))
            )
            for r in range(spec.replications)
        ]
        rows.append((value, aggregate_replications(reports)))
    return rows


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".6g")


def sweep_rows_to_csv(rows: list[tuple[float, ReplicationSummary]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for value, summary in rows:
        writer.writerow(
            [
                _fmt(value),
                _fmt(summary.throughput_mean),
                _fmt(summary.throughput_std),
                _fmt(summary.delay_mean_us),
                _fmt(summary.delay_std_us),
                _fmt(summary.eta_mean),
                _fmt(summary.eta_std),
                _fmt(summary.dropped_mean),
                str(summary.replications),
            ]
        )
    return buf.getvalue()


def sweep_rows_to_json(rows: list[tuple[float, ReplicationSummary]]) -> str:
    out = []
    for value, summary in rows:
        entry = {"swept_value": value}
        entry.update(summary.to_dict())
        out.append(entry)
    return json.dumps(out, indent=2)


# -- subcommands -------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    config = build_config(merged)
    replications = merged["replications"]
    trace_fh = open(args.trace, "w", encoding="ascii") if args.trace else None
    try:
        trace = (lambda line: trace_fh.write(line + "\n")) if trace_fh else None
        if replications == 1:
            report = run_simulation(config, trace=trace)
            print(json.dumps(report.to_dict(), indent=2))
        else:
            reports = [
                run_simulation(
                    replace(config, seed=replication_seed(config.seed, 0, r)),
                    trace=trace if r == 0 else None,
                )
                for r in range(replications)
            ]
            payload = {
                "replications": replications,
                "aggregate": aggregate_replications(reports).to_dict(),
                "runs": [rep.to_dict() for rep in reports],
            }
            print(json.dumps(payload, indent=2))
    finally:
        if trace_fh:
            trace_fh.close()
    return 0


def _parse_values(text: str, parameter: str) -> tuple:
    try:
        raw = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --values: {exc}") from None
    if parameter == "u":
        return tuple(raw)
    return tuple(int(v) for v in raw)


def cmd_sweep(args: argparse.Namespace) -> int:
    merged = _merge_options(args)
    if args.param == "mpr_k" and (merged["kt"] is not None or merged["lt"] is not None):
        raise ConfigError(
            "capability sweeps set the policy threshold to K-1; drop --kt/--lt"
        )
    values = _parse_values(args.values, args.param)
    if args.param == "u":
        # pointwise value replaces any base arrival spec
        merged = dict(merged, u=values[0], rate_pps=None)
    spec = SweepSpec(
        base=build_config(merged),
        parameter=args.param,
        values=values,
        replications=merged["replications"],
    )
    rows = run_sweep(spec)
    text = sweep_rows_to_csv(rows) if args.out == "csv" else sweep_rows_to_json(rows)
    if args.output:
        with open(args.output, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    if args.plot:
        from .plotting import render_sweep_figure

        render_sweep_figure(rows, args.plot, xlabel=args.param)
    return 0


def cmd_kequiv(args: argparse.Namespace) -> int:
    matrix = load_matrix(args.matrix)
    tie = TieRule.MIDDLE if args.tie == "middle" else TieRule.MINIMUM
    k = equivalent_capability(matrix, tie)
    vector = [
        expected_successes(matrix, i) for i in range(1, matrix.n_max + 1)
    ]
    print(f"k_equiv {k}")
    print("expected_successes " + " ".join(_fmt(v) for v in vector))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    from .plotting import render_sweep_figure

    rows = []
    with open(args.csv, "r", encoding="ascii", newline="") as fh:
        for record in csv.DictReader(fh):
            try:
                summary = ReplicationSummary(
                    replications=int(record["replications"]),
                    throughput_mean=float(record["throughput_mean"]),
                    throughput_std=float(record["throughput_std"]),
                    delay_mean_us=float(record["delay_mean_us"]),
                    delay_std_us=float(record["delay_std_us"]),
                    eta_mean=float(record["eta_mean"]),
                    eta_std=float(record["eta_std"]),
                    delivered_mean=0.0,
                    dropped_mean=float(record["dropped_mean"]),
                    attempts_mean=0.0,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{args.csv}: not a sweep CSV ({exc})") from None
            rows.append((float(record["swept_value"]), summary))
    render_sweep_figure(rows, args.output, xlabel=args.xlabel)
    return 0


# -- argument parsing --------------------------------------------------------


def _add_sim_options(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("simulation")
    g.add_argument("--policy", choices=("dcf", "threshold", "adaptive"))
    g.add_argument("--k", type=int, help="channel MPR capability")
    g.add_argument("--kt", type=int, help="adaptive countdown threshold (default K-1)")
    g.add_argument("--lt", type=int, help="threshold-policy limit (default K-1)")
    g.add_argument("--n", type=int, help="number of stations")
    g.add_argument("--u", type=float, help="normalized aggregate offered traffic")
    g.add_argument("--rate-pps", type=float, help="per-station Poisson rate [pkt/s]")
    g.add_argument("--saturated", action="store_const", const=True,
                   help="every station always has a packet; no arrival process")
    g.add_argument("--cwmin", type=int, help="minimum contention window")
    g.add_argument("--m", type=int, help="maximum backoff stage")
    g.add_argument("--retry-limit", type=int, help="retransmissions per frame")
    g.add_argument("--slot-us", type=float, help="slot duration [us]")
    g.add_argument("--difs-us", type=float, help="DIFS duration [us]")
    g.add_argument("--payload-bits", type=int)
    g.add_argument("--mac-header-bits", type=int)
    g.add_argument("--phy-header-bits", type=int)
    g.add_argument("--bitrate", type=float, help="channel bitrate [b/s]")
    g.add_argument("--duration-slots", type=int)
    g.add_argument("--warmup-slots", type=int,
                   help="slots excluded from statistics (default duration/10)")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--replications", type=int)
    g.add_argument("--config", help="flat key = value file; flags override")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mprsim",
        description="Slotted CSMA/CA simulator for multi-packet reception channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configuration, JSON report")
    _add_sim_options(p_run)
    p_run.add_argument("--trace", help="write a per-slot trace to this file")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one parameter, CSV/JSON rows")
    _add_sim_options(p_sweep)
    p_sweep.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated parameter values")
    p_sweep.add_argument("--out", choices=("csv", "json"), default="csv")
    p_sweep.add_argument("--output", help="write rows here instead of stdout")
    p_sweep.add_argument("--plot", help="also render a figure to this file")
    p_sweep.set_defaults(func=cmd_sweep)

    p_keq = sub.add_parser("kequiv", help="equivalent capability of a matrix file")
    p_keq.add_argument("matrix", help="reception matrix text file")
    p_keq.add_argument("--tie", choices=("min", "middle"), default="min")
    p_keq.set_defaults(func=cmd_kequiv)

    p_plot = sub.add_parser("plot", help="render a figure from a sweep CSV")
    p_plot.add_argument("csv", help="CSV written by the sweep subcommand")
    p_plot.add_argument("--output", required=True, help="image file to write")
    p_plot.add_argument("--xlabel", default="swept value")
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the diagnostic
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, MatrixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
