"""Batch scenario execution, metrics aggregation and log export.

Usage:
    swarmplan scenario.yaml -o out/ [--runs N] [--latency S] [--seed N]
                            [--compute-mode synthetic|measured] [--no-logs]

Per run the output directory receives trajectory.csv, decisions.log,
metrics.json and world.json; the batch writes aggregate.json and a readable
table. The process exits 0 only when no run had a collision or timeout.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_scenario
from .sim import TRAJECTORY_HEADER, RunResult, run_scenario


def derive_seed(master_seed: int, run_idx: int) -> int:
    """Stable per-run seed derived from the master seed."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(run_idx,))
    return int(ss.generate_state(1)[0])


def _stat_triple(values) -> dict:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"mean": 0.0, "max": 0.0, "std": 0.0}
    return {"mean": float(arr.mean()), "max": float(arr.max()),
            "std": float(arr.std())}


def aggregate_metrics(reports: list[dict]) -> dict:
    """Batch statistics in the shape of the comparison tables: collision
    percentage, mean stops, and mean/max/std per continuous metric."""
    coll = [r["collision_occurred"] for r in reports]
    agg = {
        "runs": len(reports),
        "collision_pct": 100.0 * sum(coll) / len(reports),
        "timeouts": sum(1 for r in reports if r["timeout"]),
        "all_arrived_pct": 100.0 * sum(
            1 for r in reports if r["arrivals"] and all(r["arrivals"])) / len(reports),
        "mean_stops": float(np.mean([r["num_stops"] for r in reports])),
        "accel_cost": _stat_triple([r["accel_cost"] for r in reports]),
        "jerk_cost": _stat_triple([r["jerk_cost"] for r in reports]),
        "flight_time": _stat_triple(
            [ft for r in reports for ft in r["flight_times"]]),
        "distance": _stat_triple(
            [d for r in reports for d in r["distances"]]),
        "speed": _stat_triple(
            [v for r in reports for v in r["mean_speeds"]]),
        "compute_time_ms": _stat_triple(
            [1e3 * c for r in reports for c in r["compute_times"]]),
    }
    return agg


def format_table(agg: dict, label: str) -> str:
    def trip(key):
        t = agg[key]
        return f"{t['mean']:.3g} / {t['max']:.3g} / {t['std']:.3g}"

    lines = [
        f"batch: {label} ({agg['runs']} runs)",
        f"  collision %        : {agg['collision_pct']:.1f}",
        f"  goal arrival %     : {agg['all_arrived_pct']:.1f}",
        f"  timeouts           : {agg['timeouts']}",
        f"  mean # stops       : {agg['mean_stops']:.3g}",
        f"  accel cost         : {trip('accel_cost')} (mean/max/std)",
        f"  jerk cost          : {trip('jerk_cost')}",
        f"  flight time (s)    : {trip('flight_time')}",
        f"  distance (m)       : {trip('distance')}",
        f"  speed (m/s)        : {trip('speed')}",
        f"  compute time (ms)  : {trip('compute_time_ms')}",
    ]
    return "\n".join(lines)


def _world_dict(result: RunResult, cfg: ScenarioConfig) -> dict:
    return {
        "bounds": {"min": list(map(float, cfg.bounds_lo)),
                   "max": list(map(float, cfg.bounds_hi))},
        "obstacles": [{"min": ob.lo.tolist(), "max": ob.hi.tolist()}
                      for ob in result.world.obstacles],
        "starts": cfg.starts.tolist(),
        "goals": cfg.goals.tolist(),
    }


def write_run_outputs(out_dir: Path, result: RunResult, cfg: ScenarioConfig,
                      write_logs: bool = True) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if write_logs:
        with open(out_dir / "trajectory.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write(TRAJECTORY_HEADER + "\n")
            fh.write("\n".join(result.trajectory_rows))
            fh.write("\n")
        with open(out_dir / "decisions.log", "w", encoding="utf-8", newline="") as fh:
            fh.write("# t,k,agent,decision,reason,consumed\n")
            fh.write("\n".join(result.decision_lines))
            fh.write("\n")
        with open(out_dir / "world.json", "w", encoding="utf-8") as fh:
            json.dump(_world_dict(result, cfg), fh, indent=1, sort_keys=True)
    with open(out_dir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(result.metrics.to_dict(), fh, indent=1, sort_keys=True)


def run_batch(cfg: ScenarioConfig, out_dir: Path | None = None,
              write_logs: bool = True, quiet: bool = False) -> dict:
    """Execute cfg.runs seeded simulations and aggregate their metrics."""
    reports = []
    for run_idx in range(cfg.runs):
        seed = derive_seed(cfg.seed, run_idx)
        result = run_scenario(cfg, seed=seed)
        reports.append(result.metrics.to_dict())
        if out_dir is not None:
            write_run_outputs(out_dir / f"run_{run_idx:03d}", result, cfg,
                              write_logs=write_logs)
        if not quiet:
            m = result.metrics
            status = "ok" if (not m.collision_occurred and not m.timeout) else "FAIL"
            print(f"run {run_idx:3d} seed {seed:>10}: {status} "
                  f"flight {m.mean_flight_time:.2f}s stops {m.num_stops} "
                  f"violations {len(m.violations)}")
    agg = aggregate_metrics(reports)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "aggregate.json", "w", encoding="utf-8") as fh:
            json.dump(agg, fh, indent=1, sort_keys=True)
        with open(out_dir / "table.txt", "w", encoding="utf-8") as fh:
            fh.write(format_table(agg, cfg.name) + "\n")
    return agg


def apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    cfg = copy.deepcopy(cfg)
    if args.runs is not None:
        cfg.runs = args.runs
    if args.latency is not None:
        cfg.network.latency = args.latency
    if args.seed is not None:
        cfg.seed = args.seed
    if args.compute_mode is not None:
        cfg.compute.mode = args.compute_mode
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="swarmplan",
        description="Run multi-agent planning scenarios and collect metrics.")
    ap.add_argument("scenario", help="scenario YAML file")
    ap.add_argument("-o", "--output", default=None, help="output directory")
    ap.add_argument("--runs", type=int, default=None, help="override run count")
    ap.add_argument("--latency", type=float, default=None,
                    help="override uniform pair latency (seconds)")
    ap.add_argument("--seed", type=int, default=None, help="override master seed")
    ap.add_argument("--compute-mode", choices=["synthetic", "measured"],
                    default=None, help="override compute model")
    ap.add_argument("--no-logs", action="store_true",
                    help="skip per-run trajectory/decision logs")
    ap.add_argument("-q", "--quiet", action="store_true")
    args = ap.parse_args(argv)

    try:
        cfg = load_scenario(args.scenario)
        cfg = apply_overrides(cfg, args)
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    out_dir = Path(args.output) if args.output else None
    agg = run_batch(cfg, out_dir, write_logs=not args.no_logs, quiet=args.quiet)
    print(format_table(agg, cfg.name))
    ok = agg["collision_pct"] == 0.0 and agg["timeouts"] == 0
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
