"""Command line front end: run scenarios, train forecasters, build
comparison reports, and cross-check the optimizers against brute force."""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .corridor import build_corridor
from .forecast import load_model, save_model
from .green_optimizer import optimize_intersection
from .harness import (
    ADAPTIVE,
    BASELINE,
    RunResult,
    compare,
    direction_metrics,
    format_report,
    load_scenario,
    read_metrics_csv,
    run_scenario,
    train_forecaster,
    write_decision_log,
    write_metrics_csv,
    write_offset_log,
)
from .offset_optimizer import optimize_offset, t1_candidates, triangle_delay


def _cmd_run(args) -> int:
    config = load_scenario(args.config)
    if args.mode:
        config.controller = args.mode
    if args.penetration is not None:
        config.cv_penetration = args.penetration
    config.validate()
    model = load_model(args.model) if args.model else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds] if args.seeds else config.seeds
    tag = "adaptive" if config.controller == ADAPTIVE else "baseline"
    for seed in seeds:
        result = run_scenario(config, seed, model=model)
        write_metrics_csv(out / f"metrics_{tag}_{seed}.csv", result.detector_rows)
        if result.decision_rows:
            write_decision_log(out / f"decisions_{tag}_{seed}.csv", result.decision_rows)
        if result.offset_rows:
            write_offset_log(out / f"offsets_{tag}_{seed}.csv", result.offset_rows)
        summary = {
            "seed": seed,
            "controller": config.controller,
            "cv_penetration": config.cv_penetration,
            "spawned": result.spawned,
            "retired": result.retired,
            "directions": direction_metrics(result),
        }
        (out / f"summary_{tag}_{seed}.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True))
        print(f"run {tag} seed {seed}: spawned {result.spawned} "
              f"retired {result.retired}")
    return 0


def _cmd_train(args) -> int:
    config = load_scenario(args.config)
    if args.penetration is not None:
        config.cv_penetration = args.penetration
    grid = tuple({"hidden": h} for h in args.hidden)
    model = train_forecaster(
        config, data_seeds=[int(s) for s in args.data_seeds],
        lookback=args.lookback, grid=grid, batch_sizes=tuple(args.batch),
        train_seed=args.train_seed, max_epochs=args.epochs,
    )
    save_model(args.out, model)
    print(f"saved model to {args.out}: hidden={model.hidden} "
          f"batch={model.batch_size} val_rmse={model.val_rmse:.3f}")
    for hidden, batch, rmse in model.meta.get("grid_results", []):
        print(f"  candidate hidden={hidden} batch={batch} val_rmse={rmse:.3f}")
    return 0


def _load_runs(directory: Path, tag: str, config) -> list[RunResult]:
    corridor = build_corridor(config.raw)
    runs = []
    for path in sorted(directory.glob(f"metrics_{tag}_*.csv")):
        seed = int(path.stem.rsplit("_", 1)[1])
        runs.append(RunResult(
            controller=ADAPTIVE if tag == "adaptive" else BASELINE,
            seed=seed, penetration=config.cv_penetration,
            detector_rows=read_metrics_csv(path), trips=[], decision_rows=[],
            offset_rows=[], spawned=0, retired=0, warmup_s=config.warmup_s,
            corridor=corridor,
        ))
    return runs


def _cmd_report(args) -> int:
    config = load_scenario(args.config)
    baseline_runs = _load_runs(Path(args.baseline_dir), "baseline", config)
    adaptive_runs = _load_runs(Path(args.adaptive_dir), "adaptive", config)
    if not baseline_runs or not adaptive_runs:
        print("no stored runs found", file=sys.stderr)
        return 1
    report = compare(baseline_runs, adaptive_runs)
    text = format_report(report)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _cmd_oracle(args) -> int:
    """Cross-check the exact solvers against freshly written enumerations."""
    rng = np.random.default_rng(args.seed)
    worst_green = 0.0
    from .green_optimizer import PlatoonInput, TimingProblem

    for _ in range(args.instances):
        n = int(rng.choice([1, 2, 2, 3]))
        platoons = []
        for _ in range(n):
            cv = int(rng.integers(1, 4))
            platoons.append(PlatoonInput(
                length_mi=float(rng.uniform(0.02, 0.12)),
                avg_speed_mph=float(rng.uniform(8.0, 40.0)),
                dist_to_stopline_mi=float(rng.uniform(0.03, 0.3)),
                cv_count=cv, est_total_count=cv + float(rng.uniform(0, 12)),
            ))
        g_min = int(rng.integers(4, 9))
        problem = TimingProblem(
            platoons=platoons, predicted_count=float(rng.uniform(5, 35)),
            segment_length_mi=0.5, sat_headway_s=2.5, intergreen_s=6.0,
            queue_clear_s=float(rng.uniform(0, g_min)), cycle_s=90.0,
            g_min_s=float(g_min), g_max_s=float(g_min + int(rng.integers(3, 18))),
            available_green_s=78.0)
        sol = optimize_intersection(problem)
        ref = _green_reference(problem)
        worst_green = max(worst_green, abs(sol.objective - ref))
    print(f"green solver vs reference over {args.instances} instances: "
          f"max objective gap {worst_green:.2e}")

    from .offset_optimizer import OffsetProblem
    mismatches = 0
    for _ in range(args.instances):
        prob = OffsetProblem(
            upstream_intergreen_s=float(rng.integers(4, 40)),
            downstream_intergreen_s=float(rng.integers(4, 40)),
            side_flow_1_vph=float(rng.uniform(0, 400)),
            side_flow_2_vph=float(rng.uniform(0, 400)),
            upstream_flow_vph=float(rng.uniform(100, 1200)),
            segment_length_mi=float(rng.uniform(0.3, 0.8)),
            ffs_mph=45.0, v_bf_mph=-float(rng.uniform(0, 12)), cycle_s=90.0)
        sol = optimize_offset(prob)
        ref = _offset_reference(prob)
        if (sol is None) != (ref is None):
            mismatches += 1
        elif sol is not None and (sol.t1_s, sol.t2_s) != ref[:2]:
            mismatches += 1
    print(f"offset solver vs reference over {args.instances} instances: "
          f"{mismatches} mismatches")
    return 1 if (mismatches or worst_green > 1e-9) else 0


def _green_reference(problem):
    """Plain-loop scalarized optimum for the oracle subcommand."""
    grid = [min(k * 0.05, 1.0) for k in range(21)]
    g_hi = int(math.floor(problem.g_max_s))
    feas = []
    for fr in itertools.product(grid, repeat=len(problem.platoons)):
        t_q = problem.queue_clear_s
        t_s = problem.intergreen_s
        t_p = 0.0
        prog = 0.0
        for p, f in zip(problem.platoons, fr):
            speed = max(p.avg_speed_mph, 1.0)
            if f > 0:
                if p.affected_by_queue:
                    t_q += (p.length_mi * f + p.dist_ahead_mi) / speed * 3600.0
                else:
                    t_q += (p.dist_to_stopline_mi + p.length_mi * f) / speed * 3600.0
            t_s += p.length_mi * (1 - f) * problem.predicted_count \
                * problem.sat_headway_s / problem.segment_length_mi
            if f == 0.0:
                t_p += problem.cycle_s * p.est_total_count
            prog += p.cv_count + max(0.0, p.est_total_count - p.cv_count) * f
        if t_q <= g_hi + 1e-9:
            feas.append((t_q + t_s + t_p, prog))
    j1 = [a for a, _ in feas]
    j2 = [b for _, b in feas]
    lo1, hi1, lo2, hi2 = min(j1), max(j1), min(j2), max(j2)
    best = math.inf
    for a, b in feas:
        n1 = 0.0 if hi1 == lo1 else (a - lo1) / (hi1 - lo1)
        n2 = 0.0 if hi2 == lo2 else (b - lo2) / (hi2 - lo2)
        best = min(best, problem.w_delay * n1 - problem.w_progression * n2)
    return best


def _offset_reference(prob):
    cap = prob.segment_length_mi / (prob.ffs_mph * prob.alpha) * 3600.0
    best = None
    for t1 in t1_candidates(prob.cycle_s):
        t2 = prob.downstream_intergreen_s - abs(prob.upstream_intergreen_s - t1)
        if abs(t2) > cap + 1e-9 or abs(t2) > prob.cycle_s / 2 + 1e-9:
            continue
        d = triangle_delay(prob, t1, t2)
        key = (d, abs(t2), t1)
        if best is None or key < best:
            best = key
            pick = (t1, int(round(t2)), d)
    return None if best is None else pick


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cvsignal",
        description="Connected-vehicle adaptive arterial signal control lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario over one or more seeds")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seeds", nargs="*", default=None)
    p_run.add_argument("--mode", choices=[ADAPTIVE, BASELINE], default=None)
    p_run.add_argument("--penetration", type=float, default=None)
    p_run.add_argument("--model", default=None, help="forecaster checkpoint")
    p_run.set_defaults(func=_cmd_run)

    p_train = sub.add_parser("train", help="train a count forecaster")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--data-seeds", nargs="+", default=["101"])
    p_train.add_argument("--penetration", type=float, default=None)
    p_train.add_argument("--hidden", nargs="+", type=int, default=[10])
    p_train.add_argument("--batch", nargs="+", type=int, default=[64])
    p_train.add_argument("--epochs", type=int, default=12)
    p_train.add_argument("--lookback", type=int, default=10)
    p_train.add_argument("--train-seed", type=int, default=0)
    p_train.set_defaults(func=_cmd_train)

    p_rep = sub.add_parser("report", help="compare stored baseline/adaptive runs")
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("--baseline-dir", required=True)
    p_rep.add_argument("--adaptive-dir", required=True)
    p_rep.add_argument("--out", default=None)
    p_rep.set_defaults(func=_cmd_report)

    p_orc = sub.add_parser("oracle", help="brute-force solver cross-checks")
    p_orc.add_argument("--instances", type=int, default=50)
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.set_defaults(func=_cmd_oracle)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
