"""Command-line entry point for the whole pipeline.

Subcommands: gen-maps, gen-scens, solve, export-dataset, evaluate,
bench-scalability, aggregate, render. Every command is deterministic given
its seed flags. Failures exit nonzero with a one-line JSON error on stderr.
Set GRIDFLOW_LOG=debug|info|warning to control log verbosity.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob as globlib
import json
import logging
import os
import sys

from .core import Instance, Solution, parse_scen, render_scen, soc, validate
from .dataset import (
    DatasetRecipe,
    build_dataset,
    derive_seed,
    generate_maze,
    generate_scenario,
)
from .errors import GridflowError
from .expert import ExpertConfig, solve_prioritized
from .grid import parse_map, render_map
from .metrics import (
    aggregate,
    attach_performance,
    episode_metrics,
    rows_to_csv,
    rows_to_json,
    scalability,
)
from .render import render_trace
from .sim import EpisodeConfig, EpisodeTrace, make_policy, run_episode

log = logging.getLogger("gridflow")


def _instance_from_files(map_path: str, scen_path: str) -> Instance:
    with open(map_path) as f:
        grid = parse_map(f.read())
    with open(scen_path) as f:
        pairs = parse_scen(f.read())
    starts = [p[0] for p in pairs]
    goals = [p[1] for p in pairs]
    stem = os.path.splitext(os.path.basename(scen_path))[0]
    return Instance(grid, starts, goals, id=stem)


def cmd_gen_maps(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    for i in range(args.count):
        grid = generate_maze(
            args.height,
            args.width,
            wall_density=args.density,
            braid=args.braid,
            seed=derive_seed(args.seed, "map", i),
        )
        path = os.path.join(args.out_dir, f"maze-{i:03d}.map")
        with open(path, "w") as f:
            f.write(render_map(grid))
        log.info("wrote %s", path)
    print(json.dumps({"maps": args.count, "out_dir": args.out_dir}))
    return 0


def cmd_gen_scens(args) -> int:
    with open(args.map) as f:
        grid = parse_map(f.read())
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.map))[0]
    written = []
    for i in range(args.count):
        inst = generate_scenario(
            grid, args.agents, seed=derive_seed(args.seed, "scen", i), map_name=stem
        )
        pairs = list(zip(inst.starts, inst.goals))
        path = os.path.join(args.out, f"{stem}-a{args.agents}-c{i}.scen")
        with open(path, "w") as f:
            f.write(render_scen(pairs, stem, grid.width, grid.height))
        written.append(path)
        log.info("wrote %s", path)
    print(json.dumps({"scens": written}))
    return 0


def _solve_one(map_path, scen_path, timeout_ms, restarts, seed):
    """Worker for solve; returns a picklable result dict."""
    try:
        inst = _instance_from_files(map_path, scen_path)
        cfg = ExpertConfig(timeout_ms=timeout_ms, max_restarts=restarts, seed=seed)
        sol = solve_prioritized(inst, cfg)
        report = validate(inst, sol)
        return {
            "scen": scen_path,
            "ok": report.ok,
            "soc": soc(sol),
            "solution": json.loads(sol.to_json(inst.id)),
            "violations": report.violations,
        }
    except GridflowError as e:
        return {"scen": scen_path, "ok": False, "error": type(e).__name__, "detail": str(e)}


def cmd_solve(args) -> int:
    jobs = max(1, args.jobs)
    work = [(args.map, scen, args.timeout_ms, args.restarts, args.seed) for scen in args.scen]
    if jobs == 1 or len(work) == 1:
        results = [_solve_one(*w) for w in work]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, *zip(*work)))

    multi = len(args.scen) > 1
    if multi:
        os.makedirs(args.out, exist_ok=True)
    all_ok = True
    for res in results:
        ok = res.get("ok", False)
        all_ok = all_ok and ok
        if "solution" in res:
            stem = os.path.splitext(os.path.basename(res["scen"]))[0]
            out_path = os.path.join(args.out, stem + ".json") if multi else args.out
            with open(out_path, "w") as f:
                json.dump(res["solution"], f)
            res = {k: v for k, v in res.items() if k != "solution"}
            res["out"] = out_path
        print(json.dumps(res))
    if not all_ok:
        print(json.dumps({"error": "SolveFailed", "detail": "not all instances validated"}), file=sys.stderr)
    return 0 if all_ok else 1


def cmd_export_dataset(args) -> int:
    if args.recipe:
        with open(args.recipe) as f:
            recipe = DatasetRecipe.from_dict(json.load(f))
    else:
        recipe = DatasetRecipe()
    meta = build_dataset(recipe, args.out_dir)
    print(
        json.dumps(
            {
                "out_dir": args.out_dir,
                "sample_count": meta["sample_count"],
                "scenario_failures": meta["scenario_failures"],
                "samples_sha256": meta["samples_sha256"],
            }
        )
    )
    return 0


def _evaluate_one(map_path, scen_path, policy_spec, cfg_dict, out_path):
    """Worker for evaluate; returns a picklable report dict."""
    try:
        inst = _instance_from_files(map_path, scen_path)
        policy = make_policy(policy_spec, cfg_dict["policy_timeout_ms"])
        config = EpisodeConfig(**cfg_dict)
        trace = run_episode(inst, policy, config)
        trace.write(out_path)
        report = episode_metrics(trace)
        out = report.to_dict()
        out["trace"] = out_path
        return out
    except GridflowError as e:
        return {
            "scen": scen_path,
            "error": type(e).__name__,
            "detail": str(e),
        }


def cmd_evaluate(args) -> int:
    cfg_dict = dict(
        mode=args.mode,
        max_steps=args.max_steps,
        collision_mode=args.collision,
        select=args.select,
        seed=args.seed,
        lmapf_seed=args.lmapf_seed,
        normalize_indices=args.normalize_indices,
        policy_timeout_ms=args.policy_timeout_ms,
    )
    multi = len(args.scen) > 1
    if multi:
        os.makedirs(args.out, exist_ok=True)
    work = []
    for scen in args.scen:
        stem = os.path.splitext(os.path.basename(scen))[0]
        out_path = os.path.join(args.out, stem + ".trace.jsonl") if multi else args.out
        work.append((args.map, scen, args.policy, cfg_dict, out_path))
    jobs = max(1, args.jobs)
    if jobs == 1 or len(work) == 1:
        results = [_evaluate_one(*w) for w in work]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_one, *zip(*work)))
    failed = False
    for res in results:
        failed = failed or "error" in res
        print(json.dumps(res))
    return 1 if failed else 0


def cmd_bench_scalability(args) -> int:
    agent_counts = sorted({int(a) for a in args.agents.split(",") if a.strip()})
    if len(agent_counts) < 2:
        raise ValueError("--agents needs at least two distinct counts")
    if args.map:
        with open(args.map) as f:
            grid = parse_map(f.read())
        map_name = os.path.splitext(os.path.basename(args.map))[0]
    else:
        grid = generate_maze(
            args.height,
            args.width,
            wall_density=args.density,
            braid=0.3,
            seed=derive_seed(args.seed, "bench-map"),
        )
        map_name = "bench-maze"
    rows = []
    for count in agent_counts:
        latencies = []
        steps = 0
        for ep in range(args.episodes):
            inst = generate_scenario(
                grid, count, seed=derive_seed(args.seed, "bench", count, ep), map_name=map_name
            )
            policy = make_policy(args.policy, args.policy_timeout_ms)
            config = EpisodeConfig(
                mode="mapf",
                collision_mode="tolerant",
                max_steps=args.max_steps,
                seed=derive_seed(args.seed, "bench-ep", count, ep),
            )
            trace = run_episode(inst, policy, config)
            latencies.extend(s.latency_ms for s in trace.steps)
            steps += len(trace.steps)
        mean_ms = sum(latencies) / len(latencies) if latencies else 0.0
        rows.append({"agents": count, "mean_step_latency_ms": round(mean_ms, 3), "steps": steps})
        log.info("agents=%d mean step latency %.3f ms", count, mean_ms)
    pairs_out = []
    for a, b in zip(rows, rows[1:]):
        value = scalability(
            max(a["mean_step_latency_ms"], 1e-9),
            a["agents"],
            max(b["mean_step_latency_ms"], 1e-9),
            b["agents"],
        )
        pairs_out.append(
            {"agents_1": a["agents"], "agents_2": b["agents"], "scalability": round(value, 4)}
        )
    table = {"rows": rows, "pairs": pairs_out}
    print(json.dumps(table, indent=2))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(table, f, indent=2)
    return 0


def cmd_aggregate(args) -> int:
    paths = sorted(
        p
        for pat in ("*.jsonl", "*.trace.jsonl")
        for p in globlib.glob(os.path.join(args.traces, pat))
    )
    paths = sorted(set(paths))
    reports = [episode_metrics(EpisodeTrace.load(p)) for p in paths]
    attach_performance(reports)
    rows = aggregate(reports)
    with open(args.out + ".json", "w") as f:
        f.write(rows_to_json(rows))
    with open(args.out + ".csv", "w") as f:
        f.write(rows_to_csv(rows))
    print(rows_to_json(rows), end="")
    return 0


def cmd_render(args) -> int:
    trace = EpisodeTrace.load(args.trace)
    written = render_trace(trace, args.format, args.out_dir)
    print(json.dumps({"frames": len(written), "out_dir": args.out_dir}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="generate maze maps")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--braid", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("gen-scens", help="generate scenarios for a map")
    p.add_argument("--map", required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_scens)

    p = sub.add_parser("solve", help="run the expert solver")
    p.add_argument("--map", required=True)
    p.add_argument("--scen", required=True, nargs="+")
    p.add_argument("--timeout-ms", type=int, default=30_000)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="solution file, or directory for multiple scens")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("export-dataset", help="build a supervised dataset")
    p.add_argument("--recipe", help="recipe JSON; omit for the default desk recipe")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_dataset)

    p = sub.add_parser("evaluate", help="run closed-loop episodes")
    p.add_argument("--map", required=True)
    p.add_argument("--scen", required=True, nargs="+")
    p.add_argument("--policy", required=True, help='"builtin:<name>" or a command line')
    p.add_argument("--mode", choices=["mapf", "lmapf"], default="mapf")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--collision", choices=["strict", "tolerant"], default="strict")
    p.add_argument("--select", choices=["argmax", "sample"], default="argmax")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lmapf-seed", type=int, default=None)
    p.add_argument("--normalize-indices", action="store_true")
    p.add_argument("--policy-timeout-ms", type=int, default=60_000)
    p.add_argument("--out", required=True, help="trace file, or directory for multiple scens")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-scalability", help="policy latency vs agent count")
    p.add_argument("--policy", required=True)
    p.add_argument("--agents", required=True, help="comma-separated counts, e.g. 8,16")
    p.add_argument("--map", help="map file; omit to generate a maze")
    p.add_argument("--height", type=int, default=16)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--episodes", type=int, default=3)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy-timeout-ms", type=int, default=60_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench_scalability)

    p = sub.add_parser("aggregate", help="summarize traces into tables")
    p.add_argument("--traces", required=True, help="directory of trace .jsonl files")
    p.add_argument("--out", required=True, help="output path prefix (.json and .csv)")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("render", help="render a trace to frames")
    p.add_argument("--trace", required=True)
    p.add_argument("--format", choices=["svg", "ascii"], default="ascii")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("GRIDFLOW_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (GridflowError, ValueError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "detail": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
