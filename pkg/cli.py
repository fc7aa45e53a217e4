#!/usr/bin/env python3
"""
PlanStitch command line.

Usage:
    python cli.py gen-maze --width 21 --height 21 --seed 3 --out mazes/my.txt
    python cli.py gen-data --config run.env --out data/medium.txt
    python cli.py waypoints --config run.env --out data/medium.wp
    python cli.py build-graph --config run.env --out graphs/medium.json
    python cli.py run --config run.env --oc.budget 50
    python cli.py bench --config run.env --suite guidance [--strict] [--db]
    python cli.py render --maze medium --plan plan.txt [--tree tree.txt] --out scene.svg
    python cli.py serve [--host HOST] [--port PORT]

Every option after the subcommand's own flags is a dotted config override
(``--oc.budget 50``). Exit codes: 0 success, 1 a run failed, 2 config error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import ConfigError, env_workers, load_run_config, setup_logging
from maze_env import MazeParseError, TaskSamplingError, generate_dataset, generate_maze, load_maze, maze_to_text

logger = logging.getLogger("planstitch")

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def _add_config(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="Flat key=value config file")
    parser.add_argument("--workers", type=int, help="Grid workers (default: $PLANSTITCH_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planstitch", description="Compositional plan search over maze worlds")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING (default: $PLANSTITCH_LOG_LEVEL or INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maze", help="Generate a random thin-wall maze")
    p.add_argument("--width", type=int, default=21)
    p.add_argument("--height", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loops", type=float, default=0.0, help="Share of passage walls to open")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gen-data", help="Write a random-walk dataset")
    _add_config(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("waypoints", help="Cluster dataset states into waypoints")
    _add_config(p)
    p.add_argument("--dataset", help="Dataset file (default: generate from config)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-graph", help="Prebuild the plan graph over waypoints")
    _add_config(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="Run the configured composer over the task x seed grid")
    _add_config(p)

    p = sub.add_parser("bench", help="Run a benchmark suite")
    _add_config(p)
    p.add_argument("--suite", default="grid")
    p.add_argument("--strict", action="store_true", help="Exit 1 if any run failed")
    p.add_argument("--db", action="store_true", help="Also store records in DATABASE_URL")

    p = sub.add_parser("render", help="Render a maze with plans to SVG")
    p.add_argument("--maze", required=True)
    p.add_argument("--cell-size", type=float, default=1.0)
    p.add_argument("--plan", action="append", default=[], help="Accepted plan file (repeatable)")
    p.add_argument("--discarded", action="append", default=[], help="Discarded plan file (repeatable)")
    p.add_argument("--graph", help="Graph file; edges drawn as plans")
    p.add_argument("--tree", action="append", default=[], help="Search tree dump file (repeatable)")
    p.add_argument("--waypoints", help="Waypoint file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="Start the read-only results service")
    p.add_argument("--host", default="0.0.0.0", help="Host to bind to")
    p.add_argument("--port", type=int, default=8000, help="Port to bind to")
    p.add_argument("--reload", action="store_true", help="Enable auto-reload")
    return parser


# ============== Commands ==============

def cmd_gen_maze(args, _overrides) -> int:
    maze = generate_maze(args.width, args.height, args.seed, args.loops)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(maze_to_text(maze), encoding="utf-8")
    logger.info(f"Wrote {out} ({maze.free_count} free cells)")
    return EXIT_OK


def cmd_gen_data(args, overrides) -> int:
    from plan_core import dataset_to_text

    cfg = load_run_config(args.config, overrides)
    maze = load_maze(cfg.maze, cfg.cell_size)
    plans = generate_dataset(maze, cfg.dataset.n, cfg.dataset.h_train, cfg.kinematics, cfg.dataset.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dataset_to_text(plans), encoding="utf-8")
    logger.info(f"Wrote {len(plans)} trajectories to {out}")
    return EXIT_OK


def cmd_waypoints(args, overrides) -> int:
    from plan_core import dataset_from_text
    from waypoints import waypoints_from_dataset, write_waypoints

    cfg = load_run_config(args.config, overrides)
    maze = load_maze(cfg.maze, cfg.cell_size)
    if args.dataset:
        plans = dataset_from_text(Path(args.dataset).read_text(encoding="utf-8"))
    else:
        plans = generate_dataset(maze, cfg.dataset.n, cfg.dataset.h_train, cfg.kinematics, cfg.dataset.seed)
    result = waypoints_from_dataset(plans, cfg.waypoints.k, cfg.waypoints.max_iters, cfg.waypoints.seed, maze)
    write_waypoints(result.centers, args.out)
    logger.info(f"Wrote {len(result)} waypoints to {args.out} (inertia {result.inertia:.3f})")
    return EXIT_OK


def cmd_build_graph(args, overrides) -> int:
    from bench import prepare_graph, prepare_waypoints

    cfg = load_run_config(args.config, overrides)
    cfg = cfg.model_copy(update={"graph_path": args.out})
    maze = load_maze(cfg.maze, cfg.cell_size)
    if Path(args.out).exists():
        Path(args.out).unlink()
    graph, report = prepare_graph(cfg, maze, prepare_waypoints(cfg, maze), args.workers or env_workers())
    logger.info(
        f"Graph: {len(graph.vertices)} vertices, {graph.edge_count} edges, "
        f"{report.expansions} expansions, {report.wall_time:.2f}s"
    )
    return EXIT_OK


def _write_outputs(out_dir: Path, records, summary) -> None:
    from bench import format_summary_table

    (out_dir / "summary.json").write_text(summary.model_dump_json(indent=2), encoding="utf-8")
    (out_dir / "summary.md").write_text(format_summary_table(summary), encoding="utf-8")
    print(format_summary_table(summary))


def cmd_run(args, overrides) -> int:
    from bench import JsonlSink, run_benchmark

    cfg = load_run_config(args.config, overrides)
    out_dir = Path(cfg.out_dir) / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    records_path.unlink(missing_ok=True)
    records, summary = run_benchmark(cfg, args.workers or cfg.workers or env_workers(), JsonlSink(records_path))
    _write_outputs(out_dir, records, summary)
    return EXIT_OK if all(r.success for r in records) else EXIT_RUN_FAILED


def cmd_bench(args, overrides) -> int:
    from bench import SUITES, JsonlSink, run_ablation

    if args.suite not in SUITES:
        raise ConfigError(f"Unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    cfg = load_run_config(args.config, overrides)
    workers = args.workers or cfg.workers or env_workers()
    out_dir = Path(cfg.out_dir) / cfg.name / args.suite
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"
    records_path.unlink(missing_ok=True)
    sink = JsonlSink(records_path)

    if args.db:
        import models
        from worker import BenchWorker

        if not models.init_db():
            raise ConfigError("Database not available")
        db = models.SessionLocal()
        try:
            bench = models.BenchRun(name=cfg.name, suite=args.suite, composer=cfg.composer, maze=cfg.maze,
                                    config=cfg.model_dump(mode="json"), status="queued")
            db.add(bench)
            db.commit()
            bench_id = bench.id
        finally:
            db.close()
        records, summary = BenchWorker(workers).process(bench_id, extra_sink=sink)
    else:
        records, summary = run_ablation(args.suite, cfg, workers, sink)

    _write_outputs(out_dir, records, summary)
    failed = sum(not r.success for r in records)
    if failed:
        logger.info(f"{failed}/{len(records)} runs failed")
    return EXIT_RUN_FAILED if args.strict and failed else EXIT_OK


def cmd_render(args, _overrides) -> int:
    from plan_core import plan_from_text
    from plan_graph import load_graph
    from render import TaggedPlan, render_svg
    from waypoints import read_waypoints

    maze = load_maze(args.maze, args.cell_size)
    plans = [TaggedPlan(plan_from_text(Path(p).read_text(encoding="utf-8")), "discarded") for p in args.discarded]
    waypoints = read_waypoints(args.waypoints) if args.waypoints else []
    if args.graph:
        graph = load_graph(args.graph, maze.hash)
        plans += [TaggedPlan(e.plan, "edge") for e in graph.edges.values()]
        waypoints = waypoints or graph.vertices
    plans += [TaggedPlan(plan_from_text(Path(p).read_text(encoding="utf-8"))) for p in args.plan]
    start = goal = None
    accepted = [t.plan for t in plans if t.tag == "accepted"]
    if accepted:
        start, goal = accepted[0].first, accepted[0].last
    trees = [Path(t).read_text(encoding="utf-8") for t in args.tree]
    render_svg(maze, plans, args.out, start=start, goal=goal, waypoints=waypoints, trees=trees)
    return EXIT_OK


def cmd_serve(args, _overrides) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port, reload=args.reload, log_level="info")
    return EXIT_OK


COMMANDS = {
    "gen-maze": cmd_gen_maze,
    "gen-data": cmd_gen_data,
    "waypoints": cmd_waypoints,
    "build-graph": cmd_build_graph,
    "run": cmd_run,
    "bench": cmd_bench,
    "render": cmd_render,
    "serve": cmd_serve,
}

# Commands that take no dotted overrides
_NO_OVERRIDES = {"gen-maze", "render", "serve"}


def main(argv: Optional[List[str]] = None) -> int:
    from plan_graph import GraphCodecError, MazeHashMismatchError

    parser = build_parser()
    args, overrides = parser.parse_known_args(argv)
    setup_logging(args.log_level)
    if overrides and args.command in _NO_OVERRIDES:
        parser.error(f"unrecognized arguments: {' '.join(overrides)}")

    try:
        return COMMANDS[args.command](args, overrides)
    except (ConfigError, ValidationError, MazeParseError, TaskSamplingError,
            GraphCodecError, MazeHashMismatchError, FileNotFoundError) as e:
        logger.error(f"{e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
