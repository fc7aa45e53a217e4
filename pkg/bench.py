"""
Benchmark harness: task x seed grids for each composer, ablation suites,
record streams and summaries.
"""

import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from composer_distributed import run_distributed_composer
from composer_online import ComposerResult, run_online_composer
from composer_preplan import BuildReport, build_plan_graph, run_preplan_inference
from maze_env import Maze, State, Task, generate_dataset, load_maze, sample_task
from plan_cache import PlanCache
from plan_core import plan_to_text
from plan_graph import ConnectivityGraph, load_graph, save_graph
from schemas import BenchSummary, CellSummary, RunConfig, RunRecord
from waypoints import read_waypoints, waypoints_from_dataset

logger = logging.getLogger(__name__)

SUITES = ("grid", "guidance", "fast-replanning", "eps", "cache", "amortization")
FIXED_GUIDANCE_LEVELS = (0.1, 0.5, 1.0, 2.0)
FAST_REPLANNING_BUDGETS = (50, 100, 200)
# Multiples of the default threshold (0.5 * cell_size)
EPS_SWEEP = (0.1, 0.5, 1.0, 2.0, 5.0)

RecordSink = Callable[[RunRecord], None]


@dataclass
class BenchContext:
    """Everything a grid shares: maze, tasks, waypoints, prebuilt graph and cache."""
    maze: Maze
    tasks: List[Task]
    waypoints: List[State] = field(default_factory=list)
    graph: Optional[ConnectivityGraph] = None
    build_report: Optional[BuildReport] = None
    cache: Optional[PlanCache] = None


# ============== Preparation ==============

def build_tasks(cfg: RunConfig, maze: Maze) -> List[Task]:
    settings = cfg.tasks
    if settings.explicit:
        values = settings.explicit
        return [
            Task((values[i], values[i + 1]), (values[i + 2], values[i + 3]), settings.eps_goal, cfg.oc.L)
            for i in range(0, len(values), 4)
        ]
    return [
        sample_task(maze, settings.min_separation, settings.seed + i, settings.eps_goal, cfg.oc.L)
        for i in range(settings.count)
    ]


def prepare_waypoints(cfg: RunConfig, maze: Maze) -> List[State]:
    if cfg.waypoints.path:
        return read_waypoints(cfg.waypoints.path)
    dataset = generate_dataset(maze, cfg.dataset.n, cfg.dataset.h_train, cfg.kinematics, cfg.dataset.seed)
    if not dataset:
        return []
    result = waypoints_from_dataset(dataset, cfg.waypoints.k, cfg.waypoints.max_iters, cfg.waypoints.seed, maze)
    return list(result.centers)


def prepare_graph(cfg: RunConfig, maze: Maze, waypoints: Sequence[State],
                  workers: int = 1) -> Tuple[ConnectivityGraph, Optional[BuildReport]]:
    """Load the persisted graph if one exists, otherwise build (and persist) it."""
    if cfg.graph_path and Path(cfg.graph_path).is_file():
        graph = load_graph(cfg.graph_path, maze.hash)
        logger.info(f"Loaded plan graph {cfg.graph_path} ({graph.edge_count} edges)")
        return graph, None
    pc_build = cfg.pc_build
    if cfg.ablation.eps is not None:
        pc_build = pc_build.model_copy(update={"eps_stitch": cfg.ablation.eps})
    graph, report = build_plan_graph(
        maze, waypoints, pc_build, cfg.effective_oc(), cfg.seeds[0], cfg.kinematics, cfg.proposer, workers,
    )
    if cfg.graph_path:
        save_graph(graph, cfg.graph_path)
    return graph, report


def prepare_context(cfg: RunConfig, workers: int = 1, session_factory: Optional[Callable] = None) -> BenchContext:
    """Maze, tasks and the composer's prerequisites; a session factory restores the stored plan cache."""
    maze = load_maze(cfg.maze, cfg.cell_size)
    ctx = BenchContext(maze, build_tasks(cfg, maze))
    if cfg.composer in ("dc", "pc"):
        ctx.waypoints = prepare_waypoints(cfg, maze)
    if cfg.composer == "pc":
        ctx.graph, ctx.build_report = prepare_graph(cfg, maze, ctx.waypoints, workers)
    if cfg.ablation.cache:
        ctx.cache = PlanCache(maze, cfg.kinematics.v_max, cfg.tasks.eps_goal)
        if session_factory is not None:
            db = session_factory()
            try:
                ctx.cache.load(db)
            finally:
                db.close()
    return ctx


# ============== Single runs ==============

def run_composer(cfg: RunConfig, ctx: BenchContext, task: Task, seed: Tuple[int, ...]) -> ComposerResult:
    oc = cfg.effective_oc()
    if cfg.composer == "oc":
        return run_online_composer(task, ctx.maze, oc, seed, cfg.kinematics, cfg.proposer, cache=ctx.cache)
    if cfg.composer == "dc":
        dc = cfg.dc
        if cfg.ablation.eps is not None:
            dc = dc.model_copy(update={"eps_connect": cfg.ablation.eps})
        return run_distributed_composer(task, ctx.maze, dc, oc, ctx.waypoints, seed, cfg.kinematics, cfg.proposer)
    return run_preplan_inference(task, ctx.maze, ctx.graph, cfg.pc_infer, oc, seed, cfg.kinematics,
                                 cfg.proposer, cache=ctx.cache)


def dump_run(cfg: RunConfig, cell: str, task_id: int, seed: int, result: ComposerResult) -> Path:
    """Tree dumps and the accepted plan of one run, named by cell, task and seed."""
    out = Path(cfg.out_dir) / cfg.name / "trees"
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cell}_task{task_id}_seed{seed}"
    for i, tree in enumerate(result.trees):
        (out / f"{stem}_tree{i}.txt").write_text(tree.dump(), encoding="utf-8")
    if result.success:
        (out / f"{stem}_plan.txt").write_text(plan_to_text(result.plan), encoding="utf-8")
    return out


def run_single(cfg: RunConfig, ctx: BenchContext, task_id: int, seed: int, cell: str = "default") -> RunRecord:
    """One composer call; exceptions become a failed record."""
    task = ctx.tasks[task_id]
    started = time.perf_counter()
    try:
        result = run_composer(cfg, ctx, task, (seed, task_id))
    except Exception as e:
        logger.error(f"Run failed (cell={cell}, task={task_id}, seed={seed}): {e}")
        return RunRecord(cell=cell, task_id=task_id, seed=seed, composer=cfg.composer, success=False,
                         wall_time=time.perf_counter() - started, error=str(e))
    wall_time = time.perf_counter() - started
    logger.info(
        f"[{cell}] task {task_id} seed {seed}: {cfg.composer} success={result.success} "
        f"expansions={result.expansions} steps={result.plan_steps} ({wall_time:.2f}s)"
    )
    if cfg.dump_trees:
        dump_run(cfg, cell, task_id, seed, result)
    return RunRecord(
        cell=cell, task_id=task_id, seed=seed, composer=cfg.composer, success=result.success,
        wall_time=wall_time, plan_steps=result.plan_steps, expansions=result.expansions,
        graph_edges=result.graph_edges, cache_hit=result.cache_hit,
    )


def run_benchmark(cfg: RunConfig, workers: int = 1, sink: Optional[RecordSink] = None, cell: str = "default",
                  ctx: Optional[BenchContext] = None,
                  session_factory: Optional[Callable] = None) -> Tuple[List[RunRecord], BenchSummary]:
    """Run the task x seed grid; records go to sink as they finish and are returned in grid order."""
    ctx = ctx or prepare_context(cfg, workers, session_factory)
    grid = [(task_id, seed) for task_id in range(len(ctx.tasks)) for seed in cfg.seeds]
    if ctx.cache is not None and workers > 1:
        logger.info("Plan cache enabled: running the grid sequentially")
        workers = 1
    logger.info(f"Bench cell '{cell}': {len(ctx.tasks)} tasks x {len(cfg.seeds)} seeds, {workers} workers")

    emit_lock = threading.Lock()
    records: Dict[Tuple[int, int], RunRecord] = {}

    def emit(key, record: RunRecord):
        with emit_lock:
            records[key] = record
            if sink is not None:
                try:
                    sink(record)
                except Exception as e:
                    logger.error(f"Record sink error: {e}")

    if workers <= 1:
        for key in grid:
            emit(key, run_single(cfg, ctx, key[0], key[1], cell))
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            future_to_key = {executor.submit(run_single, cfg, ctx, t, s, cell): (t, s) for t, s in grid}
            for future in as_completed(future_to_key):
                emit(future_to_key[future], future.result())

    if ctx.cache is not None and session_factory is not None:
        db = session_factory()
        try:
            ctx.cache.save(db)
        finally:
            db.close()
    ordered = [records[key] for key in grid]
    return ordered, summarize(ordered)


# ============== Ablation suites ==============

def _cfg(cfg: RunConfig, **updates) -> RunConfig:
    """Revalidated copy with nested updates given as dicts."""
    data = cfg.model_dump()
    for key, value in updates.items():
        if isinstance(value, dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return RunConfig.model_validate(data)


def _run_cells(cells: List[Tuple[str, RunConfig]], workers: int, sink: Optional[RecordSink],
               suite: str, session_factory: Optional[Callable] = None
               ) -> Tuple[List[RunRecord], BenchSummary]:
    records: List[RunRecord] = []
    for name, cell_cfg in cells:
        cell_records, _ = run_benchmark(cell_cfg, workers, sink, name, session_factory=session_factory)
        records.extend(cell_records)
        logger.info(f"Suite '{suite}': cell '{name}' done")
    return records, summarize(records, suite)


def run_ablation(suite: str, cfg: RunConfig, workers: int = 1,
                 sink: Optional[RecordSink] = None,
                 session_factory: Optional[Callable] = None) -> Tuple[List[RunRecord], BenchSummary]:
    if suite not in SUITES:
        raise ValueError(f"Unknown suite {suite!r}; choose from {SUITES}")

    if suite == "grid":
        records, summary = run_benchmark(cfg, workers, sink, session_factory=session_factory)
        return records, summary.model_copy(update={"suite": "grid"})

    if suite == "guidance":
        cells = [("guidance-set", _cfg(cfg, ablation={"fixed_guidance_level": None}))]
        cells += [(f"fixed-{g:g}", _cfg(cfg, ablation={"fixed_guidance_level": g})) for g in FIXED_GUIDANCE_LEVELS]
        return _run_cells(cells, workers, sink, suite, session_factory)

    if suite == "fast-replanning":
        cells = []
        for budget in FAST_REPLANNING_BUDGETS:
            for enabled in (True, False):
                cells.append((
                    f"B{budget}-{'on' if enabled else 'off'}",
                    _cfg(cfg, composer="oc", oc={"budget": budget},
                         ablation={"fast_replanning": enabled, "eps": None}),
                ))
        return _run_cells(cells, workers, sink, suite, session_factory)

    if suite == "eps":
        composer = cfg.composer if cfg.composer in ("dc", "pc") else "dc"
        cells = [
            (f"eps-{factor:g}",
             _cfg(cfg, composer=composer, graph_path=None,
                  ablation={"eps": factor * 0.5 * cfg.cell_size, "cache": False}))
            for factor in EPS_SWEEP
        ]
        return _run_cells(cells, workers, sink, suite, session_factory)

    if suite == "cache":
        return _cache_suite(cfg, workers, sink, session_factory)
    return _amortization_suite(cfg, workers, sink)


def _cache_suite(cfg: RunConfig, workers: int, sink: Optional[RecordSink],
                 session_factory: Optional[Callable] = None) -> Tuple[List[RunRecord], BenchSummary]:
    """Same repeated queries with and without the plan cache."""
    composer = cfg.composer if cfg.composer in ("oc", "pc") else "oc"
    records, summary = _run_cells([
        ("cache-off", _cfg(cfg, composer=composer, ablation={"cache": False, "eps": None})),
        ("cache-on", _cfg(cfg, composer=composer, ablation={"cache": True, "eps": None})),
    ], workers, sink, "cache", session_factory)

    on = [r for r in records if r.cell == "cache-on"]
    off = {(r.task_id, r.seed): r for r in records if r.cell == "cache-off"}
    extras: Dict[str, float] = {}
    if on:
        extras["hit_rate"] = sum(bool(r.cache_hit) for r in on) / len(on)
    repeats = [r for r in on if r.cache_hit]
    if repeats:
        on_time = float(np.mean([r.wall_time for r in repeats]))
        off_time = float(np.mean([off[(r.task_id, r.seed)].wall_time for r in repeats]))
        extras["repeat_time_on"] = on_time
        extras["repeat_time_off"] = off_time
        if on_time > 0:
            extras["repeat_speedup"] = off_time / on_time
    return records, summary.model_copy(update={"extras": extras})


def _amortization_suite(cfg: RunConfig, workers: int,
                        sink: Optional[RecordSink]) -> Tuple[List[RunRecord], BenchSummary]:
    """Graph build overhead against per-query savings of PC over OC alone."""
    pc_cfg = _cfg(cfg, composer="pc", graph_path=None, ablation={"cache": False, "eps": None})
    pc_ctx = prepare_context(pc_cfg, workers)
    pc_records, _ = run_benchmark(pc_cfg, workers, sink, "pc", ctx=pc_ctx)
    oc_records, _ = run_benchmark(_cfg(pc_cfg, composer="oc"), workers, sink, "oc-alone")
    records = pc_records + oc_records

    extras: Dict[str, float] = {}
    report = pc_ctx.build_report
    if report is not None:
        extras["build_time"] = report.wall_time
        extras["build_expansions"] = float(report.expansions)
        extras["graph_edges"] = float(report.edges)
    pc_exp = float(np.mean([r.expansions for r in pc_records]))
    oc_exp = float(np.mean([r.expansions for r in oc_records]))
    extras["pc_query_expansions"] = pc_exp
    extras["oc_query_expansions"] = oc_exp
    extras["pc_query_time"] = float(np.mean([r.wall_time for r in pc_records]))
    extras["oc_query_time"] = float(np.mean([r.wall_time for r in oc_records]))
    if report is not None and oc_exp > pc_exp:
        extras["break_even_queries"] = float(math.ceil(report.expansions / (oc_exp - pc_exp)))
    summary = summarize(records, "amortization")
    return records, summary.model_copy(update={"extras": extras})


# ============== Aggregation ==============

def summarize(records: Sequence[RunRecord], suite: str = "grid") -> BenchSummary:
    """Per-cell mean/std of success, wall time and plan length (successful runs only)."""
    cells: Dict[Tuple[str, str], List[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.cell, r.composer), []).append(r)

    out = []
    for (cell, composer), rows in cells.items():
        success = np.array([float(r.success) for r in rows])
        times = np.array([r.wall_time for r in rows])
        lengths = np.array([r.plan_steps for r in rows if r.success], dtype=float)
        out.append(CellSummary(
            cell=cell,
            composer=composer,
            runs=len(rows),
            success_mean=float(success.mean()),
            success_std=float(success.std()),
            time_mean=float(times.mean()),
            time_std=float(times.std()),
            length_mean=float(lengths.mean()) if len(lengths) else None,
            length_std=float(lengths.std()) if len(lengths) else None,
            expansions_mean=float(np.mean([r.expansions for r in rows])),
        ))
    return BenchSummary(suite=suite, cells=out)


def format_summary_table(summary: BenchSummary) -> str:
    """Markdown table: success rate, run time and plan length as mean ± std."""
    lines = [
        f"### {summary.suite}",
        "",
        "| Cell | Composer | Runs | Success Rate (%) | Run Time (sec.) | Plan Length | Expansions |",
        "|---|---|---|---|---|---|---|",
    ]
    for c in summary.cells:
        length = f"{c.length_mean:.1f} ± {c.length_std:.1f}" if c.length_mean is not None else "-"
        lines.append(
            f"| {c.cell} | {c.composer} | {c.runs} | {100 * c.success_mean:.1f} ± {100 * c.success_std:.1f} | "
            f"{c.time_mean:.3f} ± {c.time_std:.3f} | {length} | {c.expansions_mean:.1f} |"
        )
    if summary.extras:
        lines += ["", "| Metric | Value |", "|---|---|"]
        lines += [f"| {k} | {v:.4g} |" for k, v in summary.extras.items()]
    return "\n".join(lines) + "\n"


# ============== Record stream ==============

class JsonlSink:
    """Append-only JSON-lines writer; each record is flushed as it arrives."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def __call__(self, record: RunRecord) -> None:
        line = record.model_dump_json() + "\n"
        with self._lock, self.path.open("a", encoding="utf-8") as f:
            f.write(line)
            f.flush()


def read_records(path: Union[str, Path]) -> List[RunRecord]:
    """Parse a record stream, ignoring a truncated final line."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            records.append(RunRecord.model_validate(json.loads(line)))
        except (json.JSONDecodeError, ValueError) as e:
            logger.warning(f"Skipping unreadable record line: {e}")
    return records
