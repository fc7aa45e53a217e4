"""
Preplan Composer: an offline, task-agnostic plan graph over waypoints built
from pairwise Online Composer runs, then per-query inference that only plans
short local connections and stitches a shortest path through the graph.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

from maze_env import Maze, State, Task, distance, validate_task
from plan_cache import PlanCache
from plan_core import Plan, is_executable
from plan_graph import ConnectivityGraph, MazeHashMismatchError
from proposer import GoalAttraction, WaypointAttraction, as_stream
from schemas import KinematicParams, OcConfig, PcBuildConfig, PcInferConfig, ProposerConfig
from composer_online import ComposerResult, run_online_composer

logger = logging.getLogger(__name__)

# Seed-stream tags for inference-time local connections
START_EDGE_TAG = 1
GOAL_EDGE_TAG = 2
DIRECT_TAG = 3


@dataclass
class BuildReport:
    pairs_attempted: int = 0
    pairs_skipped: int = 0
    retries: int = 0
    edges: int = 0
    expansions: int = 0
    wall_time: float = 0.0


@dataclass
class _PairOutcome:
    source: int
    target: int
    plan: Optional[Plan]
    expansions: int
    attempts: int


def pair_oc_config(oc: OcConfig, budget: int, max_depth: int, h_plan: Optional[int] = None,
                   L: Optional[int] = None) -> OcConfig:
    """OC settings for a short pairwise search of max_depth segments."""
    h = h_plan or oc.h_plan
    horizon = L or max_depth * h + 1
    h = min(h, horizon)
    return oc.model_copy(update={"budget": budget, "max_depth": max_depth, "h_plan": h, "L": horizon})


def _build_pair(i: int, j: int, waypoints: Sequence[State], maze: Maze, oc: OcConfig, eps_stitch: float,
                retries: int, seed: Tuple[int, ...], params: KinematicParams,
                proposer_config: Optional[ProposerConfig]) -> _PairOutcome:
    task = Task(waypoints[i], waypoints[j], eps_stitch, oc.L)
    expansions = 0
    for attempt in range(retries + 1):
        result = run_online_composer(
            task, maze, oc, seed + (i + 1, j + 1, attempt), params, proposer_config,
            target=WaypointAttraction(waypoints[j]),
        )
        expansions += result.expansions
        if result.success:
            return _PairOutcome(i, j, result.plan, expansions, attempt + 1)
        if attempt < retries:
            logger.warning(f"Pair {i}->{j} failed, retrying with a fresh seed")
    return _PairOutcome(i, j, None, expansions, retries + 1)


def build_plan_graph(maze: Maze, waypoints: Sequence[Sequence[float]], cfg: PcBuildConfig, oc: OcConfig,
                     seed: Union[int, Sequence[int]], params: Optional[KinematicParams] = None,
                     proposer_config: Optional[ProposerConfig] = None,
                     workers: int = 1) -> Tuple[ConnectivityGraph, BuildReport]:
    """All ordered waypoint pairs searched with OC under waypoint attraction; successes become edges."""
    params = params or KinematicParams()
    points = [State(*w) for w in waypoints]
    if len(points) < 2:
        raise ValueError(f"Need at least 2 waypoints to build a plan graph, got {len(points)}")
    eps_stitch = cfg.eps_stitch or 0.5 * maze.cell_size
    pair_oc = pair_oc_config(oc, cfg.pair_budget, cfg.pair_max_depth)
    if cfg.n_candidates:
        proposer_config = (proposer_config or ProposerConfig()).model_copy(update={"n_candidates": cfg.n_candidates})
    reach = cfg.pair_max_depth * pair_oc.h_plan * params.v_max + eps_stitch
    base = as_stream(seed)

    report = BuildReport()
    pairs = []
    for i in range(len(points)):
        for j in range(len(points)):
            if i == j:
                continue
            if distance(points[i], points[j]) > reach:
                report.pairs_skipped += 1
                continue
            pairs.append((i, j))
    report.pairs_attempted = len(pairs)
    logger.info(f"Building plan graph: {len(points)} waypoints, {len(pairs)} pairs ({report.pairs_skipped} out of reach)")

    started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        outcomes = list(executor.map(
            lambda pair: _build_pair(pair[0], pair[1], points, maze, pair_oc, eps_stitch, cfg.retries,
                                     base, params, proposer_config),
            pairs,
        ))
    report.wall_time = time.perf_counter() - started

    # Single-writer merge in pair order
    graph = ConnectivityGraph(points, eps_stitch, maze.hash)
    for outcome in outcomes:
        report.expansions += outcome.expansions
        report.retries += outcome.attempts - 1
        if outcome.plan is None:
            logger.warning(f"No edge {outcome.source}->{outcome.target} after {outcome.attempts} attempts")
            continue
        graph.add_edge(outcome.source, outcome.target, outcome.plan)
    report.edges = graph.edge_count
    logger.info(
        f"Plan graph built: {report.edges}/{len(pairs)} edges, {report.expansions} expansions, "
        f"{report.wall_time:.2f}s"
    )
    return graph, report


def run_preplan_inference(task: Task, maze: Maze, graph: ConnectivityGraph, cfg: PcInferConfig, oc: OcConfig,
                          seed: Union[int, Sequence[int]], params: Optional[KinematicParams] = None,
                          proposer_config: Optional[ProposerConfig] = None,
                          cache: Optional[PlanCache] = None) -> ComposerResult:
    """Local start/goal connections on a working copy of graph, then shortest path and synthesis."""
    validate_task(task, maze)
    if graph.maze_hash and graph.maze_hash != maze.hash:
        raise MazeHashMismatchError(f"Graph was built for maze {graph.maze_hash[:12]}, not {maze.hash[:12]}")
    params = params or KinematicParams()
    if distance(task.start, task.goal) <= task.eps_goal:
        return ComposerResult(True, Plan.single(task.start), 0, graph_edges=graph.edge_count)

    local_horizon = cfg.local_horizon or 2 * oc.h_plan
    local_oc = pair_oc_config(oc, cfg.local_budget, max(1, math.ceil((local_horizon - 1) / oc.h_plan)),
                              L=local_horizon)
    query_budget = cfg.query_budget or max(cfg.local_budget, oc.budget // 5)
    reach = local_horizon * params.v_max
    base = as_stream(seed)

    work = graph.copy()
    start_vertex = work.add_vertex(task.start)
    goal_vertex = work.add_vertex(task.goal)
    expansions = 0
    hits: List[bool] = []

    def connect(source: State, target: State, eps: float, target_kind, stream, context: str) -> Optional[Plan]:
        nonlocal expansions
        budget = min(cfg.local_budget, query_budget - expansions)
        if budget < 1:
            return None
        local_task = Task(source, target, eps, local_horizon)
        result = run_online_composer(local_task, maze, local_oc.model_copy(update={"budget": budget}), stream,
                                     params, proposer_config, target=target_kind, cache=cache,
                                     cache_context=context)
        expansions += result.expansions
        if result.cache_hit is not None:
            hits.append(result.cache_hit)
        return result.plan if result.success else None

    # Nearest waypoints first; each side stops after max_links connections
    start_order = sorted((distance(task.start, w), k) for k, w in enumerate(graph.vertices))
    goal_order = sorted((distance(w, task.goal), k) for k, w in enumerate(graph.vertices))
    start_order = [k for d, k in start_order if d <= reach]
    goal_order = [k for d, k in goal_order if d <= reach]
    start_links = goal_links = 0
    for rank in range(max(len(start_order), len(goal_order))):
        if expansions >= query_budget:
            break
        if start_links < cfg.max_links and rank < len(start_order):
            k = start_order[rank]
            w = graph.vertices[k]
            plan = connect(task.start, w, graph.eps_stitch, WaypointAttraction(w),
                           base + (START_EDGE_TAG, k), f"to-wp{k}")
            if plan is not None:
                work.add_edge(start_vertex, k, plan)
                start_links += 1
        if goal_links < cfg.max_links and rank < len(goal_order):
            k = goal_order[rank]
            plan = connect(graph.vertices[k], task.goal, task.eps_goal, GoalAttraction(task.goal),
                           base + (GOAL_EDGE_TAG, k), f"from-wp{k}")
            if plan is not None:
                work.add_edge(k, goal_vertex, plan, task.eps_goal)
                goal_links += 1
        if start_links >= cfg.max_links and goal_links >= cfg.max_links:
            break

    path = work.shortest_path(start_vertex, goal_vertex)
    if path is None and distance(task.start, task.goal) <= reach:
        plan = connect(task.start, task.goal, task.eps_goal, GoalAttraction(task.goal),
                       base + (DIRECT_TAG,), "direct")
        if plan is not None:
            work.add_edge(start_vertex, goal_vertex, plan, task.eps_goal)
            path = work.shortest_path(start_vertex, goal_vertex)

    solution = None
    if path is not None:
        plan = work.synthesize_plan(path)
        if len(plan) <= task.L and is_executable(plan, maze, params.v_max):
            solution = plan
        else:
            logger.warning(f"PC: synthesized plan rejected (length {len(plan)}, L={task.L})")

    logger.debug(f"PC finished: success={solution is not None}, local expansions={expansions}/{query_budget}")
    return ComposerResult(
        solution is not None, solution, expansions, graph_edges=work.edge_count,
        cache_hit=(bool(hits) and all(hits)) if cache is not None else None,
        details={"graph": work, "path": path},
    )
