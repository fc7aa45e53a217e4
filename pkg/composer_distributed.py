"""
Distributed Composer: trees grow in rounds from the start and every waypoint,
strategic connections feed a shared graph, and a start-to-goal shortest path
is synthesized after each round.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from maze_env import Maze, State, Task, distance, validate_task
from plan_core import GuidanceSet, Plan, is_executable, truncate_plan
from plan_graph import ConnectivityGraph, save_graph
from proposer import GoalAttraction
from schemas import DcConfig, KinematicParams, OcConfig, ProposerConfig
from search_tree import SearchTree, TreeSaturatedError
from composer_online import ComposerResult, make_proposer

logger = logging.getLogger(__name__)


def try_connect(graph: ConnectivityGraph, tree_id: int, plan: Plan, segment_start: int, eps: float,
                origin_count: int, goal_vertex: Optional[int] = None,
                eps_goal: Optional[float] = None) -> List[Tuple[int, int]]:
    """Add edges from origin tree_id for every origin the segment passes strictly within eps of.

    Edge plans are the root-stitched plan truncated at the closest segment state.
    A goal edge is added at the first segment state inside the goal ball.
    """
    segment = plan.states[segment_start:]
    added = []
    for j in range(origin_count):
        if j == tree_id:
            continue
        origin = graph.vertices[j]
        best_k, best_d = 0, distance(segment[0], origin)
        for k in range(1, len(segment)):
            d = distance(segment[k], origin)
            if d < best_d:
                best_k, best_d = k, d
        if best_d < eps and graph.add_edge(tree_id, j, truncate_plan(plan, segment_start + best_k), eps):
            added.append((tree_id, j))
            logger.debug(f"Connected origin {tree_id} -> {j} (closest approach {best_d:.4f})")

    if goal_vertex is not None:
        goal = graph.vertices[goal_vertex]
        for k, s in enumerate(segment):
            if distance(s, goal) <= eps_goal:
                if graph.add_edge(tree_id, goal_vertex, truncate_plan(plan, segment_start + k), eps_goal):
                    added.append((tree_id, goal_vertex))
                    logger.debug(f"Connected origin {tree_id} -> goal")
                break
    return added


def _grow(tree: SearchTree, promote: bool) -> Optional[int]:
    try:
        return tree.step(promote)
    except TreeSaturatedError:
        return None


def run_distributed_composer(task: Task, maze: Maze, cfg: DcConfig, oc: OcConfig,
                             origins: Sequence[Sequence[float]], seed: Union[int, Sequence[int]],
                             params: Optional[KinematicParams] = None,
                             proposer_config: Optional[ProposerConfig] = None,
                             workers: int = 1) -> ComposerResult:
    """Round-based growth from [start] + origins; returns the first synthesized plan within L."""
    validate_task(task, maze)
    params = params or KinematicParams()
    if distance(task.start, task.goal) <= task.eps_goal:
        return ComposerResult(True, Plan.single(task.start), 0, graph_edges=0)

    eps = cfg.eps_connect or 0.5 * maze.cell_size
    roots = [task.start] + [State(*o) for o in origins]
    graph = ConnectivityGraph(roots, eps, maze.hash)
    goal_vertex = graph.add_vertex(task.goal)

    proposer = make_proposer(maze, params, proposer_config, oc.h_plan)
    guidance = GuidanceSet(tuple(oc.guidance_levels))
    trees = [
        SearchTree(root, task, proposer, GoalAttraction(task.goal), guidance, seed,
                   c_uct=oc.c_uct, branching=oc.branching, max_depth=oc.max_depth,
                   fast_replanning=oc.fast_replanning, tree_id=i)
        for i, root in enumerate(roots)
    ]
    for tree in trees:
        try_connect(graph, tree.tree_id, tree.nodes[tree.root].plan, 0, eps, len(roots), goal_vertex, task.eps_goal)

    snapshots: List[Dict] = []
    snapshot_dir = Path(cfg.snapshot_dir) if cfg.snapshot_dir else None
    rejected = set()
    rounds = 0
    solution = None
    for rounds in range(1, cfg.max_rounds + 1):
        active = [t for t in trees if t.is_open(t.root)]
        if not active:
            logger.debug("DC: every tree saturated")
            rounds -= 1
            break

        grown: Dict[int, Optional[int]] = {}
        with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
            future_to_tree = {executor.submit(_grow, t, oc.promote_completions): t.tree_id for t in active}
            for future in as_completed(future_to_tree):
                tree_id = future_to_tree[future]
                try:
                    grown[tree_id] = future.result()
                except Exception as e:
                    logger.error(f"DC tree {tree_id} failed in round {rounds}: {e}")
                    grown[tree_id] = None

        # Merge in tree order so results do not depend on completion order
        for tree_id in sorted(grown):
            node_id = grown[tree_id]
            if node_id is None:
                continue
            tree = trees[tree_id]
            node = tree.nodes[node_id]
            start = 0 if cfg.whole_plan_scan else len(tree.nodes[node.parent].plan) - 1
            try_connect(graph, tree_id, node.plan, start, eps, len(roots), goal_vertex, task.eps_goal)

        snapshot = {"round": rounds, "vertices": len(graph.vertices), "edges": graph.edge_count}
        if snapshot_dir is not None:
            snapshot["path"] = str(save_graph(graph, snapshot_dir / f"round_{rounds:03d}.json"))
        snapshots.append(snapshot)

        path = graph.shortest_path(0, goal_vertex)
        if path is None or path.edges in rejected:
            continue
        plan = graph.synthesize_plan(path)
        if len(plan) <= task.L and is_executable(plan, maze, params.v_max):
            solution = plan
            break
        rejected.add(path.edges)
        logger.warning(f"DC: synthesized plan rejected (length {len(plan)}, L={task.L})")

    expansions = sum(t.expansions for t in trees)
    logger.debug(
        f"DC finished: success={solution is not None}, rounds={rounds}, expansions={expansions}, "
        f"edges={graph.edge_count}"
    )
    return ComposerResult(
        solution is not None, solution, expansions, graph_edges=graph.edge_count,
        rounds=rounds, trees=trees, details={"snapshots": snapshots, "graph": graph},
    )
