"""
Online Composer: budgeted plan-level tree search from the task start until a
node's stitched plan reaches the goal ball.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

from maze_env import Maze, Task, distance, validate_task
from plan_cache import CacheKey, PlanCache
from plan_core import GuidanceSet, InvalidPlanError, Plan, first_goal_hit, plan_suffix, truncate_plan
from proposer import GoalAttraction, GuidanceTarget, GuidedProposer
from schemas import KinematicParams, OcConfig, ProposerConfig
from search_tree import PlanNode, SearchTree, TreeSaturatedError

logger = logging.getLogger(__name__)


@dataclass
class ComposerResult:
    """Outcome of one composer call; failure is a value, not an exception."""
    success: bool
    plan: Optional[Plan] = None
    expansions: int = 0
    graph_edges: Optional[int] = None
    cache_hit: Optional[bool] = None
    rounds: int = 0
    trees: List[SearchTree] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def plan_steps(self) -> Optional[int]:
        return self.plan.steps if self.success and self.plan is not None else None


def make_proposer(maze: Maze, params: Optional[KinematicParams], proposer_config: Optional[ProposerConfig],
                  h_plan: int) -> GuidedProposer:
    """Proposer whose horizon follows the composer config."""
    config = (proposer_config or ProposerConfig()).model_copy(update={"h_plan": h_plan})
    return GuidedProposer(maze, params or KinematicParams(), config)


def cached_solution(cache: PlanCache, key: CacheKey, task: Task) -> Optional[Plan]:
    """Cache hit re-checked against this task's goal ball and horizon."""
    plan = cache.lookup(key)
    if plan is None:
        return None
    hit = first_goal_hit(plan, task.goal, task.eps_goal)
    if hit is None or hit + 1 > task.L:
        return None
    return truncate_plan(plan, hit)


def cache_subsolutions(cache: PlanCache, tree: SearchTree, terminal: PlanNode, solution: Plan) -> int:
    """Store the solution's remainder from every ancestor's terminal state, root included."""
    stored = 0
    node_id = terminal.parent
    while node_id is not None:
        node = tree.nodes[node_id]
        key = CacheKey(tree.cache_context, node.plan.last, tree.task.goal)
        try:
            stored += cache.insert(key, plan_suffix(solution, len(node.plan) - 1))
        except InvalidPlanError as e:
            logger.warning(f"Sub-solution from node {node_id} not cached: {e}")
        node_id = node.parent
    return stored


def run_online_composer(task: Task, maze: Maze, cfg: OcConfig, seed: Union[int, Sequence[int]],
                        params: Optional[KinematicParams] = None,
                        proposer_config: Optional[ProposerConfig] = None,
                        target: Optional[GuidanceTarget] = None,
                        cache: Optional[PlanCache] = None, cache_context: str = "oc",
                        tree_id: int = 0) -> ComposerResult:
    """Select/expand/simulate/backpropagate until a node hits the goal or cfg.budget expansions elapse.

    The search horizon is task.L; cfg.L only seeds tasks built by the bench.
    """
    validate_task(task, maze)
    if distance(task.start, task.goal) <= task.eps_goal:
        return ComposerResult(True, Plan.single(task.start), 0, cache_hit=False if cache is not None else None)

    key = CacheKey(cache_context, task.start, task.goal)
    if cache is not None:
        plan = cached_solution(cache, key, task)
        if plan is not None:
            logger.debug(f"OC cache hit for context '{cache_context}'")
            return ComposerResult(True, plan, 0, cache_hit=True)

    proposer = make_proposer(maze, params, proposer_config, cfg.h_plan)
    tree = SearchTree(
        task.start, task, proposer, target or GoalAttraction(task.goal),
        GuidanceSet(tuple(cfg.guidance_levels)), seed,
        c_uct=cfg.c_uct, branching=cfg.branching, max_depth=cfg.max_depth,
        fast_replanning=cfg.fast_replanning, tree_id=tree_id,
        cache=cache, cache_context=cache_context,
    )

    solution = None
    terminal = None
    while tree.expansions < cfg.budget:
        try:
            node_id = tree.step(cfg.promote_completions)
        except TreeSaturatedError:
            logger.debug(f"OC tree saturated after {tree.expansions} expansions")
            break
        node = tree.nodes[node_id]
        if node.terminal:
            solution = truncate_plan(node.plan, node.goal_hit)
            terminal = node
            break

    result = ComposerResult(
        solution is not None, solution, tree.expansions,
        cache_hit=tree.cache_hits > 0 if cache is not None else None, trees=[tree],
    )
    if terminal is not None and cache is not None:
        cache_subsolutions(cache, tree, terminal, solution)
    logger.debug(
        f"OC finished: success={result.success}, expansions={result.expansions}, "
        f"steps={result.plan_steps}"
    )
    return result
