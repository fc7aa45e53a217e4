"""
Plan-level Monte Carlo tree search.

Nodes hold root-stitched plans. One iteration is select (UCT) -> expand
(best-of-N stitching under the node's guidance set) -> simulate (fast
completion scored at the task horizon) -> backpropagate.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

from maze_env import State, Task
from plan_cache import CacheKey, PlanCache
from plan_core import GuidanceSet, Plan, first_goal_hit, reward, stitch, truncate_plan
from proposer import GuidanceTarget, GuidedProposer, as_stream

logger = logging.getLogger(__name__)

# Stream tags keep expansion and simulation draws apart
EXPAND_TAG = 0
SIMULATE_TAG = 1


class TreeSaturatedError(RuntimeError):
    """No node can be expanded any more (or the chosen node is full)."""


class DepthLimitError(RuntimeError):
    """Expansion requested at depth M_max."""


@dataclass
class PlanNode:
    id: int
    parent: Optional[int]
    plan: Plan
    depth: int
    guidance: GuidanceSet
    visits: int = 0
    value_sum: float = 0.0
    simulations: int = 0
    children: List[int] = field(default_factory=list)
    terminal: bool = False
    goal_hit: Optional[int] = None

    @property
    def mean_value(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0


class SearchTree:
    """Single-writer plan tree rooted at one state."""

    def __init__(self, root_state: Sequence[float], task: Task, proposer: GuidedProposer,
                 target: GuidanceTarget, guidance: GuidanceSet, seed: Union[int, Sequence[int]],
                 c_uct: float = math.sqrt(2.0), branching: int = 2, max_depth: int = 10,
                 fast_replanning: bool = True, tree_id: int = 0,
                 cache: Optional[PlanCache] = None, cache_context: str = "oc"):
        if branching < 1:
            raise ValueError(f"branching must be >= 1, got {branching}")
        if max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {max_depth}")
        self.task = task
        self.proposer = proposer
        self.target = target
        self.c_uct = c_uct
        self.branching = branching
        self.max_depth = max_depth
        self.fast_replanning = fast_replanning
        self.tree_id = tree_id
        self.cache = cache
        self.cache_context = cache_context
        self.cache_hits = 0
        self.stream = as_stream(seed) + (tree_id,)
        self.expansions = 0

        root_plan = Plan.single(root_state)
        hit = first_goal_hit(root_plan, task.goal, task.eps_goal)
        self.nodes: Dict[int, PlanNode] = {
            0: PlanNode(0, None, root_plan, 0, guidance, terminal=hit is not None, goal_hit=hit)
        }
        self.root = 0

    def __len__(self) -> int:
        return len(self.nodes)

    # ============== Structure ==============

    def is_open(self, node_id: int) -> bool:
        """A node is open while it or a descendant can still be expanded."""
        node = self.nodes[node_id]
        if node.terminal or node.depth >= self.max_depth or len(node.plan) >= self.task.L:
            return False
        if len(node.children) < self.branching:
            return True
        return any(self.is_open(c) for c in node.children)

    def uct_score(self, child: PlanNode, parent_visits: int) -> float:
        if child.visits == 0:
            return math.inf
        exploration = math.sqrt(math.log(parent_visits) / child.visits) if parent_visits > 0 else 0.0
        return child.mean_value + self.c_uct * exploration

    def select(self) -> int:
        """Descend by UCT through open children to the first node with room for a child."""
        if not self.is_open(self.root):
            raise TreeSaturatedError(f"Tree {self.tree_id} has no expandable node")
        node = self.nodes[self.root]
        while len(node.children) >= self.branching:
            best_id, best_score = None, -math.inf
            for child_id in node.children:
                if not self.is_open(child_id):
                    continue
                score = self.uct_score(self.nodes[child_id], node.visits)
                if score > best_score:
                    best_id, best_score = child_id, score
            node = self.nodes[best_id]
        return node.id

    def _add_child(self, parent: PlanNode, plan: Plan) -> PlanNode:
        child_id = len(self.nodes)
        hit = first_goal_hit(plan, self.task.goal, self.task.eps_goal)
        child = PlanNode(
            id=child_id,
            parent=parent.id,
            plan=plan,
            depth=parent.depth + 1,
            guidance=parent.guidance,
            terminal=hit is not None and hit + 1 <= self.task.L,
            goal_hit=hit,
        )
        self.nodes[child_id] = child
        parent.children.append(child_id)
        return child

    # ============== Search steps ==============

    def cached_suffix(self, node: PlanNode) -> Optional[Plan]:
        """Cached goal-reaching plan from the node's terminal state that still fits in L."""
        if self.cache is None:
            return None
        plan = self.cache.lookup(CacheKey(self.cache_context, node.plan.last, self.task.goal))
        if plan is None:
            return None
        hit = first_goal_hit(plan, self.task.goal, self.task.eps_goal)
        if hit is None or len(node.plan) + hit > self.task.L:
            return None
        return truncate_plan(plan, hit)

    def expand(self, node_id: int) -> int:
        """Stitch the best-of-N candidate onto the node's plan and insert it as a child."""
        node = self.nodes[node_id]
        if node.depth >= self.max_depth:
            raise DepthLimitError(f"Node {node_id} is at depth limit {self.max_depth}")
        if node.terminal or len(node.children) >= self.branching:
            raise TreeSaturatedError(f"Node {node_id} cannot take another child")
        h = min(self.proposer.config.h_plan, self.task.L - len(node.plan))
        if h < 1:
            raise TreeSaturatedError(f"Node {node_id} already spans the horizon L={self.task.L}")

        cached = self.cached_suffix(node)
        if cached is not None:
            child = self._add_child(node, stitch(node.plan, cached))
            self.expansions += 1
            self.cache_hits += 1
            logger.debug(f"Tree {self.tree_id}: node {child.id} reused a cached plan of {len(cached)} states")
            return child.id

        child_id = len(self.nodes)
        segment, value = self.proposer.best_of_n(
            node.plan.last, self.target, node.guidance, self.task,
            self.stream + (child_id, EXPAND_TAG), h=h, prefix=node.plan,
            complete=self.fast_replanning, segment_id=child_id,
        )
        child = self._add_child(node, stitch(node.plan, segment))
        self.expansions += 1
        logger.debug(f"Tree {self.tree_id}: node {child.id} (depth {child.depth}) candidate reward {value:.4f}")
        return child.id

    def rollout(self, node_id: int) -> Tuple[Plan, float]:
        """Completion used for scoring and its reward at H = L."""
        node = self.nodes[node_id]
        L = self.task.L
        if node.goal_hit is not None:
            return node.plan, (L - node.goal_hit) / L if node.goal_hit < L else 0.0
        plan = node.plan
        if self.fast_replanning:
            plan = self.proposer.fast_complete(
                node.plan, self.task.goal, self.task.eps_goal, max(L, len(node.plan)),
                self.stream + (node_id, SIMULATE_TAG, node.simulations),
                g=node.guidance.max_level,
            )
        return plan, reward(plan, self.task.goal, self.task.eps_goal, L, self.proposer.params.v_max)

    def simulate(self, node_id: int) -> float:
        return self.rollout(node_id)[1]

    def backpropagate(self, node_id: int, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"Reward must lie in [0, 1], got {value}")
        self.nodes[node_id].simulations += 1
        current: Optional[int] = node_id
        while current is not None:
            node = self.nodes[current]
            node.visits += 1
            node.value_sum += value
            current = node.parent

    def promote(self, node_id: int, completion: Plan) -> Optional[int]:
        """Insert a goal-reaching completion of node_id as a terminal child."""
        node = self.nodes[node_id]
        hit = first_goal_hit(completion, self.task.goal, self.task.eps_goal)
        if hit is None or hit < len(node.plan) or len(node.children) >= self.branching:
            return None
        child = self._add_child(node, truncate_plan(completion, hit))
        logger.debug(f"Tree {self.tree_id}: promoted completion of node {node_id} as node {child.id}")
        return child.id

    def step(self, promote_completions: bool = False) -> int:
        """One select/expand/simulate/backpropagate iteration; returns the newest node id."""
        leaf = self.select()
        child_id = self.expand(leaf)
        completion, value = self.rollout(child_id)
        self.backpropagate(child_id, value)
        if promote_completions and not self.nodes[child_id].terminal:
            promoted = self.promote(child_id, completion)
            if promoted is not None:
                return promoted
        return child_id

    # ============== Queries ==============

    def terminal_nodes(self) -> List[PlanNode]:
        return [n for n in self.nodes.values() if n.terminal]

    def solution(self) -> Optional[Plan]:
        """Shortest goal-reaching prefix among terminal nodes (lowest id on ties)."""
        best = None
        for node in self.terminal_nodes():
            if best is None or node.goal_hit < best.goal_hit:
                best = node
        return truncate_plan(best.plan, best.goal_hit) if best else None

    def dump(self) -> str:
        """One line per node: id parent depth N W terminal plan_length newest_segment.

        The segment is the node's own states as `x,y;x,y;...`, starting at the
        parent's terminal state (the root holds its single state).
        """
        lines = ["# id parent depth visits value_sum terminal length segment"]
        for node in self.nodes.values():
            parent = "-" if node.parent is None else str(node.parent)
            start = 0 if node.parent is None else len(self.nodes[node.parent].plan) - 1
            segment = ";".join(f"{s.x!r},{s.y!r}" for s in node.plan.states[start:])
            lines.append(
                f"{node.id} {parent} {node.depth} {node.visits} {node.value_sum!r} "
                f"{int(node.terminal)} {len(node.plan)} {segment}"
            )
        return "\n".join(lines) + "\n"

    def edges(self) -> List[Tuple[int, int]]:
        return [(n.parent, n.id) for n in self.nodes.values() if n.parent is not None]


class DumpedNode(NamedTuple):
    id: int
    parent: Optional[int]
    depth: int
    visits: int
    value_sum: float
    terminal: bool
    length: int
    segment: Tuple[State, ...]


def parse_dump(text: str) -> List[DumpedNode]:
    """Inverse of SearchTree.dump for rendering and inspection."""
    nodes = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise ValueError(f"Tree dump line {lineno}: expected 8 fields, got {len(fields)}")
        node_id, parent, depth, visits, value_sum, terminal, length, segment = fields
        states = tuple(State(*(float(v) for v in pair.split(","))) for pair in segment.split(";"))
        nodes.append(DumpedNode(
            int(node_id), None if parent == "-" else int(parent), int(depth), int(visits),
            float(value_sum), terminal == "1", int(length), states,
        ))
    return nodes
