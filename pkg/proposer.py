"""
Guided trajectory proposer.

Stand-in for a diffusion planner: each step heads along a blend of the unit
vector toward a guidance target and a unit-disc noise draw, weighted by
w(g) = g / (g + 1). Everything above this module only sees Plans.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from maze_env import Maze, State, Task, distance, segment_collision_free, step_dynamics
from plan_core import GuidanceSet, Plan, SegmentMarker, first_goal_hit, reward, stitch
from schemas import KinematicParams, ProposerConfig

logger = logging.getLogger(__name__)

SeedStream = Tuple[int, ...]

# Marks segments that only exist inside a fast completion
COMPLETION_SEGMENT = -1

_SEED_MASK = (1 << 63) - 1


def drift_weight(g: float) -> float:
    """w(0) = 0, strictly increasing, bounded below 1."""
    if g < 0:
        raise ValueError(f"Guidance level must be >= 0, got {g}")
    return g / (g + 1.0)


def as_stream(seed: Union[int, Sequence[int]]) -> SeedStream:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def seed_rng(stream: Union[int, Sequence[int]]) -> np.random.Generator:
    """Generator for a derived seed stream; the same stream always gives the same draws."""
    stream = tuple(s & _SEED_MASK for s in as_stream(stream))
    return np.random.default_rng(np.random.SeedSequence(entropy=stream[0], spawn_key=stream[1:]))


@dataclass(frozen=True)
class GoalAttraction:
    goal: State

    @property
    def point(self) -> State:
        return self.goal


@dataclass(frozen=True)
class WaypointAttraction:
    waypoint: State

    @property
    def point(self) -> State:
        return self.waypoint


GuidanceTarget = Union[GoalAttraction, WaypointAttraction]


def _unit_disc(rng: np.random.Generator) -> Tuple[float, float]:
    angle = rng.uniform(0.0, 2.0 * math.pi)
    radius = math.sqrt(rng.uniform(0.0, 1.0))
    return radius * math.cos(angle), radius * math.sin(angle)


class GuidedProposer:
    """Drift-weighted shooting proposer bound to one maze."""

    def __init__(self, maze: Maze, params: Optional[KinematicParams] = None,
                 config: Optional[ProposerConfig] = None):
        self.maze = maze
        self.params = params or KinematicParams()
        self.config = config or ProposerConfig()

    def _direction(self, current: State, point: State, w: float, rng: np.random.Generator) -> Tuple[float, float]:
        nx, ny = _unit_disc(rng)
        d = distance(current, point)
        ux, uy = ((point[0] - current.x) / d, (point[1] - current.y) / d) if d > 0 else (0.0, 0.0)
        dx = w * ux + (1.0 - w) * nx
        dy = w * uy + (1.0 - w) * ny
        norm = math.hypot(dx, dy)
        if norm == 0.0:
            return 0.0, 0.0
        return dx / norm, dy / norm

    def _rollout(self, start: State, point: State, w: float, h: int, C: int,
                 rng: np.random.Generator) -> Tuple[State, ...]:
        """h dynamics steps; one heading draw per C steps, held fixed in between."""
        v_max = self.params.v_max
        states = [State(*start)]
        current = states[0]
        remaining = h
        while remaining > 0:
            substeps = min(C, remaining)
            ux, uy = self._direction(current, point, w, rng)
            ax, ay = ux * v_max, uy * v_max
            far = State(current.x + ax * substeps, current.y + ay * substeps)
            if (ax or ay) and segment_collision_free(current, far, self.maze):
                x, y = current
                for _ in range(substeps):
                    x, y = x + ax, y + ay
                    states.append(State(x, y))
            else:
                for _ in range(substeps):
                    states.append(step_dynamics(states[-1], (ax, ay), self.params, self.maze))
            current = states[-1]
            remaining -= substeps
        return tuple(states)

    def propose(self, start: Sequence[float], target: GuidanceTarget, g: float, h: int,
                stream: Union[int, Sequence[int]], segment_id: int = 0) -> Plan:
        """Plan of h + 1 states starting exactly at start."""
        if h < 0:
            raise ValueError(f"h must be >= 0, got {h}")
        states = self._rollout(State(*start), target.point, drift_weight(g), h, 1, seed_rng(stream))
        return Plan(states, (SegmentMarker(segment_id, float(g), 0),))

    def fast_complete(self, prefix: Plan, goal: Sequence[float], eps_goal: float, L: int,
                      stream: Union[int, Sequence[int]], g: Optional[float] = None,
                      h: Optional[int] = None, C: Optional[int] = None) -> Plan:
        """Jumpy extension of prefix toward goal until a goal hit, length L, or stalled progress."""
        if L < len(prefix):
            raise ValueError(f"L ({L}) must be >= prefix length ({len(prefix)})")
        h = h or self.config.h_plan
        C = C or self.config.jump_factor
        g = max(GuidanceSet().levels) if g is None else g
        w = drift_weight(g)
        goal = State(*goal)
        base = as_stream(stream)

        plan = prefix
        if first_goal_hit(plan, goal, eps_goal) is not None:
            return plan
        best = min(distance(s, goal) for s in plan.states)
        stale = 0
        rounds = 0
        while len(plan) < L:
            steps = min(h, L - len(plan))
            states = self._rollout(plan.last, goal, w, steps, C, seed_rng(base + (rounds,)))
            plan = stitch(plan, Plan(states, (SegmentMarker(COMPLETION_SEGMENT, float(g), 0),)))
            rounds += 1
            if first_goal_hit(Plan(states), goal, eps_goal) is not None:
                break
            closest = min(distance(s, goal) for s in states)
            if closest < best:
                best = closest
                stale = 0
            else:
                stale += 1
                if stale >= self.config.no_progress_rounds:
                    break
        return plan

    def best_of_n(self, start: Sequence[float], target: GuidanceTarget, gs: GuidanceSet, task: Task,
                  stream: Union[int, Sequence[int]], h: Optional[int] = None, n: Optional[int] = None,
                  prefix: Optional[Plan] = None, complete: bool = True,
                  segment_id: int = 0) -> Tuple[Plan, float]:
        """Best of N guided candidates, scored as prefix + candidate (+ fast completion) at H = task.L.

        Candidate i draws its guidance level from stream + (i, 0), its plan from
        stream + (i, 1) and its completion from stream + (i, 2). Ties keep the lowest index.
        """
        h = self.config.h_plan if h is None else h
        n = n or self.config.n_candidates
        if n < 1:
            raise ValueError(f"N must be >= 1, got {n}")
        base = as_stream(stream)
        prefix = prefix if prefix is not None else Plan.single(start)

        best_plan, best_reward = None, -1.0
        for i in range(n):
            g = gs.levels[int(seed_rng(base + (i, 0)).integers(len(gs.levels)))]
            candidate = self.propose(start, target, g, h, base + (i, 1), segment_id)
            scored = stitch(prefix, candidate)
            if complete:
                scored = self.fast_complete(scored, task.goal, task.eps_goal, max(task.L, len(scored)),
                                            base + (i, 2), g=gs.max_level)
            value = reward(scored, task.goal, task.eps_goal, task.L, self.params.v_max)
            if value > best_reward:
                best_plan, best_reward = candidate, value
        logger.debug(f"best_of_n: N={n} best reward {best_reward:.4f}")
        return best_plan, best_reward
