"""
Plan value type plus stitching, plausibility filtering, goal detection and
the reward used by every composer.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

from maze_env import Maze, State, distance, segment_collision_free
from schemas import DEFAULT_GUIDANCE_LEVELS

logger = logging.getLogger(__name__)

# Absorbs accumulation error in world-unit arithmetic
PLAUSIBILITY_TOLERANCE = 1e-9


class PlanStitchError(ValueError):
    """Raised when a child plan does not start at the parent's terminal state."""


class InvalidPlanError(ValueError):
    """Raised when a plan is implausible or crosses a wall."""


class SegmentMarker(NamedTuple):
    """Provenance of one stitched segment: which proposal, at which guidance, from which index."""
    segment_id: int
    guidance: float
    start: int


@dataclass(frozen=True)
class Plan:
    """Timestamped sequence of states; index t is the step at which states[t] is reached."""
    states: Tuple[State, ...]
    provenance: Tuple[SegmentMarker, ...] = ()

    def __post_init__(self):
        if not self.states:
            raise InvalidPlanError("A plan needs at least one state")
        object.__setattr__(self, "states", tuple(State(float(s[0]), float(s[1])) for s in self.states))
        object.__setattr__(self, "provenance", tuple(SegmentMarker(*m) for m in self.provenance))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def first(self) -> State:
        return self.states[0]

    @property
    def last(self) -> State:
        return self.states[-1]

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @classmethod
    def single(cls, state: Sequence[float]) -> "Plan":
        return cls((State(*state),))

    def segments(self) -> List[Tuple[Optional[SegmentMarker], Tuple[State, ...]]]:
        """Split into per-marker state runs; adjacent runs share their junction state."""
        if not self.provenance:
            return [(None, self.states)]
        out = []
        for i, marker in enumerate(self.provenance):
            end = self.provenance[i + 1].start if i + 1 < len(self.provenance) else len(self.states) - 1
            out.append((marker, self.states[marker.start:end + 1]))
        return out


@dataclass(frozen=True)
class GuidanceSet:
    """Guidance levels a planner may draw from per candidate (the meta-action)."""
    levels: Tuple[float, ...] = tuple(DEFAULT_GUIDANCE_LEVELS)

    def __post_init__(self):
        levels = tuple(float(g) for g in self.levels)
        if not levels:
            raise ValueError("GuidanceSet needs at least one level")
        if any(g < 0 for g in levels):
            raise ValueError(f"Guidance levels must be >= 0, got {levels}")
        object.__setattr__(self, "levels", levels)

    @property
    def max_level(self) -> float:
        return max(self.levels)


def stitch(parent: Plan, child: Plan) -> Plan:
    """Concatenate child onto parent, dropping the duplicated junction state once."""
    if child.first != parent.last:
        raise PlanStitchError(
            f"Junction mismatch: child starts at {child.first}, parent ends at {parent.last}"
        )
    offset = len(parent) - 1
    markers = parent.provenance + tuple(m._replace(start=m.start + offset) for m in child.provenance)
    return Plan(parent.states + child.states[1:], markers)


def truncate_plan(plan: Plan, index: int) -> Plan:
    """Prefix up to and including states[index]."""
    if index < 0 or index >= len(plan):
        raise IndexError(f"Truncation index {index} outside plan of length {len(plan)}")
    markers = tuple(m for m in plan.provenance if m.start < index or m.start == 0)
    return Plan(plan.states[:index + 1], markers)


def plan_suffix(plan: Plan, index: int) -> Plan:
    """Suffix from states[index] on, re-timed so it starts at step 0."""
    if index < 0 or index >= len(plan):
        raise IndexError(f"Suffix index {index} outside plan of length {len(plan)}")
    markers: List[SegmentMarker] = []
    for m in plan.provenance:
        if m.start <= index:
            markers = [m._replace(start=0)]
        else:
            markers.append(m._replace(start=m.start - index))
    return Plan(plan.states[index:], tuple(markers))


def check_plausibility(plan: Plan, v_max: float) -> bool:
    """True iff every consecutive displacement is at most v_max (with tolerance)."""
    bound = v_max * (1.0 + PLAUSIBILITY_TOLERANCE)
    states = plan.states
    return all(distance(states[i], states[i + 1]) <= bound for i in range(len(states) - 1))


def first_goal_hit(plan: Plan, goal: Sequence[float], eps_goal: float) -> Optional[int]:
    """Smallest t with dist(states[t], goal) <= eps_goal, or None."""
    if eps_goal <= 0:
        raise ValueError(f"eps_goal must be positive, got {eps_goal}")
    for t, s in enumerate(plan.states):
        if distance(s, goal) <= eps_goal:
            return t
    return None


def reward(plan: Plan, goal: Sequence[float], eps_goal: float, H: int, v_max: float) -> float:
    """(H - t) / H for the first goal hit t; 0 for implausible or non-reaching plans."""
    if H < 1:
        raise ValueError(f"H must be >= 1, got {H}")
    if not check_plausibility(plan, v_max):
        return 0.0
    t = first_goal_hit(plan, goal, eps_goal)
    if t is None or t >= H:
        return 0.0
    return (H - t) / H


def is_executable(plan: Plan, maze: Maze, v_max: float) -> bool:
    """Plausible, every state free and every consecutive segment collision-free."""
    if not check_plausibility(plan, v_max):
        return False
    states = plan.states
    if not all(maze.is_free(s) for s in states):
        return False
    return all(segment_collision_free(states[i], states[i + 1], maze) for i in range(len(states) - 1))


def validate_plan(plan: Plan, maze: Maze, v_max: float) -> None:
    if not is_executable(plan, maze, v_max):
        raise InvalidPlanError(f"Plan of length {len(plan)} is implausible or not collision-free")


# ============== Text format ==============

def plan_to_text(plan: Plan) -> str:
    """One state per line as "t,x,y"; provenance kept in "# segment,id,g,start" comments."""
    lines = [f"# segment,{m.segment_id},{m.guidance!r},{m.start}" for m in plan.provenance]
    lines.extend(f"{t},{s.x!r},{s.y!r}" for t, s in enumerate(plan.states))
    return "\n".join(lines) + "\n"


def plan_from_text(text: str) -> Plan:
    states: List[State] = []
    markers: List[SegmentMarker] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = [f.strip() for f in line[1:].split(",")]
            if fields[0] == "segment" and len(fields) == 4:
                markers.append(SegmentMarker(int(fields[1]), float(fields[2]), int(fields[3])))
            continue
        t, x, y = line.split(",")
        if int(t) != len(states):
            raise InvalidPlanError(f"Non-contiguous step index {t} (expected {len(states)})")
        states.append(State(float(x), float(y)))
    return Plan(tuple(states), tuple(markers))


def dataset_to_text(plans: Iterable[Plan]) -> str:
    """Plans separated by blank lines."""
    return "\n".join(plan_to_text(p) for p in plans)


def dataset_from_text(text: str) -> List[Plan]:
    blocks, current = [], []
    for line in text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            blocks.append("\n".join(current))
            current = []
    if current:
        blocks.append("\n".join(current))
    return [plan_from_text(b) for b in blocks]
