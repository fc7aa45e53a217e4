"""
Plan cache: successful plans keyed by (context, start, goal), matched within
an L2 radius and re-rooted onto the queried start by one bridging step.
"""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional

from maze_env import Maze, State, distance, segment_collision_free
from plan_core import InvalidPlanError, Plan, is_executable, plan_from_text, plan_to_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CacheKey:
    context: str
    start: State
    goal: State

    def __post_init__(self):
        object.__setattr__(self, "start", State(*self.start))
        object.__setattr__(self, "goal", State(*self.goal))


@dataclass
class CacheEntry:
    key: CacheKey
    plan: Plan
    hits: int = 0


class PlanCache:
    """Thread-safe store; lookups see whole entries only."""

    def __init__(self, maze: Maze, v_max: float, eps_cache: float = 0.5):
        if eps_cache <= 0:
            raise ValueError(f"eps_cache must be positive, got {eps_cache}")
        self.maze = maze
        self.v_max = v_max
        self.eps_cache = eps_cache
        self._entries: Dict[CacheKey, CacheEntry] = {}
        self._lock = threading.Lock()
        self.lookups = 0
        self.hits = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def insert(self, key: CacheKey, plan: Plan) -> bool:
        """Store plan; an existing exact key keeps whichever plan is shorter."""
        if not is_executable(plan, self.maze, self.v_max):
            raise InvalidPlanError("Refusing to cache an implausible or colliding plan")
        with self._lock:
            existing = self._entries.get(key)
            if existing is not None and len(existing.plan) <= len(plan):
                return False
            self._entries[key] = CacheEntry(key, plan, existing.hits if existing else 0)
        logger.debug(f"Cached plan for context '{key.context}' ({len(plan)} states)")
        return True

    def lookup(self, key: CacheKey, eps_cache: Optional[float] = None) -> Optional[Plan]:
        """Nearest-start entry with matching context, start and goal within eps_cache."""
        eps = self.eps_cache if eps_cache is None else eps_cache
        if eps <= 0:
            raise ValueError(f"eps_cache must be positive, got {eps}")
        with self._lock:
            self.lookups += 1
            best, best_d = None, None
            for entry in self._entries.values():
                if entry.key.context != key.context:
                    continue
                d_start = distance(entry.key.start, key.start)
                if d_start > eps or distance(entry.key.goal, key.goal) > eps:
                    continue
                if best_d is None or d_start < best_d:
                    best, best_d = entry, d_start
            if best is None:
                return None
            plan = self._reroot(best.plan, key.start)
            if plan is None:
                return None
            best.hits += 1
            self.hits += 1
        return plan

    def _reroot(self, plan: Plan, start: State) -> Optional[Plan]:
        if plan.first != start:
            if distance(plan.first, start) > self.v_max or not self.maze.is_free(start):
                return None
            if not segment_collision_free(start, plan.first, self.maze):
                return None
            plan = Plan((start,) + plan.states, tuple(m._replace(start=m.start + 1) for m in plan.provenance))
        if not is_executable(plan, self.maze, self.v_max):
            logger.warning("Cached plan failed re-validation, treating as a miss")
            return None
        return plan

    def entries(self) -> List[CacheEntry]:
        with self._lock:
            return list(self._entries.values())

    def stats(self) -> Dict[str, float]:
        with self._lock:
            return {
                "entries": len(self._entries),
                "lookups": self.lookups,
                "hits": self.hits,
                "hit_rate": self.hits / self.lookups if self.lookups else 0.0,
            }

    # ============== Persistence ==============

    def save(self, db) -> int:
        """Replace this maze's stored entries with the current ones."""
        from models import CachedPlan

        db.query(CachedPlan).filter(CachedPlan.maze_hash == self.maze.hash).delete()
        entries = self.entries()
        for entry in entries:
            db.add(CachedPlan(
                maze_hash=self.maze.hash,
                context=entry.key.context,
                start_x=entry.key.start.x,
                start_y=entry.key.start.y,
                goal_x=entry.key.goal.x,
                goal_y=entry.key.goal.y,
                plan_text=plan_to_text(entry.plan),
                hits=entry.hits,
            ))
        db.commit()
        logger.info(f"Saved {len(entries)} cached plans")
        return len(entries)

    def load(self, db) -> int:
        from models import CachedPlan

        rows = db.query(CachedPlan).filter(CachedPlan.maze_hash == self.maze.hash).all()
        loaded = 0
        for row in rows:
            key = CacheKey(row.context, (row.start_x, row.start_y), (row.goal_x, row.goal_y))
            try:
                if self.insert(key, plan_from_text(row.plan_text)):
                    loaded += 1
            except (InvalidPlanError, ValueError) as e:
                logger.warning(f"Skipping stored plan {row.id}: {e}")
        logger.info(f"Loaded {loaded} cached plans")
        return loaded
