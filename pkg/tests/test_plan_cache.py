import threading

import pytest

import models
from maze_env import State
from plan_cache import CacheKey, PlanCache
from plan_core import InvalidPlanError, Plan, is_executable


def row_plan(x0: float, x1: float = 4.0, y: float = 1.5, step: float = 0.5) -> Plan:
    """Straight run along row 1 of the medium maze."""
    states = [State(x0, y)]
    while states[-1].x + step < x1:
        states.append(State(states[-1].x + step, y))
    states.append(State(x1, y))
    return Plan(tuple(states))


GOAL = State(4.0, 1.5)


class TestLookup:
    def test_nearest_start_wins(self, medium):
        cache = PlanCache(medium, v_max=0.5, eps_cache=0.5)
        cache.insert(CacheKey("oc", (2.1, 1.5), GOAL), row_plan(2.1))
        cache.insert(CacheKey("oc", (2.3, 1.5), GOAL), row_plan(2.3))
        plan = cache.lookup(CacheKey("oc", (2.0, 1.5), GOAL))
        assert plan.first == State(2.0, 1.5)
        assert plan.states[1] == State(2.1, 1.5)
        assert is_executable(plan, medium, 0.5)

    def test_exact_start_is_not_rerooted(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        stored = row_plan(2.0)
        cache.insert(CacheKey("oc", (2.0, 1.5), GOAL), stored)
        assert cache.lookup(CacheKey("oc", (2.0, 1.5), GOAL)) == stored

    def test_context_must_match(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        cache.insert(CacheKey("to-wp0", (2.0, 1.5), GOAL), row_plan(2.0))
        assert cache.lookup(CacheKey("from-wp0", (2.0, 1.5), GOAL)) is None

    def test_goal_too_far(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        cache.insert(CacheKey("oc", (2.0, 1.5), GOAL), row_plan(2.0))
        assert cache.lookup(CacheKey("oc", (2.0, 1.5), (5.0, 1.5))) is None

    def test_bridge_through_wall_is_a_miss(self, medium):
        cache = PlanCache(medium, v_max=1.0, eps_cache=0.9)
        cache.insert(CacheKey("oc", (1.5, 1.5), GOAL), row_plan(1.5))
        # Bridge stays inside column 1
        assert cache.lookup(CacheKey("oc", (1.5, 2.2), GOAL)) is not None
        # Wall cell (row 2, col 2)
        assert cache.lookup(CacheKey("oc", (2.1, 2.1), GOAL)) is None

    def test_stats(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        cache.insert(CacheKey("oc", (2.0, 1.5), GOAL), row_plan(2.0))
        cache.lookup(CacheKey("oc", (2.0, 1.5), GOAL))
        cache.lookup(CacheKey("oc", (6.0, 6.0), GOAL))
        assert cache.stats() == {"entries": 1, "lookups": 2, "hits": 1, "hit_rate": 0.5}

    def test_invalid_radius(self, medium):
        with pytest.raises(ValueError):
            PlanCache(medium, v_max=0.5, eps_cache=0.0)


class TestInsert:
    def test_rejects_colliding_plan(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        bad = Plan((State(1.5, 2.5), State(2.0, 2.5), State(2.5, 2.5)))
        with pytest.raises(InvalidPlanError):
            cache.insert(CacheKey("oc", bad.first, bad.last), bad)

    def test_keeps_shorter_plan(self, medium):
        cache = PlanCache(medium, v_max=0.5)
        key = CacheKey("oc", (2.0, 1.5), GOAL)
        assert cache.insert(key, row_plan(2.0, step=0.25))
        assert cache.insert(key, row_plan(2.0))
        assert not cache.insert(key, row_plan(2.0, step=0.4))
        assert len(cache.entries()[0].plan) == len(row_plan(2.0))

    def test_concurrent_inserts(self, medium):
        cache = PlanCache(medium, v_max=0.5)

        def worker(i):
            cache.insert(CacheKey(f"ctx{i}", (2.0, 1.5), GOAL), row_plan(2.0))

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(cache) == 16


def test_persistence(medium, db_url):
    cache = PlanCache(medium, v_max=0.5)
    cache.insert(CacheKey("oc", (2.0, 1.5), GOAL), row_plan(2.0))
    cache.insert(CacheKey("direct", (2.5, 1.5), GOAL), row_plan(2.5))

    db = models.SessionLocal()
    try:
        assert cache.save(db) == 2
        restored = PlanCache(medium, v_max=0.5)
        assert restored.load(db) == 2
    finally:
        db.close()
    assert restored.lookup(CacheKey("direct", (2.5, 1.5), GOAL)) == row_plan(2.5)
