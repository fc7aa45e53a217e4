import pytest

from composer_online import ComposerResult, cached_solution, run_online_composer
from maze_env import State, Task
from plan_cache import CacheKey, PlanCache
from plan_core import Plan, first_goal_hit, is_executable
from schemas import KinematicParams, OcConfig

ROOM_CFG = OcConfig(budget=60, h_plan=10, L=200, guidance_levels=[1.0, 2.0, 4.0])


def test_start_inside_goal(room):
    task = Task((2.5, 2.5), (2.7, 2.5), 0.5, 10)
    result = run_online_composer(task, room, ROOM_CFG, seed=0)
    assert result.success
    assert result.plan == Plan.single((2.5, 2.5))
    assert result.expansions == 0 and result.plan_steps == 0


def test_invalid_task(room):
    with pytest.raises(ValueError):
        run_online_composer(Task((0.5, 0.5), (3.0, 3.0), 0.5, 10), room, ROOM_CFG, seed=0)


def test_room_task_succeeds(room, room_task):
    result = run_online_composer(room_task, room, ROOM_CFG, seed=3)
    assert result.success
    plan = result.plan
    assert plan.first == room_task.start
    assert is_executable(plan, room, KinematicParams().v_max)
    assert len(plan) <= room_task.L
    assert first_goal_hit(plan, room_task.goal, room_task.eps_goal) == len(plan) - 1
    assert result.plan_steps == len(plan) - 1
    assert 1 <= result.expansions <= ROOM_CFG.budget
    assert len(result.trees) == 1


def test_deterministic(room, room_task):
    a = run_online_composer(room_task, room, ROOM_CFG, seed=5)
    b = run_online_composer(room_task, room, ROOM_CFG, seed=5)
    assert a.success == b.success and a.expansions == b.expansions
    assert a.plan == b.plan
    assert a.trees[0].dump() == b.trees[0].dump()


def test_budget_respected(medium):
    cfg = OcConfig(budget=3, h_plan=2, L=400)
    task = Task((1.5, 1.5), (6.5, 6.5), 0.5, 400)
    result = run_online_composer(task, medium, cfg, seed=0)
    # Three segments of two steps cannot cover the distance
    assert not result.success
    assert result.plan is None and result.plan_steps is None
    assert result.expansions == 3


def test_saturated_tree_stops_early(medium):
    cfg = OcConfig(budget=50, h_plan=2, L=400, branching=1, max_depth=2)
    task = Task((1.5, 1.5), (6.5, 6.5), 0.5, 400)
    result = run_online_composer(task, medium, cfg, seed=0)
    assert not result.success
    assert result.expansions == 2


class TestCache:
    def test_second_call_hits(self, room, room_task):
        cache = PlanCache(room, KinematicParams().v_max)
        first = run_online_composer(room_task, room, ROOM_CFG, seed=3, cache=cache)
        assert first.success and first.cache_hit is False
        second = run_online_composer(room_task, room, ROOM_CFG, seed=99, cache=cache)
        assert second.cache_hit is True
        assert second.expansions == 0
        assert second.plan == first.plan

    def test_no_cache_reports_none(self, room, room_task):
        assert run_online_composer(room_task, room, ROOM_CFG, seed=3).cache_hit is None

    def test_cached_plan_outside_horizon_is_a_miss(self, room):
        cache = PlanCache(room, KinematicParams().v_max)
        plan = Plan(tuple(State(2.0 + 0.5 * k, 2.0) for k in range(7)))
        key = CacheKey("oc", plan.first, plan.last)
        cache.insert(key, plan)
        long_task = Task(plan.first, plan.last, 0.25, 10)
        short_task = Task(plan.first, plan.last, 0.25, 5)
        assert cached_solution(cache, key, long_task) == plan
        assert cached_solution(cache, key, short_task) is None

    def test_sub_solutions_cached_per_ancestor(self, room):
        cfg = OcConfig(budget=80, h_plan=4, L=200, guidance_levels=[1.0, 2.0, 4.0])
        task = Task((1.5, 1.5), (6.5, 6.5), 0.5, 200)
        cache = PlanCache(room, KinematicParams().v_max)
        first = run_online_composer(task, room, cfg, seed=5, cache=cache)
        assert first.success
        tree = first.trees[0]
        terminal = next(n for n in tree.nodes.values() if n.terminal)
        assert terminal.depth >= 2
        assert len(cache) == terminal.depth

        # A later task starting where the first one passed reuses the remainder
        middle = tree.nodes[terminal.parent]
        later = Task(middle.plan.last, task.goal, 0.5, 200)
        reused = run_online_composer(later, room, cfg, seed=6, cache=cache)
        assert reused.cache_hit is True and reused.expansions == 0
        assert reused.plan.states == first.plan.states[len(middle.plan) - 1:]


def test_result_defaults():
    result = ComposerResult(False)
    assert result.plan_steps is None and result.trees == [] and result.details == {}


@pytest.mark.slow
def test_medium_success_rate(medium):
    task = Task((1.5, 1.5), (6.5, 6.5), 0.5, 400)
    wins = sum(run_online_composer(task, medium, OcConfig(), seed=s).success for s in range(10))
    assert wins >= 9
