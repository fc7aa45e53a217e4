import pytest
from hypothesis import given
from hypothesis import strategies as st

from maze_env import State
from plan_core import (
    GuidanceSet,
    InvalidPlanError,
    Plan,
    PlanStitchError,
    SegmentMarker,
    check_plausibility,
    dataset_from_text,
    dataset_to_text,
    first_goal_hit,
    is_executable,
    plan_from_text,
    plan_to_text,
    reward,
    stitch,
    truncate_plan,
    validate_plan,
)


def line_plan(x0: float, n: int, step: float = 0.5, y: float = 1.5, segment_id: int = 0) -> Plan:
    return Plan(tuple(State(x0 + i * step, y) for i in range(n)), (SegmentMarker(segment_id, 1.0, 0),))


class TestPlan:
    def test_empty_rejected(self):
        with pytest.raises(InvalidPlanError):
            Plan(())

    def test_single(self):
        plan = Plan.single((1.0, 2.0))
        assert len(plan) == 1 and plan.steps == 0 and plan.first == plan.last == State(1.0, 2.0)

    def test_segments_share_junctions(self):
        plan = stitch(line_plan(1.0, 4, segment_id=1), line_plan(2.5, 3, segment_id=2))
        (m1, s1), (m2, s2) = plan.segments()
        assert (m1.segment_id, m2.segment_id) == (1, 2)
        assert s1[-1] == s2[0]
        assert len(s1) + len(s2) - 1 == len(plan)


class TestStitch:
    def test_root_plus_child(self):
        child = line_plan(1.0, 5)
        assert len(stitch(Plan.single((1.0, 1.5)), child)) == 5

    def test_lengths(self):
        parent = line_plan(0.0, 40, step=0.1)
        child = line_plan(parent.last.x, 40, step=0.1)
        result = stitch(parent, child)
        assert len(result) == 79
        assert result.states[:40] == parent.states

    def test_junction_mismatch(self):
        parent = line_plan(0.0, 3)
        child = line_plan(parent.last.x + 0.5, 3)
        with pytest.raises(PlanStitchError):
            stitch(parent, child)

    def test_provenance_shifted(self):
        result = stitch(line_plan(0.0, 4, segment_id=1), line_plan(1.5, 3, segment_id=2))
        assert [m.start for m in result.provenance] == [0, 3]

    def test_associative(self):
        a = line_plan(0.0, 4, segment_id=1)
        b = line_plan(a.last.x, 3, segment_id=2)
        c = line_plan(b.last.x, 5, segment_id=3)
        assert stitch(stitch(a, b), c) == stitch(a, stitch(b, c))

    @given(
        a=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=20),
        b=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=0, max_size=20),
    )
    def test_junction_is_exact_and_plausibility_preserved(self, a, b):
        # Random walks with steps bounded by 0.5 in each axis
        def walk(start, deltas):
            states = [State(*start)]
            for dx, dy in deltas:
                states.append(State(states[-1].x + 0.5 * dx, states[-1].y + 0.5 * dy))
            return Plan(tuple(states))

        parent = walk((0.0, 0.0), a[1:])
        child = walk(parent.last, b)
        result = stitch(parent, child)
        assert len(result) == len(parent) + len(child) - 1
        assert result.states[len(parent) - 1] == parent.last == child.first
        bound = 0.5 * 2 ** 0.5
        assert check_plausibility(result, bound) == (
            check_plausibility(parent, bound) and check_plausibility(child, bound)
        )


class TestTruncate:
    def test_keeps_prefix_and_markers(self):
        plan = stitch(line_plan(0.0, 4, segment_id=1), line_plan(1.5, 3, segment_id=2))
        cut = truncate_plan(plan, 3)
        assert cut.states == plan.states[:4]
        assert [m.segment_id for m in cut.provenance] == [1]

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            truncate_plan(line_plan(0.0, 3), 3)


class TestPlausibility:
    def test_within_bound(self):
        assert check_plausibility(line_plan(0.0, 10), 0.5)

    def test_large_jump(self):
        plan = Plan((State(0.0, 0.0), State(5.0, 0.0)))
        assert not check_plausibility(plan, 0.5)

    def test_single_state(self):
        assert check_plausibility(Plan.single((0.0, 0.0)), 0.5)

    def test_tolerance_absorbs_rounding(self):
        plan = Plan((State(0.0, 0.0), State(0.5 + 1e-12, 0.0)))
        assert check_plausibility(plan, 0.5)


class TestGoalHit:
    def test_exact_pass(self):
        plan = line_plan(0.0, 12)
        assert first_goal_hit(plan, (3.5, 1.5), 0.1) == 7

    def test_never(self):
        assert first_goal_hit(line_plan(0.0, 5), (10.0, 10.0), 0.5) is None

    def test_first_of_two_entries(self):
        states = [State(5.0, 0.0)] * 3 + [State(0.0, 0.0)] + [State(5.0, 0.0)] * 5 + [State(0.0, 0.0)]
        assert first_goal_hit(Plan(tuple(states)), (0.0, 0.0), 0.5) == 3

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            first_goal_hit(line_plan(0.0, 2), (0.0, 1.5), 0.0)


def hit_at(t: int) -> Plan:
    return Plan(tuple([State(10.0, 0.0)] * t + [State(0.0, 0.0)]))


class TestReward:
    @pytest.mark.parametrize("t,H", [(0, 1), (0, 10), (3, 10), (9, 10), (250, 400), (500, 1000), (999, 1000)])
    def test_formula(self, t, H):
        assert reward(hit_at(t), (0.0, 0.0), 0.5, H, v_max=100.0) == (H - t) / H

    def test_halfway_hit_scores_half(self):
        assert reward(hit_at(500), (0.0, 0.0), 0.5, 1000, v_max=100.0) == 0.5

    @pytest.mark.parametrize("t,H", [(10, 10), (11, 10)])
    def test_hit_at_or_after_horizon(self, t, H):
        assert reward(hit_at(t), (0.0, 0.0), 0.5, H, v_max=100.0) == 0.0

    def test_implausible(self):
        assert reward(hit_at(3), (0.0, 0.0), 0.5, 10, v_max=0.5) == 0.0

    def test_no_hit(self):
        assert reward(line_plan(0.0, 5), (9.0, 9.0), 0.5, 10, v_max=0.5) == 0.0

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            reward(hit_at(0), (0.0, 0.0), 0.5, 0, v_max=1.0)


class TestExecutable:
    def test_corridor_plan(self, medium):
        plan = line_plan(1.5, 10)  # row 1 is free from x=1 to x=7
        assert is_executable(plan, medium, 0.5)
        validate_plan(plan, medium, 0.5)

    def test_through_wall(self, medium):
        plan = Plan((State(1.5, 2.5), State(2.0, 2.5), State(2.5, 2.5)))
        assert not is_executable(plan, medium, 0.5)
        with pytest.raises(InvalidPlanError):
            validate_plan(plan, medium, 0.5)


class TestGuidanceSet:
    def test_max_level(self):
        assert GuidanceSet((0.5, 2.0, 1.0)).max_level == 2.0

    def test_rejects_empty_and_negative(self):
        with pytest.raises(ValueError):
            GuidanceSet(())
        with pytest.raises(ValueError):
            GuidanceSet((0.5, -1.0))


class TestTextFormat:
    def test_plan_text_is_exact(self):
        plan = stitch(
            Plan((State(0.1, 0.2), State(0.30000000000000004, 0.2)), (SegmentMarker(1, 0.1, 0),)),
            Plan((State(0.30000000000000004, 0.2), State(1 / 3, 2 / 3)), (SegmentMarker(2, 2.0, 0),)),
        )
        assert plan_from_text(plan_to_text(plan)) == plan

    def test_non_contiguous_index(self):
        with pytest.raises(InvalidPlanError):
            plan_from_text("0,1.0,1.0\n2,1.5,1.0\n")

    def test_dataset_blocks(self):
        plans = [line_plan(0.0, 3), line_plan(1.0, 2)]
        assert dataset_from_text(dataset_to_text(plans)) == plans
