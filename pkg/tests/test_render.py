from maze_env import State, Task
from plan_core import GuidanceSet, Plan, SegmentMarker
from proposer import GoalAttraction, GuidedProposer
from render import TaggedPlan, render_svg, tree_plans
from schemas import KinematicParams, ProposerConfig
from search_tree import SearchTree


def test_one_rect_per_wall(medium):
    svg = render_svg(medium)
    assert svg.count('class="wall"') == medium.wall_count
    assert "<polyline" not in svg


def test_polyline_per_segment(room):
    stitched = Plan(
        tuple(State(2.0 + 0.5 * k, 2.0) for k in range(7)),
        (SegmentMarker(1, 1.0, 0), SegmentMarker(2, 2.0, 3)),
    )
    plain = Plan((State(2.0, 4.0), State(2.5, 4.0)))
    svg = render_svg(room, [stitched, TaggedPlan(plain, "discarded")])
    assert svg.count('<polyline class="accepted"') == 2
    assert svg.count('<polyline class="discarded"') == 1
    assert 'data-segment="2"' in svg
    # Discarded plans are drawn first
    assert svg.index('class="discarded"') < svg.index('class="accepted"')


def test_markers_and_file(room, tmp_path):
    out = tmp_path / "scenes" / "room.svg"
    svg = render_svg(room, [], out, start=State(2.0, 2.0), goal=State(5.0, 5.0),
                     waypoints=[State(3.0, 3.0), State(4.0, 4.0)], title="demo <room>")
    assert out.read_text(encoding="utf-8") == svg
    assert svg.count('<circle class="waypoint"') == 2
    assert '<circle class="start" cx="80.00" cy="80.00"' in svg
    assert "demo &lt;room&gt;" in svg


def test_tree_segments(room):
    task = Task((2.0, 2.0), (6.0, 6.0), 0.5, 100)
    proposer = GuidedProposer(room, KinematicParams(), ProposerConfig(h_plan=4, n_candidates=2))
    tree = SearchTree(task.start, task, proposer, GoalAttraction(task.goal), GuidanceSet((1.0,)), 0)
    for _ in range(3):
        tree.step()
    plans = tree_plans(tree)
    assert len(plans) == len(tree) - 1
    assert all(p.tag == "discarded" and len(p.plan) == 5 for p in plans)


def test_tree_dump_text(room, tmp_path):
    task = Task((2.0, 2.0), (6.0, 6.0), 0.5, 100)
    proposer = GuidedProposer(room, KinematicParams(), ProposerConfig(h_plan=4, n_candidates=2))
    tree = SearchTree(task.start, task, proposer, GoalAttraction(task.goal), GuidanceSet((1.0,)), 0)
    for _ in range(3):
        tree.step()
    dump = tmp_path / "tree.txt"
    dump.write_text(tree.dump())
    svg = render_svg(room, trees=[dump.read_text()])
    assert svg.count('<polyline class="discarded"') == len(tree) - 1
    assert svg == render_svg(room, trees=[tree])
