import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maze_env import (
    CONTACT_MARGIN,
    MAZES_DIR,
    MazeParseError,
    State,
    TaskSamplingError,
    generate_dataset,
    generate_maze,
    load_bundled_maze,
    maze_to_text,
    parse_maze,
    sample_task,
    segment_collision_free,
    step_dynamics,
)
from plan_core import check_plausibility, is_executable
from schemas import KinematicParams

MEDIUM = load_bundled_maze("medium")


class TestParseMaze:
    def test_single_free_cell(self):
        maze = parse_maze("###\n#.#\n###")
        assert (maze.height, maze.width) == (3, 3)
        assert maze.free_count == 1

    def test_ragged_rows(self):
        with pytest.raises(MazeParseError, match="Ragged"):
            parse_maze("##\n#")

    def test_empty(self):
        with pytest.raises(MazeParseError):
            parse_maze("")

    def test_no_free_cell(self):
        with pytest.raises(MazeParseError):
            parse_maze("###\n###\n###")

    def test_unknown_character(self):
        with pytest.raises(MazeParseError, match="Unexpected"):
            parse_maze("###\n#x#\n###")

    def test_open_boundary_gets_wall_ring(self):
        maze = parse_maze("..\n..")
        assert (maze.height, maze.width) == (4, 4)
        assert maze.free_count == 4
        assert maze.walls[0].all() and maze.walls[:, 0].all()

    def test_markers(self):
        maze = parse_maze("####\n#SG#\n####")
        assert maze.start_marker == State(1.5, 1.5)
        assert maze.goal_marker == State(2.5, 1.5)
        assert maze.free_count == 2

    def test_bundled_free_count_matches_characters(self):
        text = (MAZES_DIR / "medium.txt").read_text(encoding="utf-8")
        expected = sum(ch != "#" for ch in text if ch != "\n")
        assert MEDIUM.free_count == expected
        assert (MEDIUM.height, MEDIUM.width) == (8, 8)

    def test_text_and_hash_are_stable(self):
        again = parse_maze(maze_to_text(MEDIUM))
        assert again.hash == MEDIUM.hash
        assert parse_maze(maze_to_text(MEDIUM), cell_size=2.0).hash != MEDIUM.hash


class TestGenerateMaze:
    def test_deterministic(self):
        a = generate_maze(11, 9, seed=4)
        b = generate_maze(11, 9, seed=4)
        assert np.array_equal(a.walls, b.walls)

    def test_loops_open_walls(self):
        closed = generate_maze(15, 15, seed=2)
        looped = generate_maze(15, 15, seed=2, loop_fraction=1.0)
        assert looped.free_count > closed.free_count

    def test_too_small(self):
        with pytest.raises(ValueError):
            generate_maze(3, 9, seed=0)


class TestStepDynamics:
    params = KinematicParams(v_max=0.5)

    def test_zero_action(self, room):
        s = State(3.0, 3.0)
        assert step_dynamics(s, (0.0, 0.0), self.params, room) == s

    def test_clipped_to_v_max(self, room):
        nxt = step_dynamics(State(3.0, 3.0), (1.0, 0.0), self.params, room)
        assert nxt == State(3.5, 3.0)

    def test_diagonal_clip_magnitude(self, room):
        s = State(3.0, 3.0)
        nxt = step_dynamics(s, (3.0, 4.0), self.params, room)
        assert math.hypot(nxt.x - s.x, nxt.y - s.y) == pytest.approx(0.5)

    def test_stops_at_wall_face(self, room):
        # Left wall face is x = 1.0
        nxt = step_dynamics(State(1.1, 2.5), (-0.5, 0.0), self.params, room)
        assert nxt.x == pytest.approx(1.0 + CONTACT_MARGIN, abs=1e-9)
        assert nxt.y == 2.5
        assert room.is_free(nxt)

    @settings(max_examples=300, deadline=None)
    @given(
        cell=st.integers(0, len(MEDIUM.free_cells) - 1),
        ox=st.floats(0.01, 0.99), oy=st.floats(0.01, 0.99),
        ax=st.floats(-2.0, 2.0), ay=st.floats(-2.0, 2.0),
    )
    def test_never_enters_a_wall(self, cell, ox, oy, ax, ay):
        row, col = MEDIUM.free_cells[cell]
        s = State(col + ox, row + oy)
        nxt = step_dynamics(s, (ax, ay), self.params, MEDIUM)
        assert MEDIUM.is_free(nxt)
        assert math.hypot(nxt.x - s.x, nxt.y - s.y) <= self.params.v_max * (1 + 1e-9)
        assert segment_collision_free(s, nxt, MEDIUM)


def _distance_to_walls(points: np.ndarray, maze) -> float:
    best = math.inf
    for r, c in zip(*np.nonzero(maze.walls)):
        qx = np.clip(points[:, 0], c, c + 1)
        qy = np.clip(points[:, 1], r, r + 1)
        best = min(best, float(np.min(np.hypot(points[:, 0] - qx, points[:, 1] - qy))))
    return best


coordinate = st.integers(0, 799).map(lambda v: v / 100)


class TestSegmentCollision:
    def test_degenerate_segment_in_free_cell(self, medium):
        assert segment_collision_free((1.5, 1.5), (1.5, 1.5), medium)

    def test_within_one_cell(self, medium):
        assert segment_collision_free((1.1, 1.2), (1.8, 1.9), medium)

    def test_midpoint_in_wall(self, medium):
        # Cell (2, 2) is a wall; segment from (1.5, 2.5) to (3.5, 2.5) crosses it
        assert medium.walls[2, 2]
        assert not segment_collision_free((1.5, 2.5), (3.5, 2.5), medium)

    @settings(max_examples=300, deadline=None)
    @given(x0=coordinate, y0=coordinate, x1=coordinate, y1=coordinate)
    def test_agrees_with_fine_sampling(self, x0, y0, x1, y1):
        f = np.linspace(0.0, 1.0, 1000)
        points = np.stack([x0 + f * (x1 - x0), y0 + f * (y1 - y0)], axis=1)
        points[0] = (x0, y0)
        points[-1] = (x1, y1)
        sampled_free = all(MEDIUM.is_free(p) for p in points)
        free = segment_collision_free((x0, y0), (x1, y1), MEDIUM)
        if free:
            assert sampled_free
        elif sampled_free:
            # Only grazing contacts (corners, faces) may escape the sampler
            assert _distance_to_walls(points, MEDIUM) < 0.01


class TestDataset:
    def test_empty(self, medium, params):
        assert generate_dataset(medium, 0, 40, params, seed=1) == []

    def test_plans_are_executable(self, medium, params):
        plans = generate_dataset(medium, 5, 40, params, seed=1)
        assert len(plans) == 5
        for plan in plans:
            assert len(plan) <= 40
            assert check_plausibility(plan, params.v_max)
            assert is_executable(plan, medium, params.v_max)

    def test_deterministic(self, medium, params):
        a = generate_dataset(medium, 3, 20, params, seed=9)
        b = generate_dataset(medium, 3, 20, params, seed=9)
        assert [p.states for p in a] == [p.states for p in b]

    def test_invalid_horizon(self, medium, params):
        with pytest.raises(ValueError):
            generate_dataset(medium, 1, 0, params, seed=1)


class TestSampleTask:
    def test_any_pair(self, medium):
        task = sample_task(medium, 0.0, seed=3)
        assert medium.is_free(task.start) and medium.is_free(task.goal)
        assert task.start != task.goal

    def test_separation_respected(self, medium):
        task = sample_task(medium, 4.0, seed=3)
        assert math.dist(task.start, task.goal) >= 4.0

    def test_impossible_separation(self, medium):
        with pytest.raises(TaskSamplingError):
            sample_task(medium, medium.diagonal + 1.0, seed=3)

    def test_fixed_seed(self, medium):
        assert sample_task(medium, 2.0, seed=5) == sample_task(medium, 2.0, seed=5)
