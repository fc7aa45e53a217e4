"""
Maze worlds for plan search.
Occupancy-grid mazes, point-mass kinematics with stop-at-wall contact,
segment collision queries, task sampling and short random-walk datasets.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from schemas import KinematicParams

logger = logging.getLogger(__name__)

MAZES_DIR = Path(__file__).parent / "mazes"

WALL_CHAR = "#"
FREE_CHAR = "."
MAZE_CHARS = {WALL_CHAR, FREE_CHAR, "S", "G"}

# Keeps stopped states strictly inside free space
CONTACT_MARGIN = 1e-6

MAX_TASK_ATTEMPTS = 1000


class MazeParseError(ValueError):
    """Raised for malformed ASCII maze text."""


class TaskSamplingError(ValueError):
    """Raised when no start/goal pair satisfies the sampling constraints."""


class State(NamedTuple):
    """A 2-D position in world units."""
    x: float
    y: float


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two points."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True, eq=False)
class Maze:
    """Occupancy grid. ``walls[row, col]`` is True for Wall cells.

    Cell (row, col) covers x in [col*cs, (col+1)*cs) and y in [row*cs, (row+1)*cs).
    """
    walls: np.ndarray
    cell_size: float = 1.0
    start_marker: Optional[State] = None
    goal_marker: Optional[State] = None
    name: str = ""

    def __post_init__(self):
        walls = np.asarray(self.walls, dtype=bool)
        if walls.ndim != 2 or walls.size == 0:
            raise MazeParseError("Maze grid must be a non-empty 2-D array")
        if self.cell_size <= 0:
            raise MazeParseError(f"cell_size must be positive, got {self.cell_size}")
        if walls.all():
            raise MazeParseError("Maze has no free cell")
        walls = walls.copy()
        walls.setflags(write=False)
        object.__setattr__(self, "walls", walls)

    @property
    def height(self) -> int:
        return int(self.walls.shape[0])

    @property
    def width(self) -> int:
        return int(self.walls.shape[1])

    @property
    def world_width(self) -> float:
        return self.width * self.cell_size

    @property
    def world_height(self) -> float:
        return self.height * self.cell_size

    @property
    def diagonal(self) -> float:
        return math.hypot(self.world_width, self.world_height)

    @cached_property
    def free_cells(self) -> List[Tuple[int, int]]:
        """Free cells as (row, col), row-major order."""
        rows, cols = np.nonzero(~self.walls)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    @property
    def free_count(self) -> int:
        return len(self.free_cells)

    @property
    def wall_count(self) -> int:
        return int(self.walls.sum())

    @cached_property
    def hash(self) -> str:
        return maze_hash(self)

    def is_wall_cell(self, row: int, col: int) -> bool:
        """Cells outside the grid count as Wall."""
        if row < 0 or col < 0 or row >= self.height or col >= self.width:
            return True
        return bool(self.walls[row, col])

    def cell_of(self, p: Sequence[float]) -> Tuple[int, int]:
        return int(math.floor(p[1] / self.cell_size)), int(math.floor(p[0] / self.cell_size))

    def cell_center(self, row: int, col: int) -> State:
        return State((col + 0.5) * self.cell_size, (row + 0.5) * self.cell_size)

    def contains(self, p: Sequence[float]) -> bool:
        return 0.0 <= p[0] < self.world_width and 0.0 <= p[1] < self.world_height

    def is_free(self, p: Sequence[float]) -> bool:
        """True iff p lies inside the maze and in a Free cell."""
        if not self.contains(p):
            return False
        return not self.is_wall_cell(*self.cell_of(p))


@dataclass(frozen=True)
class Task:
    """A goal-reaching query: reach the eps_goal ball around goal within L steps."""
    start: State
    goal: State
    eps_goal: float
    L: int

    def __post_init__(self):
        if self.eps_goal <= 0:
            raise ValueError(f"eps_goal must be positive, got {self.eps_goal}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        object.__setattr__(self, "start", State(*self.start))
        object.__setattr__(self, "goal", State(*self.goal))


def validate_task(task: Task, maze: Maze) -> None:
    if not maze.is_free(task.start):
        raise ValueError(f"Task start {task.start} is not in a free cell")
    if not maze.is_free(task.goal):
        raise ValueError(f"Task goal {task.goal} is not in a free cell")


# ============== ASCII format ==============

def parse_maze(text: str, cell_size: float = 1.0, name: str = "") -> Maze:
    """Parse an ASCII grid ('#' wall, '.', 'S', 'G' free).

    S/G cells are reported as start_marker/goal_marker (cell centers). A missing
    boundary wall is added as an extra ring around the grid.
    """
    lines = text.replace("\r\n", "\n").split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MazeParseError("Empty maze text")

    width = len(lines[0])
    if width == 0:
        raise MazeParseError("Empty first row")
    for i, line in enumerate(lines):
        if len(line) != width:
            raise MazeParseError(f"Ragged rows: row {i} has {len(line)} characters, expected {width}")
        bad = set(line) - MAZE_CHARS
        if bad:
            raise MazeParseError(f"Unexpected characters {sorted(bad)} in row {i}")

    walls = np.array([[ch == WALL_CHAR for ch in line] for line in lines], dtype=bool)
    markers = {}
    for row, line in enumerate(lines):
        for col, ch in enumerate(line):
            if ch in ("S", "G"):
                if ch in markers:
                    raise MazeParseError(f"Duplicate '{ch}' marker at row {row}")
                markers[ch] = (row, col)

    boundary_closed = walls[0, :].all() and walls[-1, :].all() and walls[:, 0].all() and walls[:, -1].all()
    if not boundary_closed:
        walls = np.pad(walls, 1, constant_values=True)
        markers = {k: (r + 1, c + 1) for k, (r, c) in markers.items()}
        logger.debug(f"Boundary wall added around maze '{name}'")

    if walls.all():
        raise MazeParseError("Maze has no free cell")

    def marker_state(key: str) -> Optional[State]:
        if key not in markers:
            return None
        r, c = markers[key]
        return State((c + 0.5) * cell_size, (r + 0.5) * cell_size)

    return Maze(walls, cell_size, marker_state("S"), marker_state("G"), name)


def maze_to_text(maze: Maze, with_markers: bool = False) -> str:
    rows = []
    for r in range(maze.height):
        rows.append("".join(WALL_CHAR if maze.walls[r, c] else FREE_CHAR for c in range(maze.width)))
    if with_markers:
        for ch, marker in (("S", maze.start_marker), ("G", maze.goal_marker)):
            if marker is not None:
                r, c = maze.cell_of(marker)
                rows[r] = rows[r][:c] + ch + rows[r][c + 1:]
    return "\n".join(rows) + "\n"


def maze_hash(maze: Maze) -> str:
    """Content digest of the normalized grid; binds graph files to mazes."""
    payload = f"cell_size={maze.cell_size!r}\n{maze_to_text(maze)}"
    return hashlib.sha256(payload.encode()).hexdigest()


def list_bundled_mazes() -> List[str]:
    return sorted(p.stem for p in MAZES_DIR.glob("*.txt"))


def load_bundled_maze(name: str, cell_size: float = 1.0) -> Maze:
    path = MAZES_DIR / f"{name}.txt"
    if not path.exists():
        raise FileNotFoundError(f"No bundled maze named '{name}' (available: {list_bundled_mazes()})")
    return parse_maze(path.read_text(encoding="utf-8"), cell_size, name)


def load_maze(ref: Union[str, Path], cell_size: float = 1.0) -> Maze:
    """Load a maze from a file path, or by bundled name."""
    path = Path(ref)
    if path.is_file():
        return parse_maze(path.read_text(encoding="utf-8"), cell_size, path.stem)
    return load_bundled_maze(str(ref), cell_size)


def generate_maze(width: int, height: int, seed: int, loop_fraction: float = 0.0) -> Maze:
    """Random thin-wall maze carved by depth-first search on the odd lattice.

    loop_fraction opens that share of the remaining passage walls, adding cycles.
    """
    if width < 5 or height < 5:
        raise ValueError("Generated mazes need width and height >= 5")
    rng = np.random.default_rng(seed)
    walls = np.ones((height, width), dtype=bool)
    rows = list(range(1, height - 1, 2))
    cols = list(range(1, width - 1, 2))

    start = (rows[0], cols[0])
    walls[start] = False
    stack = [start]
    while stack:
        r, c = stack[-1]
        options = []
        for dr, dc in ((-2, 0), (2, 0), (0, -2), (0, 2)):
            nr, nc = r + dr, c + dc
            if 1 <= nr < height - 1 and 1 <= nc < width - 1 and walls[nr, nc]:
                options.append((nr, nc))
        if not options:
            stack.pop()
            continue
        nr, nc = options[int(rng.integers(len(options)))]
        walls[(r + nr) // 2, (c + nc) // 2] = False
        walls[nr, nc] = False
        stack.append((nr, nc))

    if loop_fraction > 0:
        candidates = []
        for r in range(1, height - 1):
            for c in range(1, width - 1):
                if not walls[r, c]:
                    continue
                if r % 2 == 1 and c % 2 == 0 and not walls[r, c - 1] and not walls[r, c + 1]:
                    candidates.append((r, c))
                elif r % 2 == 0 and c % 2 == 1 and not walls[r - 1, c] and not walls[r + 1, c]:
                    candidates.append((r, c))
        n_open = int(round(loop_fraction * len(candidates)))
        for idx in rng.permutation(len(candidates))[:n_open]:
            walls[candidates[int(idx)]] = False

    logger.info(f"Generated {width}x{height} maze (seed={seed}, loops={loop_fraction})")
    return Maze(walls, 1.0, name=f"generated-{width}x{height}-{seed}")


# ============== Geometry ==============

def first_wall_contact(p0: Sequence[float], p1: Sequence[float], maze: Maze) -> Optional[Tuple[float, Tuple[str, ...]]]:
    """First Wall cell touched by segment p0->p1 (grid supercover walk).

    Returns (t, axes) where t in [0, 1] is the segment parameter at contact and
    axes names the cell faces crossed there, or None if the segment is free.
    Passing exactly through a grid corner touches all cells sharing it.
    """
    cs = maze.cell_size
    x0, y0 = p0[0], p0[1]
    row, col = maze.cell_of(p0)
    if maze.is_wall_cell(row, col):
        return 0.0, ()

    dx = p1[0] - x0
    dy = p1[1] - y0
    if dx > 0:
        step_c, t_max_x, t_dx = 1, ((col + 1) * cs - x0) / dx, cs / dx
    elif dx < 0:
        step_c, t_max_x, t_dx = -1, (col * cs - x0) / dx, -cs / dx
    else:
        step_c, t_max_x, t_dx = 0, math.inf, math.inf
    if dy > 0:
        step_r, t_max_y, t_dy = 1, ((row + 1) * cs - y0) / dy, cs / dy
    elif dy < 0:
        step_r, t_max_y, t_dy = -1, (row * cs - y0) / dy, -cs / dy
    else:
        step_r, t_max_y, t_dy = 0, math.inf, math.inf

    while True:
        t = min(t_max_x, t_max_y)
        if t > 1.0:
            return None
        if t_max_x < t_max_y:
            col += step_c
            t_max_x += t_dx
            if maze.is_wall_cell(row, col):
                return t, ("x",)
        elif t_max_y < t_max_x:
            row += step_r
            t_max_y += t_dy
            if maze.is_wall_cell(row, col):
                return t, ("y",)
        else:
            side_x = maze.is_wall_cell(row, col + step_c)
            side_y = maze.is_wall_cell(row + step_r, col)
            if side_x or side_y:
                axes = tuple(a for a, hit in (("x", side_x), ("y", side_y)) if hit)
                return t, axes
            col += step_c
            row += step_r
            t_max_x += t_dx
            t_max_y += t_dy
            if maze.is_wall_cell(row, col):
                return t, ("x", "y")


def segment_collision_free(p0: Sequence[float], p1: Sequence[float], maze: Maze) -> bool:
    """True iff the segment p0->p1 touches only Free cells."""
    return first_wall_contact(p0, p1, maze) is None


def step_dynamics(s: State, action: Sequence[float], params: KinematicParams, maze: Maze) -> State:
    """Move by a velocity clipped to v_max; stop just short of the first wall face."""
    ax, ay = float(action[0]), float(action[1])
    magnitude = math.hypot(ax, ay)
    if magnitude == 0.0:
        return s
    if magnitude > params.v_max:
        scale = params.v_max / magnitude
        ax *= scale
        ay *= scale

    target = State(s.x + ax, s.y + ay)
    contact = first_wall_contact(s, target, maze)
    if contact is None:
        return target

    t_hit, axes = contact
    components = {"x": abs(ax), "y": abs(ay)}
    backoffs = [CONTACT_MARGIN / components[a] for a in axes if components[a] > 0]
    backoff = max(backoffs) if backoffs else CONTACT_MARGIN / math.hypot(ax, ay)
    t = t_hit - backoff
    if t <= 0.0:
        return s
    return State(s.x + ax * t, s.y + ay * t)


# ============== Sampling ==============

def generate_dataset(maze: Maze, n: int, h_train: int, params: KinematicParams, seed: int) -> list:
    """n random-walk trajectories of h_train states each, all collision-free and plausible.

    Headings drift by up to noise_scale*pi per step and are redrawn after wall contact.
    """
    from plan_core import Plan, SegmentMarker

    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if h_train < 1:
        raise ValueError(f"h_train must be >= 1, got {h_train}")

    rng = np.random.default_rng(seed)
    free = maze.free_cells
    cs = maze.cell_size
    plans = []
    for i in range(n):
        row, col = free[int(rng.integers(len(free)))]
        offset = rng.uniform(0.1, 0.9, size=2)
        current = State((col + offset[0]) * cs, (row + offset[1]) * cs)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        states = [current]
        for _ in range(h_train - 1):
            action = (params.v_max * math.cos(heading), params.v_max * math.sin(heading))
            nxt = step_dynamics(current, action, params, maze)
            if distance(nxt, current) < 0.5 * params.v_max:
                heading = rng.uniform(0.0, 2.0 * math.pi)
            else:
                heading += params.noise_scale * math.pi * rng.uniform(-1.0, 1.0)
            states.append(nxt)
            current = nxt
        plans.append(Plan(tuple(states), (SegmentMarker(i, 0.0, 0),)))
    logger.debug(f"Generated dataset of {n} trajectories (h_train={h_train}, seed={seed})")
    return plans


def sample_task(maze: Maze, min_separation: float, seed: int,
                eps_goal: float = 0.5, horizon: int = 400) -> Task:
    """Free-cell-center start/goal pair at least min_separation apart."""
    free = maze.free_cells
    if len(free) < 2:
        raise TaskSamplingError("Maze needs at least 2 free cells to sample a task")
    centers = [maze.cell_center(r, c) for r, c in free]
    rng = np.random.default_rng(seed)
    for _ in range(MAX_TASK_ATTEMPTS):
        i, j = rng.choice(len(centers), size=2, replace=False)
        start, goal = centers[int(i)], centers[int(j)]
        if distance(start, goal) >= min_separation:
            return Task(start, goal, eps_goal, horizon)
    raise TaskSamplingError(
        f"No start/goal pair at separation >= {min_separation} after {MAX_TASK_ATTEMPTS} attempts"
    )
