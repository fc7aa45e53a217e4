"""
Waypoint selection: k-means over dataset states, snapped into free space.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from maze_env import Maze, State

logger = logging.getLogger(__name__)

# Fraction of a cell kept between a snapped center and the cell border
SNAP_MARGIN = 1e-4


class KMeansError(ValueError):
    """Raised for impossible clustering requests."""


@dataclass(frozen=True)
class WaypointSet:
    centers: Tuple[State, ...]
    k: int
    inertia: float
    raw_centers: Tuple[State, ...] = ()
    inertia_trace: Tuple[float, ...] = ()
    iterations: int = 0

    def __len__(self) -> int:
        return len(self.centers)


def snap_to_free(p: Sequence[float], maze: Maze) -> State:
    """Nearest point of the nearest Free cell (p itself when already free)."""
    p = State(float(p[0]), float(p[1]))
    if maze.is_free(p):
        return p
    cs = maze.cell_size
    margin = SNAP_MARGIN * cs
    cells = np.array(maze.free_cells, dtype=float)
    lo_x, lo_y = cells[:, 1] * cs + margin, cells[:, 0] * cs + margin
    hi_x, hi_y = (cells[:, 1] + 1) * cs - margin, (cells[:, 0] + 1) * cs - margin
    qx = np.clip(p.x, lo_x, hi_x)
    qy = np.clip(p.y, lo_y, hi_y)
    best = int(np.argmin((qx - p.x) ** 2 + (qy - p.y) ** 2))
    return State(float(qx[best]), float(qy[best]))


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            remaining = [i for i in range(n) if i not in chosen]
            idx = int(remaining[int(rng.integers(len(remaining)))])
        chosen.append(idx)
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(points)), labels]


def kmeans(points: Sequence[Sequence[float]], k: int, max_iters: int = 100, seed: int = 0,
           maze: Optional[Maze] = None) -> WaypointSet:
    """Lloyd iterations from k-means++ seeding; empty clusters take the farthest point."""
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    if k < 1:
        raise KMeansError(f"k must be >= 1, got {k}")
    if len(data) < k:
        raise KMeansError(f"Need at least k={k} points, got {len(data)}")

    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(data, k, rng)
    trace: List[float] = []
    labels, d2 = _assign(data, centers)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        trace.append(float(d2.sum()))
        for j in range(k):
            members = data[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
        for j in range(k):
            if not np.any(labels == j):
                _, current = _assign(data, centers)
                far = int(np.argmax(current))
                centers[j] = data[far]
                labels[far] = j
        new_labels, d2 = _assign(data, centers)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(d2.sum())
    trace.append(inertia)

    raw = tuple(State(float(x), float(y)) for x, y in centers)
    snapped = tuple(snap_to_free(c, maze) for c in raw) if maze is not None else raw
    logger.info(f"k-means: k={k}, {len(data)} points, {iterations} iterations, inertia {inertia:.4f}")
    return WaypointSet(snapped, k, inertia, raw, tuple(trace), iterations)


def waypoints_from_dataset(plans, k: int, max_iters: int, seed: int, maze: Maze) -> WaypointSet:
    """Cluster every state of every dataset plan."""
    points = [s for plan in plans for s in plan.states]
    return kmeans(points, k, max_iters, seed, maze)


# ============== Text format ==============

def write_waypoints(centers: Sequence[Sequence[float]], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{c[0]!r},{c[1]!r}\n" for c in centers), encoding="utf-8")
    return path


def read_waypoints(path: Union[str, Path]) -> List[State]:
    centers = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x, y = line.split(",")
        centers.append(State(float(x), float(y)))
    return centers
