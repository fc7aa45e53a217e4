"""
Directed connectivity graph over origins/waypoints.

Edges carry executable plans with cost = step count. Provides Dijkstra/A*
shortest paths, plan synthesis along a path and a versioned JSON codec bound
to the maze it was built on.
"""

import heapq
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from maze_env import State, distance
from plan_core import Plan, SegmentMarker

logger = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1


class EdgeContractError(ValueError):
    """Edge plan does not start at its source vertex or end near its target."""


class JunctionGapError(ValueError):
    """Consecutive edge plans are further apart than the incoming edge tolerance."""


class GraphCodecError(ValueError):
    """Malformed or incompatible graph document."""


class MazeHashMismatchError(ValueError):
    """A graph built on one maze was used with another."""


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    plan: Plan
    tolerance: float

    @property
    def cost(self) -> int:
        return len(self.plan) - 1


@dataclass(frozen=True)
class GraphPath:
    edges: Tuple[Tuple[int, int], ...]
    cost: int

    @property
    def vertices(self) -> List[int]:
        if not self.edges:
            return []
        return [self.edges[0][0]] + [dst for _, dst in self.edges]


class ConnectivityGraph:
    """Vertices are States; at most one (the cheapest) edge per ordered pair."""

    def __init__(self, vertices: Sequence[Sequence[float]] = (), eps_stitch: float = 0.5, maze_hash: str = ""):
        if eps_stitch <= 0:
            raise ValueError(f"eps_stitch must be positive, got {eps_stitch}")
        self.vertices: List[State] = [State(*v) for v in vertices]
        self.eps_stitch = eps_stitch
        self.maze_hash = maze_hash
        self.edges: Dict[Tuple[int, int], Edge] = {}

    def __repr__(self) -> str:
        return f"ConnectivityGraph(vertices={len(self.vertices)}, edges={len(self.edges)})"

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def add_vertex(self, state: Sequence[float]) -> int:
        self.vertices.append(State(*state))
        return len(self.vertices) - 1

    def copy(self) -> "ConnectivityGraph":
        clone = ConnectivityGraph(self.vertices, self.eps_stitch, self.maze_hash)
        clone.edges = dict(self.edges)
        return clone

    def out_edges(self, vertex: int) -> List[Edge]:
        return [e for (src, _), e in sorted(self.edges.items()) if src == vertex]

    def add_edge(self, source: int, target: int, plan: Plan, tolerance: Optional[float] = None) -> bool:
        """Insert source->target; a parallel edge keeps the cheaper plan. Returns True if stored."""
        tolerance = self.eps_stitch if tolerance is None else tolerance
        n = len(self.vertices)
        if not (0 <= source < n and 0 <= target < n):
            raise EdgeContractError(f"Edge ({source}, {target}) references a missing vertex")
        if source == target:
            raise EdgeContractError(f"Self-edge on vertex {source}")
        if plan.first != self.vertices[source]:
            raise EdgeContractError(f"Edge plan starts at {plan.first}, not at vertex {source} {self.vertices[source]}")
        gap = distance(plan.last, self.vertices[target])
        if gap > tolerance:
            raise EdgeContractError(f"Edge plan ends {gap:.4f} from vertex {target} (tolerance {tolerance})")

        existing = self.edges.get((source, target))
        if existing is not None and existing.cost <= len(plan) - 1:
            return False
        self.edges[(source, target)] = Edge(source, target, plan, tolerance)
        return True

    # ============== Search ==============

    def shortest_path(self, source: int, target: int, use_astar: bool = False,
                      v_max: Optional[float] = None) -> Optional[GraphPath]:
        """Minimum-cost path by Dijkstra, or A* with a Euclidean heuristic.

        The A* heuristic scales distance by the lowest cost per unit of vertex
        distance over all edges, capped at 1 / v_max when given. Every edge
        satisfies cost >= rate * |source - target|, so the heuristic is
        consistent even though edge plans may stop short of their target.
        """
        n = len(self.vertices)
        if not (0 <= source < n and 0 <= target < n):
            raise IndexError(f"Vertices {source}, {target} not in graph of {n}")
        if source == target:
            return GraphPath((), 0)

        adjacency: Dict[int, List[Tuple[int, int]]] = {}
        for (src, dst), edge in sorted(self.edges.items()):
            adjacency.setdefault(src, []).append((dst, edge.cost))

        rate = 0.0
        if use_astar:
            rates = []
            for (src, dst), edge in self.edges.items():
                span = distance(self.vertices[src], self.vertices[dst])
                if span > 0:
                    rates.append(edge.cost / span)
            if v_max:
                rates.append(1.0 / v_max)
            rate = min(rates, default=0.0)

        def heuristic(v: int) -> float:
            return rate * distance(self.vertices[v], self.vertices[target])

        best = {source: 0}
        came_from: Dict[int, int] = {}
        frontier = [(heuristic(source), 0, source)]
        closed = set()
        while frontier:
            _, cost, current = heapq.heappop(frontier)
            if current in closed:
                continue
            if current == target:
                break
            closed.add(current)
            for nxt, step in adjacency.get(current, ()):
                new_cost = cost + step
                if nxt not in best or new_cost < best[nxt]:
                    best[nxt] = new_cost
                    came_from[nxt] = current
                    heapq.heappush(frontier, (new_cost + heuristic(nxt), new_cost, nxt))

        if target not in best:
            return None
        path = []
        current = target
        while current != source:
            prev = came_from[current]
            path.append((prev, current))
            current = prev
        path.reverse()
        return GraphPath(tuple(path), best[target])

    def synthesize_plan(self, path: GraphPath) -> Plan:
        """Concatenate edge plans along path.

        Exact junctions drop the duplicated state. Any other junction is a single
        step from the incoming terminal to the outgoing first state; no states are
        inserted, so the result is never longer than the summed edge plans.
        """
        if not path.edges:
            raise ValueError("Cannot synthesize an empty path")
        first = self.edges[path.edges[0]]
        states = list(first.plan.states)
        markers = list(first.plan.provenance)
        tolerance = first.tolerance
        for key in path.edges[1:]:
            edge = self.edges[key]
            gap = distance(states[-1], edge.plan.first)
            if gap > tolerance:
                raise JunctionGapError(f"Junction gap {gap:.4f} before edge {key} exceeds {tolerance}")
            offset = len(states)
            if gap == 0.0:
                offset -= 1
                states.extend(edge.plan.states[1:])
            else:
                states.extend(edge.plan.states)
            markers.extend(m._replace(start=m.start + offset) for m in edge.plan.provenance)
            tolerance = edge.tolerance
        return Plan(tuple(states), tuple(markers))


# ============== Codec ==============

class EdgeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: int = Field(..., ge=0)
    target: int = Field(..., ge=0)
    cost: int = Field(..., ge=0)
    tolerance: float = Field(..., gt=0)
    states: List[Tuple[float, float]] = Field(..., min_length=1)
    provenance: List[Tuple[int, float, int]] = Field(default_factory=list)


class GraphDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    maze_hash: str
    eps_stitch: float = Field(..., gt=0)
    vertices: List[Tuple[float, float]]
    edges: List[EdgeDocument]


def encode_graph(graph: ConnectivityGraph) -> bytes:
    doc = {
        "version": GRAPH_FORMAT_VERSION,
        "maze_hash": graph.maze_hash,
        "eps_stitch": graph.eps_stitch,
        "vertices": [[v.x, v.y] for v in graph.vertices],
        "edges": [
            {
                "source": e.source,
                "target": e.target,
                "cost": e.cost,
                "tolerance": e.tolerance,
                "states": [[s.x, s.y] for s in e.plan.states],
                "provenance": [list(m) for m in e.plan.provenance],
            }
            for _, e in sorted(graph.edges.items())
        ],
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def decode_graph(payload: Union[bytes, str], expected_maze_hash: Optional[str] = None) -> ConnectivityGraph:
    try:
        raw = json.loads(payload)
    except json.JSONDecodeError as e:
        raise GraphCodecError(f"Graph document is not JSON: {e}") from e
    if not isinstance(raw, dict):
        raise GraphCodecError("Graph document must be a JSON object")
    if raw.get("version") != GRAPH_FORMAT_VERSION:
        raise GraphCodecError(f"Unsupported graph format version {raw.get('version')!r} (expected {GRAPH_FORMAT_VERSION})")
    try:
        doc = GraphDocument.model_validate(raw)
    except ValidationError as e:
        raise GraphCodecError(f"Malformed graph document: {e}") from e
    if expected_maze_hash is not None and doc.maze_hash != expected_maze_hash:
        raise MazeHashMismatchError(f"Graph was built for maze {doc.maze_hash[:12]}, not {expected_maze_hash[:12]}")

    graph = ConnectivityGraph(doc.vertices, doc.eps_stitch, doc.maze_hash)
    for e in doc.edges:
        plan = Plan(tuple(State(*s) for s in e.states), tuple(SegmentMarker(*m) for m in e.provenance))
        if plan.steps != e.cost:
            raise GraphCodecError(f"Edge ({e.source}, {e.target}) cost {e.cost} != plan steps {plan.steps}")
        try:
            graph.add_edge(e.source, e.target, plan, e.tolerance)
        except EdgeContractError as err:
            raise GraphCodecError(f"Invalid edge in document: {err}") from err
    return graph


def save_graph(graph: ConnectivityGraph, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_graph(graph))
    logger.info(f"Saved graph ({len(graph.vertices)} vertices, {graph.edge_count} edges) to {path}")
    return path


def load_graph(path: Union[str, Path], expected_maze_hash: Optional[str] = None) -> ConnectivityGraph:
    return decode_graph(Path(path).read_bytes(), expected_maze_hash)
