"""
SVG scenes: walls, plan segments (accepted solid, discarded gray), tree
growth and start/goal/waypoint markers.
"""

import logging
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Union

from jinja2 import Environment, FileSystemLoader, select_autoescape

from maze_env import Maze, State
from plan_core import Plan
from search_tree import SearchTree, parse_dump

logger = logging.getLogger(__name__)

TEMPLATES_DIR = Path(__file__).parent / "templates"
PIXELS_PER_CELL = 40

STYLES = {
    "accepted": ("#1f77b4", 3.0, 1.0),
    "edge": ("#2ca02c", 2.0, 0.8),
    "discarded": ("#9a9a9a", 1.0, 0.6),
}
MARKER_COLORS = {"start": "#d62728", "goal": "#ff7f0e", "waypoint": "#9467bd"}

_env = Environment(
    loader=FileSystemLoader(str(TEMPLATES_DIR)),
    autoescape=select_autoescape(default=True, default_for_string=True),
    trim_blocks=True,
    lstrip_blocks=True,
)


class TaggedPlan(NamedTuple):
    plan: Plan
    tag: str = "accepted"


def tree_plans(tree: Union[SearchTree, str]) -> List[TaggedPlan]:
    """Each non-root node's newest segment as a discarded plan; tree may be a dump text."""
    segments = [n.segment for n in parse_dump(tree if isinstance(tree, str) else tree.dump()) if n.parent is not None]
    return [TaggedPlan(Plan(states), "discarded") for states in segments if len(states) > 1]


def render_svg(maze: Maze, plans: Sequence[Union[TaggedPlan, Plan]] = (),
               out_path: Optional[Union[str, Path]] = None, start: Optional[State] = None,
               goal: Optional[State] = None, waypoints: Iterable[State] = (), title: str = "",
               trees: Sequence[Union[SearchTree, str]] = ()) -> str:
    """Render the scene; one polyline per plan segment. Writes out_path when given.

    trees (live trees or dump texts) add their branches as discarded plans.
    """
    plans = list(plans)
    for tree in trees:
        plans += tree_plans(tree)
    scale = PIXELS_PER_CELL / maze.cell_size

    def px(v: float) -> str:
        return f"{v * scale:.2f}"

    walls = [
        {"x": c * PIXELS_PER_CELL, "y": r * PIXELS_PER_CELL}
        for r in range(maze.height) for c in range(maze.width) if maze.walls[r, c]
    ]

    polylines = []
    tagged = [p if isinstance(p, TaggedPlan) else TaggedPlan(p) for p in plans]
    # Discarded plans underneath
    for item in sorted(tagged, key=lambda t: t.tag != "discarded"):
        color, width, opacity = STYLES.get(item.tag, STYLES["accepted"])
        for marker, states in item.plan.segments():
            polylines.append({
                "tag": item.tag,
                "segment": marker.segment_id if marker else "",
                "points": " ".join(f"{px(s.x)},{px(s.y)}" for s in states),
                "color": color,
                "width": width,
                "opacity": opacity,
            })

    markers = [{"kind": "waypoint", "x": px(w[0]), "y": px(w[1]), "r": 4, "color": MARKER_COLORS["waypoint"]}
               for w in waypoints]
    start = start or maze.start_marker
    goal = goal or maze.goal_marker
    for kind, point in (("start", start), ("goal", goal)):
        if point is not None:
            markers.append({"kind": kind, "x": px(point[0]), "y": px(point[1]), "r": 6, "color": MARKER_COLORS[kind]})

    svg = _env.get_template("scene.svg.j2").render(
        width=maze.width * PIXELS_PER_CELL,
        height=maze.height * PIXELS_PER_CELL,
        cell=PIXELS_PER_CELL,
        title=title or maze.name,
        walls=walls,
        polylines=polylines,
        markers=markers,
    )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(svg, encoding="utf-8")
        logger.info(f"Wrote {out_path} ({len(walls)} walls, {len(polylines)} polylines)")
    return svg
