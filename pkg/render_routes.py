"""
Maze routes - bundled maze listing and SVG scenes.
"""

from fastapi import APIRouter, HTTPException, Query
from fastapi.responses import Response

from maze_env import MAZES_DIR, list_bundled_mazes, load_bundled_maze
from render import render_svg

router = APIRouter()


@router.get("/api/mazes")
async def list_mazes():
    """Bundled mazes with their sizes and hashes."""
    out = []
    for name in list_bundled_mazes():
        maze = load_bundled_maze(name)
        out.append({
            "name": name,
            "width": maze.width,
            "height": maze.height,
            "free_cells": maze.free_count,
            "hash": maze.hash,
        })
    return out


@router.get("/api/mazes/{name}.svg")
async def maze_svg(name: str, cell_size: float = Query(1.0, gt=0)):
    """Render a bundled maze (walls and start/goal markers) as SVG."""
    if name not in list_bundled_mazes() or not (MAZES_DIR / f"{name}.txt").is_file():
        raise HTTPException(status_code=404, detail=f"Maze '{name}' not found")
    svg = render_svg(load_bundled_maze(name, cell_size))
    return Response(content=svg, media_type="image/svg+xml")
