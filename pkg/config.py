"""
Run configuration loading.

Config files are flat key=value documents (dotenv syntax). Dotted keys map
onto the nested RunConfig model, e.g. ``oc.budget = 50``; list values are
comma separated. Command-line overrides use the same keys: ``--oc.budget 50``.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Union

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from maze_env import list_bundled_mazes
from schemas import MAZE_PRESETS, RunConfig

# Load .env file
load_dotenv()

logger = logging.getLogger(__name__)

WORKERS_ENV = "PLANSTITCH_WORKERS"
LOG_LEVEL_ENV = "PLANSTITCH_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ConfigError(ValueError):
    """Invalid, inconsistent or unreadable run configuration."""


def setup_logging(level: Optional[str] = None) -> None:
    level = (level or os.environ.get(LOG_LEVEL_ENV, "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def env_workers(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return default
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {workers}")
    return workers


def parse_overrides(args: Iterable[str]) -> Dict[str, str]:
    """``--a.b value`` and ``--a.b=value`` pairs into a flat dict."""
    out: Dict[str, str] = {}
    args = list(args)
    i = 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--") or len(arg) == 2:
            raise ConfigError(f"Unexpected argument {arg!r}; overrides look like --oc.budget 50")
        key = arg[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(args):
                raise ConfigError(f"Override {arg} has no value")
            i += 1
            value = args[i]
        out[key.replace("-", "_")] = value
        i += 1
    return out


def nest(flat: Mapping[str, Optional[str]]) -> dict:
    """Dotted keys into nested dicts; empty values mean "unset"."""
    nested: dict = {}
    for key, value in flat.items():
        if value is None:
            raise ConfigError(f"Key {key!r} has no value")
        value = value.strip()
        if value == "":
            continue
        parts = key.strip().split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Key {key!r} conflicts with scalar key {part!r}")
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"Key {key!r} conflicts with nested keys")
        node[parts[-1]] = value
    return nested


def apply_preset(data: dict) -> dict:
    """Fill per-maze defaults for keys the user did not set."""
    preset = MAZE_PRESETS.get(Path(str(data.get("maze", "medium"))).stem)
    if preset is None:
        return data
    data.setdefault("waypoints", {}).setdefault("k", preset.waypoint_k)
    data.setdefault("oc", {}).setdefault("guidance_levels", list(preset.guidance_levels))
    pc_build = data.setdefault("pc_build", {})
    pc_build.setdefault("pair_budget", preset.pair_budget)
    pc_build.setdefault("pair_max_depth", preset.pair_max_depth)
    return data


def check_references(cfg: RunConfig) -> None:
    if not Path(cfg.maze).is_file() and cfg.maze not in list_bundled_mazes():
        raise ConfigError(f"Maze {cfg.maze!r} is neither a file nor a bundled maze {list_bundled_mazes()}")
    if cfg.waypoints.path and not Path(cfg.waypoints.path).is_file():
        raise ConfigError(f"Waypoint file {cfg.waypoints.path} does not exist")


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Union[Mapping[str, str], List[str]]] = None) -> RunConfig:
    flat: Dict[str, Optional[str]] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"Config file {path} does not exist")
        flat.update(dotenv_values(path))
    if overrides:
        flat.update(parse_overrides(overrides) if isinstance(overrides, list) else overrides)

    data = apply_preset(nest(flat))
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid run configuration:\n{e}") from e
    check_references(cfg)
    logger.debug(f"Loaded run config '{cfg.name}' ({cfg.composer} on {cfg.maze})")
    return cfg
