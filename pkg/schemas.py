"""
Pydantic schemas for configuration, run records and API responses.
"""

import math
from datetime import datetime
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_GUIDANCE_LEVELS = [0.0, 0.1, 0.5, 1.0, 2.0]


def _split_list(value):
    """Accept "0,1,2" from flat config files as well as real lists."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _check_levels(levels: List[float]) -> List[float]:
    if not levels:
        raise ValueError("guidance levels must be non-empty")
    if any(g < 0 for g in levels):
        raise ValueError("guidance levels must be >= 0")
    return levels


# ============== Kinematics & Proposer ==============

class KinematicParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    v_max: float = Field(default=0.5, gt=0, description="World units per step")
    noise_scale: float = Field(default=0.5, ge=0, le=1, description="Heading noise of dataset random walks")


class ProposerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    h_plan: int = Field(default=40, ge=1, description="Per-plan horizon in steps")
    n_candidates: int = Field(default=50, ge=1, description="Best-of-N candidate count")
    jump_factor: int = Field(default=10, ge=1, description="Steps per coarse fast-completion step (C)")
    no_progress_rounds: int = Field(default=3, ge=1, description="Fast completion stops after this many rounds without progress")


# ============== Composers ==============

class OcConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    budget: int = Field(default=200, ge=1, description="Max expansions B")
    h_plan: int = Field(default=40, ge=1)
    L: int = Field(default=400, ge=1, description="Full-plan horizon")
    guidance_levels: List[float] = Field(default_factory=lambda: list(DEFAULT_GUIDANCE_LEVELS))
    c_uct: float = Field(default=math.sqrt(2.0), ge=0)
    branching: int = Field(default=2, ge=1, description="Children per node F")
    max_depth: int = Field(default=10, ge=1, description="Max stitched segments M_max")
    fast_replanning: bool = True
    promote_completions: bool = Field(default=False, description="Promote a goal-reaching fast completion to a real child")

    split_levels = field_validator("guidance_levels", mode="before")(_split_list)

    @field_validator("guidance_levels")
    @classmethod
    def check_levels(cls, v):
        return _check_levels(v)

    @model_validator(mode="after")
    def check_horizons(self):
        if self.L < self.h_plan:
            raise ValueError(f"L ({self.L}) must be >= h_plan ({self.h_plan})")
        return self


class DcConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    eps_connect: Optional[float] = Field(default=None, gt=0, description="Connection threshold; None means 0.5*cell_size")
    max_rounds: int = Field(default=100, ge=1)
    whole_plan_scan: bool = Field(default=False, description="Scan the whole stitched plan instead of the newest segment")
    snapshot_dir: Optional[str] = None


class PcBuildConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    pair_budget: int = Field(default=20, ge=1)
    pair_max_depth: int = Field(default=2, ge=1)
    eps_stitch: Optional[float] = Field(default=None, gt=0, description="None means 0.5*cell_size")
    retries: int = Field(default=1, ge=0)
    n_candidates: Optional[int] = Field(default=None, ge=1)


class PcInferConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    local_horizon: Optional[int] = Field(default=None, ge=1, description="L'; None means 2*h_plan")
    local_budget: int = Field(default=20, ge=1, description="Expansion budget of one local connection")
    max_links: int = Field(default=2, ge=1, description="Successful start and goal connections kept per side")
    query_budget: Optional[int] = Field(default=None, ge=1,
                                        description="Local expansions per query; None means max(local_budget, OC budget / 5)")
    L: int = Field(default=400, ge=1)

    @model_validator(mode="after")
    def check_local_horizon(self):
        if self.local_horizon is not None and self.local_horizon > self.L:
            raise ValueError(f"local_horizon ({self.local_horizon}) must be <= L ({self.L})")
        return self


# ============== Bench ==============

class AblationToggles(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fast_replanning: bool = True
    fixed_guidance_level: Optional[float] = Field(default=None, ge=0)
    eps: Optional[float] = Field(default=None, gt=0, description="Overrides the connection/stitch threshold")
    cache: bool = False


class TaskSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(default=5, ge=1)
    seed: int = 1000
    min_separation: float = Field(default=3.0, ge=0)
    eps_goal: float = Field(default=0.5, gt=0)
    explicit: Optional[List[float]] = Field(default=None, description="Flattened x0,y0,x1,y1 quadruples")

    split_explicit = field_validator("explicit", mode="before")(_split_list)

    @field_validator("explicit")
    @classmethod
    def check_quadruples(cls, v):
        if v is not None and (not v or len(v) % 4):
            raise ValueError("explicit tasks need x0,y0,x1,y1 quadruples")
        return v


class DatasetSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(default=200, ge=0)
    h_train: int = Field(default=40, ge=1)
    seed: int = 7


class WaypointSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: int = Field(default=6, ge=1)
    max_iters: int = Field(default=100, ge=1)
    seed: int = 11
    path: Optional[str] = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "bench"
    maze: str = "medium"
    cell_size: float = Field(default=1.0, gt=0)
    composer: Literal["oc", "dc", "pc"] = "oc"
    seeds: List[int] = Field(default_factory=lambda: [0])
    graph_path: Optional[str] = None
    out_dir: str = "runs"
    workers: Optional[int] = Field(default=None, ge=1)
    dump_trees: bool = Field(default=False, description="Write each run's search trees and plan under <out_dir>/<name>/trees")

    kinematics: KinematicParams = Field(default_factory=KinematicParams)
    proposer: ProposerConfig = Field(default_factory=ProposerConfig)
    oc: OcConfig = Field(default_factory=OcConfig)
    dc: DcConfig = Field(default_factory=DcConfig)
    pc_build: PcBuildConfig = Field(default_factory=PcBuildConfig)
    pc_infer: PcInferConfig = Field(default_factory=PcInferConfig)
    ablation: AblationToggles = Field(default_factory=AblationToggles)
    tasks: TaskSettings = Field(default_factory=TaskSettings)
    dataset: DatasetSettings = Field(default_factory=DatasetSettings)
    waypoints: WaypointSettings = Field(default_factory=WaypointSettings)

    split_seeds = field_validator("seeds", mode="before")(_split_list)

    @field_validator("seeds")
    @classmethod
    def check_seeds(cls, v):
        if not v:
            raise ValueError("seeds must be non-empty")
        return v

    @model_validator(mode="after")
    def check_consistency(self):
        if self.ablation.eps is not None and self.composer == "oc":
            raise ValueError("ablation.eps applies to dc/pc composers only")
        if self.ablation.cache and self.composer == "dc":
            raise ValueError("ablation.cache applies to oc/pc composers only")
        if self.pc_infer.L != self.oc.L:
            self.pc_infer = PcInferConfig(**{**self.pc_infer.model_dump(), "L": self.oc.L})
        return self

    def guidance_levels(self) -> List[float]:
        if self.ablation.fixed_guidance_level is not None:
            return [self.ablation.fixed_guidance_level]
        return list(self.oc.guidance_levels)

    def effective_oc(self) -> OcConfig:
        return self.oc.model_copy(update={
            "guidance_levels": self.guidance_levels(),
            "fast_replanning": self.oc.fast_replanning and self.ablation.fast_replanning,
        })


class MazePreset(BaseModel):
    waypoint_k: int
    guidance_levels: List[float]
    pair_budget: int
    pair_max_depth: int


MAZE_PRESETS: Dict[str, MazePreset] = {
    "medium": MazePreset(waypoint_k=6, guidance_levels=DEFAULT_GUIDANCE_LEVELS, pair_budget=20, pair_max_depth=2),
    "large": MazePreset(waypoint_k=12, guidance_levels=DEFAULT_GUIDANCE_LEVELS, pair_budget=20, pair_max_depth=2),
    "giant": MazePreset(waypoint_k=24, guidance_levels=[0.5, 1.0, 2.0, 3.0, 4.0], pair_budget=10, pair_max_depth=1),
}


# ============== Records ==============

class RunRecord(BaseModel):
    """One machine-readable outcome row."""
    model_config = ConfigDict(extra="forbid")

    cell: str = "default"
    task_id: int
    seed: int
    composer: str
    success: bool
    wall_time: float = Field(..., ge=0, description="Seconds spent inside the composer call")
    plan_steps: Optional[int] = None
    expansions: int = 0
    graph_edges: Optional[int] = None
    cache_hit: Optional[bool] = None
    error: Optional[str] = None

    @model_validator(mode="after")
    def check_steps_iff_success(self):
        if self.success != (self.plan_steps is not None):
            raise ValueError("plan_steps must be present iff success")
        return self

    def deterministic_view(self) -> dict:
        return self.model_dump(exclude={"wall_time"})


class CellSummary(BaseModel):
    cell: str
    composer: str
    runs: int
    success_mean: float
    success_std: float
    time_mean: float
    time_std: float
    length_mean: Optional[float] = None
    length_std: Optional[float] = None
    expansions_mean: float


class BenchSummary(BaseModel):
    suite: str
    cells: List[CellSummary]
    extras: Dict[str, float] = Field(default_factory=dict)


# ============== API ==============

class BenchResponse(BaseModel):
    id: int
    name: str
    suite: str
    composer: str
    maze: str
    status: str
    created_at: datetime
    finished_at: Optional[datetime]

    class Config:
        from_attributes = True


class BenchSubmit(BaseModel):
    suite: str = Field(default="grid", description="grid, guidance, fast-replanning, eps, cache or amortization")
    config: RunConfig = Field(default_factory=RunConfig)
