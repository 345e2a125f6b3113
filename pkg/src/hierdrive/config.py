"""Scenario definitions: task geometry, spawning, rewards, planner settings.

Scenarios are YAML files (bundled under ``hierdrive/scenarios`` or given by
path); every key has a default here, so files only state what they change.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .planner import DynamicLimits, EndStateGrids, FollowParams, PlannerConfig, PlannerWeights

TASKS = ("intersection3", "intersection4", "intersection5", "roundabout", "lanechange")


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str = "custom"
    task: str = "intersection4"

    # episode clocking
    episode_t: int = 600          # low-level steps per episode
    high_level_h: int = 30        # low-level steps per high-level action
    dt_sim: float = 0.1
    dt_im: float = 0.5
    horizon_k: int = 5            # imagined samples beyond the current one
    m_detected: int = 5

    # speeds and rewards
    v_max: float = 8.33
    v_des: float = 6.94
    lambda_v: float = 1.0
    lambda_c: float = 2.0
    lambda_s: float = 1.0
    sigma_xy: float = 0.0

    # safety
    safety_d0: float = 3.0
    follow_tau: float = 2.5
    follow_margin: float = 1.0    # extra bumper slack on top of safety_d0

    # spawning
    spawn_count: int = 7
    spawn_radius: float = 70.0
    spawn_speed_kmh: tuple = (0.0, 0.0)
    desired_kmh: tuple = (15.0, 30.0)

    # road geometry
    approach: float = 90.0
    junction_radius: float = 12.0
    ring_radius: float = 14.0
    lane_gap: float = 6.0
    road_length: float = 450.0
    road_back: float = 150.0
    goal_dist: float = 30.0

    # ego
    ego_in: int = 0
    ego_out: int = 2
    ego_start_dist: float = 45.0

    # scripted-driver model; jam distance sits above safety_d0 so queued
    # followers do not trip the ego's safe-distance bubble
    idm_headway: float = 1.5
    idm_accel: float = 2.0
    idm_decel: float = 2.0
    idm_jam: float = 4.5
    gap_accept_time: float = 2.0
    yield_prob: float = 0.8
    yield_wall_margin: float = 4.0

    # planner
    planner_v_set: float = 8.33
    planner_a_max: float = 4.0
    planner_a_plan: float = 2.0
    grid_dd: tuple = (-0.5, 0.0, 0.5)
    grid_dv: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)
    grid_ds: tuple = (-2.0, 0.0, 2.0)
    grid_k_time: tuple = (1.5, 2.5, 3.5, 4.5)
    weights: dict = field(default_factory=dict)

    # trainer overrides applied on top of TrainerConfig defaults
    trainer: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ScenarioError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.episode_t % self.high_level_h != 0:
            raise ScenarioError("episode_t must be a multiple of high_level_h")
        if self.spawn_count < 0 or self.v_max <= 0:
            raise ScenarioError("spawn_count must be >= 0 and v_max > 0")

    @property
    def n_actions(self) -> int:
        return 3 if self.task == "lanechange" else 2

    @property
    def v_cap(self) -> float:
        return 1.2 * self.v_max

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(
            weights=PlannerWeights(**self.weights),
            grids=EndStateGrids(
                dd=tuple(self.grid_dd),
                dv=tuple(self.grid_dv),
                ds=tuple(self.grid_ds),
                k_time=tuple(self.grid_k_time),
            ),
            limits=DynamicLimits(a_max=self.planner_a_max, v_cap=self.v_cap),
            follow=FollowParams(
                d0=self.safety_d0 + 4.5 + self.follow_margin, tau=self.follow_tau
            ),
            horizon=self.horizon_k,
            dt_im=self.dt_im,
            dt_exec=self.dt_sim,
            v_set=self.planner_v_set,
            a_plan=self.planner_a_plan,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def scenario_from_dict(data: dict, name: str = "custom") -> Scenario:
    known = {f.name for f in fields(Scenario)}
    unknown = set(data) - known
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("spawn_speed_kmh", "desired_kmh", "grid_dd", "grid_dv", "grid_ds", "grid_k_time"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    kwargs.setdefault("name", name)
    return Scenario(**kwargs)


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Bundled scenario name (e.g. ``intersection4``) or a YAML file path."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") or p.exists():
        text = p.read_text()
        name = p.stem
    else:
        ref = importlib.resources.files("hierdrive") / "scenarios" / f"{name_or_path}.yaml"
        if not ref.is_file():
            raise ScenarioError(f"no bundled scenario named {name_or_path!r}")
        text = ref.read_text()
        name = str(name_or_path)
    data = yaml.safe_load(text) or {}
    return scenario_from_dict(data, name=name)
