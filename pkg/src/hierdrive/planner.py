"""Optimization-based local planners, one per high-level action.

Each planner builds a longitudinal and a lateral target around the current
state, spans a small lattice of quintic connections with perturbed end
states and durations, scores them with weighted jerk/time/terminal-deviation
costs, drops dynamically infeasible ones, and emits the cheapest survivor as
a time-stamped trajectory of (x, y, speed) samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import frenet
from .frenet import FrenetState, QuinticProfile, ReferencePath
from .kernels import eval_candidates


class ConfigError(ValueError):
    pass


class TargetError(ValueError):
    pass


@dataclass(frozen=True)
class PlannerWeights:
    k_j_lat: float = 0.1
    k_t_lat: float = 0.5
    k_p_lat: float = 2.0
    k_j_lon: float = 0.05
    k_t_lon: float = 0.5
    k_p_lon: float = 0.5
    k_lat: float = 1.0
    k_lon: float = 1.0

    def __post_init__(self):
        vals = [getattr(self, f.name) for f in self.__dataclass_fields__.values()]
        if any(v < 0 for v in vals):
            raise ConfigError("planner weights must be nonnegative")
        if self.k_lat + self.k_lon <= 0:
            raise ConfigError("k_lat + k_lon must be positive")


@dataclass(frozen=True)
class FollowParams:
    d0: float = 3.0   # default safety distance, m
    tau: float = 2.5  # safety time constant, s

    def __post_init__(self):
        if self.d0 <= 0 or self.tau <= 0:
            raise ConfigError("follow parameters must be positive")


@dataclass(frozen=True)
class LonTarget:
    position: float
    velocity: float
    acceleration: float
    mode: str  # stop | follow | cruise


@dataclass(frozen=True)
class LatTarget:
    offset: float = 0.0
    velocity: float = 0.0
    acceleration: float = 0.0


@dataclass(frozen=True)
class EndStateGrids:
    dd: tuple = (-0.5, 0.0, 0.5)            # lateral end-offset perturbations, m
    dv: tuple = (-2.0, -1.0, 0.0, 1.0, 2.0)  # end-speed perturbations, m/s
    ds: tuple = (-2.0, 0.0, 2.0)             # end-position perturbations (stop mode), m
    k_time: tuple = (1.5, 2.5, 3.5, 4.5)     # candidate durations, s


@dataclass(frozen=True)
class DynamicLimits:
    a_max: float = 4.0
    v_cap: float = 10.0  # 1.2 * scenario v_max by convention
    v_floor: float = -1e-9


@dataclass
class CandidateBehavior:
    lon: QuinticProfile
    lat: QuinticProfile
    duration: float
    c_lat: float
    c_lon: float
    c_tot: float
    feasible: bool = True
    index: int = 0


@dataclass
class Behavior:
    """Imagined trajectory: (K+1, 3) rows of x, y, speed at fixed spacing."""

    samples: np.ndarray
    source: int | str = -1
    fallback: bool = False
    # exact Frenet state after one execution step on this behavior's own
    # reference path; replanning from it avoids re-projection drift
    frenet_after: FrenetState | None = None
    ref: str | None = None  # reference-path tag, set by the caller

    @property
    def xy(self) -> np.ndarray:
        return self.samples[:, :2]

    @property
    def speeds(self) -> np.ndarray:
        return self.samples[:, 2]


@dataclass(frozen=True)
class PlannerConfig:
    weights: PlannerWeights = field(default_factory=PlannerWeights)
    grids: EndStateGrids = field(default_factory=EndStateGrids)
    limits: DynamicLimits = field(default_factory=DynamicLimits)
    follow: FollowParams = field(default_factory=FollowParams)
    horizon: int = 5          # K: samples beyond the current one
    dt_im: float = 0.5        # spacing of imagined samples, s
    dt_exec: float = 0.1      # execution step the world consumes per replan
    v_set: float = 8.33       # cruise set speed, m/s
    a_plan: float = 2.0       # comfortable decel used to place stop points
    stop_standoff: float = 0.5
    n_check: int = 24         # feasibility samples per candidate


@dataclass
class PlanRequest:
    """World-side inputs for one action's planner call."""

    path: ReferencePath
    start: FrenetState
    leader: FrenetState | None = None   # on this request's path
    stopline_s: float | None = None


def build_stop_target(s_stop: float, s_now: float) -> LonTarget:
    """Come to rest at a point ahead."""
    if s_stop <= s_now:
        raise TargetError(f"stop position {s_stop} not ahead of {s_now}")
    return LonTarget(position=s_stop, velocity=0.0, acceleration=0.0, mode="stop")


def build_follow_target(leader: FrenetState, params: FollowParams) -> LonTarget:
    """Track a leading vehicle at a speed-dependent standoff."""
    return LonTarget(
        position=leader.s - (params.d0 + params.tau * leader.s_d),
        velocity=leader.s_d - params.tau * leader.s_dd,
        acceleration=leader.s_dd,
        mode="follow",
    )


def build_cruise_target(v_set: float) -> LonTarget:
    """Hold a set speed; the end position is left free."""
    return LonTarget(position=np.nan, velocity=v_set, acceleration=0.0, mode="cruise")


def lateral_cost(profile: QuinticProfile, d1: float, k_time: float, w: PlannerWeights) -> float:
    return w.k_j_lat * frenet.jerk_integral(profile) + w.k_t_lat * k_time + w.k_p_lat * d1 * d1


def longitudinal_cost(
    profile: QuinticProfile, end_value: float, target_value: float, k_time: float, w: PlannerWeights
) -> float:
    """Jerk + duration + squared terminal deviation.

    The deviation pair is (end position, target position) in stop/follow mode
    and (end speed, set speed) in cruise mode.
    """
    dev = end_value - target_value
    return w.k_j_lon * frenet.jerk_integral(profile) + w.k_t_lon * k_time + w.k_p_lon * dev * dev


def generate_candidates(
    start: FrenetState,
    lon_target: LonTarget,
    lat_target: LatTarget,
    grids: EndStateGrids,
    weights: PlannerWeights,
) -> list[CandidateBehavior]:
    """Lattice of lon x lat quintic pairs around the targets.

    Longitudinal end states perturb the target position (stop mode) or the
    target speed (follow/cruise); lateral end states perturb the end offset;
    every duration in the grid contributes a full lon x lat block.
    """
    lon_grid = grids.ds if lon_target.mode == "stop" else grids.dv
    if not grids.dd or not lon_grid or not grids.k_time:
        raise ConfigError("end-state grids must be nonempty")

    out: list[CandidateBehavior] = []
    index = 0
    for T in grids.k_time:
        lat_ends = [(lat_target.offset + dd, lat_target.velocity, lat_target.acceleration) for dd in grids.dd]
        lat_profiles = [frenet.solve_quintic(start.lat(), end, T) for end in lat_ends]
        lat_costs = [
            lateral_cost(p, end[0], T, weights) for p, end in zip(lat_profiles, lat_ends)
        ]

        lon_profiles = []
        lon_costs = []
        for g in lon_grid:
            if lon_target.mode == "stop":
                end = (lon_target.position + g, lon_target.velocity, lon_target.acceleration)
                dev_pair = (end[0], lon_target.position)
            elif lon_target.mode == "follow":
                end = (lon_target.position, max(lon_target.velocity + g, 0.0), lon_target.acceleration)
                dev_pair = (end[0], lon_target.position)
            else:  # cruise: free end position at the mean-speed advance
                v_end = max(lon_target.velocity + g, 0.0)
                end = (start.s + 0.5 * (start.s_d + v_end) * T, v_end, 0.0)
                dev_pair = (v_end, lon_target.velocity)
            p = frenet.solve_quintic(start.lon(), end, T)
            lon_profiles.append(p)
            lon_costs.append(longitudinal_cost(p, dev_pair[0], dev_pair[1], T, weights))

        for lon_p, c_lon in zip(lon_profiles, lon_costs):
            for lat_p, c_lat in zip(lat_profiles, lat_costs):
                out.append(
                    CandidateBehavior(
                        lon=lon_p,
                        lat=lat_p,
                        duration=T,
                        c_lat=c_lat,
                        c_lon=c_lon,
                        c_tot=weights.k_lat * c_lat + weights.k_lon * c_lon,
                        index=index,
                    )
                )
                index += 1
    return out


def mark_feasible(candidates: list[CandidateBehavior], limits: DynamicLimits, n_check: int) -> None:
    """Dense scan for acceleration/speed violations; sets each feasible flag."""
    if not candidates:
        return
    lon_c = np.stack([c.lon.coeffs for c in candidates])
    lat_c = np.stack([c.lat.coeffs for c in candidates])
    durations = np.array([c.duration for c in candidates])
    ok = eval_candidates(lon_c, lat_c, durations, n_check, limits.a_max, limits.v_floor, limits.v_cap)
    for c, flag in zip(candidates, ok):
        c.feasible = bool(flag)


def sample_candidate(
    cand: CandidateBehavior,
    path: ReferencePath,
    horizon: int,
    dt_im: float,
    source: int,
    dt_exec: float = 0.1,
) -> Behavior:
    """Convert a Frenet candidate to (K+1) world samples.

    Past the candidate's own duration the state is extended by a
    constant-speed hold along the path at the terminal lateral offset.
    """
    T = cand.duration
    sT, vT, _, _ = frenet.eval_profile(cand.lon, T)
    dT, _, _, _ = frenet.eval_profile(cand.lat, T)
    rows = np.empty((horizon + 1, 3))
    for k in range(horizon + 1):
        t = k * dt_im
        if t <= T:
            s, sd, _, _ = frenet.eval_profile(cand.lon, t)
            d, dd_, _, _ = frenet.eval_profile(cand.lat, t)
            speed = float(np.hypot(sd, dd_))
        else:
            s = sT + vT * (t - T)
            d = dT
            speed = vT
        xy = frenet.frenet_to_cartesian_clamped(path, s, d)
        rows[k] = (xy[0], xy[1], max(speed, 0.0))
    te = min(dt_exec, T)
    s1, sd1, sdd1, _ = frenet.eval_profile(cand.lon, te)
    d1, dd1, ddd1, _ = frenet.eval_profile(cand.lat, te)
    after = FrenetState(s=s1, s_d=max(sd1, 0.0), s_dd=sdd1, d=d1, d_d=dd1, d_dd=ddd1)
    return Behavior(samples=rows, source=source, frenet_after=after)


def _const_decel_behavior(
    start: FrenetState,
    path: ReferencePath,
    decel: float,
    horizon: int,
    dt_im: float,
    dt_exec: float,
    source: str,
    fallback: bool,
) -> Behavior:
    """Constant deceleration to rest along the current lane offset."""
    v0 = max(start.s_d, 0.0)
    t_stop = v0 / decel if decel > 0 else 0.0

    def at(t):
        if t < t_stop:
            return start.s + v0 * t - 0.5 * decel * t * t, v0 - decel * t, -decel
        return start.s + 0.5 * v0 * t_stop, 0.0, 0.0

    rows = np.empty((horizon + 1, 3))
    for k in range(horizon + 1):
        s, v, _ = at(k * dt_im)
        xy = frenet.frenet_to_cartesian_clamped(path, s, start.d)
        rows[k] = (xy[0], xy[1], v)
    s1, v1, a1 = at(dt_exec)
    after = FrenetState(s=s1, s_d=v1, s_dd=a1, d=start.d, d_d=0.0, d_dd=0.0)
    return Behavior(samples=rows, source=source, fallback=fallback, frenet_after=after)


def full_brake_behavior(
    start: FrenetState,
    path: ReferencePath,
    limits: DynamicLimits,
    horizon: int,
    dt_im: float,
    dt_exec: float = 0.1,
) -> Behavior:
    """Emergency fallback: maximum constant deceleration along the lane."""
    return _const_decel_behavior(
        start, path, limits.a_max, horizon, dt_im, dt_exec, "brake", fallback=True
    )


def select_behavior(
    candidates: list[CandidateBehavior],
    limits: DynamicLimits,
    path: ReferencePath,
    start: FrenetState,
    horizon: int = 5,
    dt_im: float = 0.5,
    n_check: int = 24,
    dt_exec: float = 0.1,
) -> Behavior:
    """Cheapest feasible candidate as a sampled Behavior; brake fallback otherwise."""
    if not candidates:
        raise ConfigError("select_behavior needs at least one candidate")
    candidates = sorted(candidates, key=lambda c: c.index)
    mark_feasible(candidates, limits, n_check)
    best = None
    for c in candidates:  # ordered by index: first minimum wins ties
        if c.feasible and (best is None or c.c_tot < best.c_tot):
            best = c
    if best is None:
        return full_brake_behavior(start, path, limits, horizon, dt_im, dt_exec)
    return sample_candidate(best, path, horizon, dt_im, best.index, dt_exec)


def plan(mode: str, req: PlanRequest, cfg: PlannerConfig) -> Behavior:
    """Target construction + lattice + selection for one high-level action.

    Modes: ``keep`` follows a leader when one exists and otherwise holds the
    set speed; ``slow`` brakes to a stop point (stop line when still ahead,
    else a comfortable braking distance); ``change`` is ``keep`` computed
    against the target lane's centerline path, which the request carries.
    """
    if mode not in ("keep", "slow", "change"):
        raise ConfigError(f"unknown planner mode {mode!r}")
    start = req.start
    if mode in ("keep", "change"):
        if req.leader is not None:
            lon_t = build_follow_target(req.leader, cfg.follow)
        else:
            lon_t = build_cruise_target(cfg.v_set)
    else:
        # stop comfortably ahead, capped at the stop line while it is ahead
        s_stop = start.s + max(1.0, start.s_d**2 / (2.0 * cfg.a_plan))
        if req.stopline_s is not None:
            s_stop = min(s_stop, max(req.stopline_s, start.s + cfg.stop_standoff))
        remaining = s_stop - start.s
        if remaining < max(0.6, 0.15 * start.s_d**2):
            # close to the stop point: a fresh quintic per replan only ever
            # executes its gentle first slice and creeps forever; settle with
            # a constant brake sized to the remaining distance instead
            v0 = max(start.s_d, 0.0)
            if v0 < 0.15:  # arrived: stop outright instead of chasing the standoff
                decel = cfg.a_plan
            else:
                decel = min(v0 * v0 / (2.0 * max(remaining, 0.05)), cfg.limits.a_max)
            return _const_decel_behavior(
                start, req.path, decel, cfg.horizon, cfg.dt_im, cfg.dt_exec, "settle", fallback=False
            )
        lon_t = build_stop_target(s_stop, start.s)
    candidates = generate_candidates(start, lon_t, LatTarget(), cfg.grids, cfg.weights)
    return select_behavior(
        candidates, cfg.limits, req.path, start, cfg.horizon, cfg.dt_im, cfg.n_check, cfg.dt_exec
    )
