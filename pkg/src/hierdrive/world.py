"""2D kinematic traffic world: ego execution, scripted drivers, rewards.

The ego vehicle follows trajectories from the local planners exactly
(feasibility is enforced at planning time, so tracking error is zero by
construction).  Scripted vehicles run an intelligent-driver-model
car-follower along fixed routes plus a stochastic gap-acceptance rule at
junction conflict zones; the rule is deliberately imperfect so that
vehicle-vehicle crashes occur and can block the ego's route.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import planner as pl
from . import roads
from .config import Scenario, ScenarioError
from .frenet import FrenetState, cartesian_to_frenet, frenet_to_cartesian_clamped
from .kernels import polyline_project, rect_gap

VEH_LENGTH = 4.5
VEH_WIDTH = 2.0
LEADER_LOOKAHEAD = 70.0
LEADER_CORRIDOR = 1.7
ZONE_LOOKAHEAD = 25.0
BLOCK_CORRIDOR = 2.5


@dataclass
class VehicleState:
    vid: int
    route: str
    s: float
    speed: float
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    length: float = VEH_LENGTH
    width: float = VEH_WIDTH
    v_desired: float = 8.33
    crashed: bool = False
    active: bool = True
    yield_state: str | None = None  # None | "yield" | "proceed"


@dataclass
class StepOutcome:
    reward: float
    collided: bool = False
    safe_distance_violated: bool = False
    reached_goal: bool = False
    timeout: bool = False
    blocked: bool = False
    terminal: bool = False
    cause: str | None = None  # collision | goal | timeout (primary, at most one)


@dataclass
class HighLevelState:
    ego_behaviors: list        # n Behavior
    other_behaviors: list      # m Behavior
    ego_xy: np.ndarray
    ego_heading: float

    def ego_samples(self) -> np.ndarray:
        return np.stack([b.xy for b in self.ego_behaviors])

    def other_samples(self) -> np.ndarray:
        return np.stack([b.xy for b in self.other_behaviors])


def reward_step(scenario: Scenario, speed: float, unsafe: bool, reached_goal: bool) -> float:
    """Per-step reward; the survival penalty is waived only on the goal step."""
    if scenario.task == "lanechange":
        base = scenario.lambda_v * (speed - scenario.v_des) / scenario.v_max
    else:
        base = scenario.lambda_v * speed / scenario.v_max
    r = base
    if unsafe:
        r -= scenario.lambda_c
    if not reached_goal:
        r -= scenario.lambda_s
    return r


def _rect_gap_pair(a: VehicleState, b: VehicleState) -> float:
    reach = 0.5 * (np.hypot(a.length, a.width) + np.hypot(b.length, b.width))
    if np.hypot(a.x - b.x, a.y - b.y) > reach + 4.0:
        return np.inf
    return rect_gap(a.x, a.y, a.heading, a.length, a.width, b.x, b.y, b.heading, b.length, b.width)


class TrafficWorld:
    """One episode-stepped world instance; single-threaded."""

    def __init__(self, scenario: Scenario, seed: int):
        self.sc = scenario
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.net = self._build_network()
        self.pcfg = scenario.planner_config()
        self.route_names = sorted(self.net.routes)
        self._reset_episode_vars()

    # ------------------------------------------------------------------
    # construction / reset
    # ------------------------------------------------------------------

    def _build_network(self) -> roads.RoadNetwork:
        sc = self.sc
        if sc.task.startswith("intersection"):
            legs = int(sc.task[-1])
            return roads.build_intersection(
                legs, approach=sc.approach, junction_radius=sc.junction_radius, goal_dist=sc.goal_dist
            )
        if sc.task == "roundabout":
            return roads.build_roundabout(
                ring_radius=sc.ring_radius, approach=sc.approach, goal_dist=sc.goal_dist
            )
        return roads.build_two_lane_road(
            length=sc.road_length, back=sc.road_back, lane_gap=sc.lane_gap
        )

    def _reset_episode_vars(self):
        self.vehicles: list[VehicleState] = []
        self.step_count = 0
        self.done = False
        self.cause: str | None = None
        self.ego_x = 0.0
        self.ego_y = 0.0
        self.ego_heading = 0.0
        self.ego_speed = 0.0
        self.ego_accel = 0.0
        self.ego_route = ""
        self._frenet_cache: dict[str, FrenetState] = {}
        self._proj_hints: dict = {}

    def reset(self) -> HighLevelState:
        self._reset_episode_vars()
        sc = self.sc
        if sc.task == "lanechange":
            self._reset_lanechange()
        else:
            self._reset_junction()
        return self.build_state()

    def _reset_junction(self):
        sc = self.sc
        self.ego_route = f"in{sc.ego_in}_out{sc.ego_out}"
        if self.ego_route not in self.net.routes:
            raise ScenarioError(f"ego route {self.ego_route} not in network")
        route = self.net.route(self.ego_route)
        s0 = max(sc.approach - sc.ego_start_dist, 1.0)
        self._place_ego(route, s0, speed=0.0)
        exclusion = (sc.junction_radius if sc.task.startswith("intersection") else sc.ring_radius + 10.0) + 12.0
        self._spawn_scripted(
            count=sc.spawn_count,
            accept=lambda x, y: exclusion < np.hypot(x, y) < sc.spawn_radius,
            speed_range=tuple(v / 3.6 for v in sc.spawn_speed_kmh),
        )

    def _reset_lanechange(self):
        sc = self.sc
        self.ego_route = "lane0"
        route = self.net.route(self.ego_route)
        lo, hi = (v / 3.6 for v in sc.spawn_speed_kmh)
        ego_speed = self.rng.uniform(lo, hi) if hi > 0 else 0.0
        self._place_ego(route, sc.road_back, speed=ego_speed)
        self._spawn_scripted(
            count=sc.spawn_count,
            accept=lambda x, y: abs(x - self.ego_x) < sc.spawn_radius,
            speed_range=(lo, hi),
        )

    def _place_ego(self, route: roads.Route, s0: float, speed: float):
        xy = frenet_to_cartesian_clamped(route.path, s0, 0.0)
        self.ego_x, self.ego_y = float(xy[0]), float(xy[1])
        self.ego_heading = route.path.heading(s0)
        self.ego_speed = speed
        self._frenet_cache[route.name] = FrenetState(s=s0, s_d=speed, s_dd=0.0, d=0.0, d_d=0.0, d_dd=0.0)

    def _spawn_scripted(self, count: int, accept, speed_range):
        sc = self.sc
        lo_d, hi_d = (v / 3.6 for v in sc.desired_kmh)
        for vid in range(count):
            placed = False
            for _ in range(400):
                route_name = self.route_names[int(self.rng.integers(len(self.route_names)))]
                route = self.net.route(route_name)
                s = float(self.rng.uniform(2.0, route.path.length - 8.0))
                xy = frenet_to_cartesian_clamped(route.path, s, 0.0)
                if not accept(xy[0], xy[1]):
                    continue
                v = VehicleState(
                    vid=vid,
                    route=route_name,
                    s=s,
                    speed=float(self.rng.uniform(*speed_range)) if speed_range[1] > 0 else 0.0,
                    x=float(xy[0]),
                    y=float(xy[1]),
                    heading=route.path.heading(s),
                    v_desired=float(self.rng.uniform(lo_d, hi_d)),
                )
                min_gap = max(2.5, 0.6 * v.speed)
                if self._ego_gap(v) < min_gap + 2.0:
                    continue
                if any(_rect_gap_pair(v, u) < min_gap for u in self.vehicles):
                    continue
                self.vehicles.append(v)
                placed = True
                break
            if not placed:
                raise ScenarioError(f"could not place vehicle {vid} collision-free")

    def _ego_gap(self, v: VehicleState) -> float:
        ego = VehicleState(vid=-1, route="", s=0, speed=0, x=self.ego_x, y=self.ego_y, heading=self.ego_heading)
        return _rect_gap_pair(ego, v)

    # ------------------------------------------------------------------
    # ego state bookkeeping
    # ------------------------------------------------------------------

    def current_lane(self) -> str:
        """Nearest lane (lane-change task only)."""
        best, best_d = self.net.lane_names[0], np.inf
        for name in self.net.lane_names:
            _, d = self._project(name, self.ego_x, self.ego_y, key=("ego", name))
            if abs(d) < best_d:
                best, best_d = name, abs(d)
        return best

    def action_route(self, z: int) -> tuple[str, str, float | None]:
        """Map a high-level action to (planner mode, route name, stop line)."""
        sc = self.sc
        if sc.task == "lanechange":
            if z == 0:
                return "change", "lane1", None
            if z == 1:
                return "keep", self.current_lane(), None
            if z == 2:
                return "slow", self.current_lane(), None
        else:
            route = self.net.route(self.ego_route)
            if z == 0:
                return "keep", self.ego_route, None
            if z == 1:
                return "slow", self.ego_route, route.stopline_s
        raise pl.ConfigError(f"action {z} invalid for task {sc.task}")

    def _project(self, route_name: str, x: float, y: float, key=None):
        path = self.net.route(route_name).path
        hint = self._proj_hints.get(key) if key is not None else None
        if hint is not None:
            lo = path.segment_index(max(hint - 12.0, 0.0))
            hi = path.segment_index(min(hint + 12.0, path.length)) + 1
            s, d, dist, idx = polyline_project(x, y, path.pts, path.cum_s, lo, hi)
            if (idx > lo or lo == 0) and (idx < hi - 1 or hi == len(path.seg_len)):
                if key is not None:
                    self._proj_hints[key] = s
                return float(s), float(d)
        s, d, dist, _ = polyline_project(x, y, path.pts, path.cum_s, 0, len(path.seg_len))
        if key is not None:
            self._proj_hints[key] = s
        return float(s), float(d)

    def ego_frenet(self, route_name: str) -> FrenetState:
        cached = self._frenet_cache.get(route_name)
        if cached is not None:
            return cached
        path = self.net.route(route_name).path
        s, d = self._project(route_name, self.ego_x, self.ego_y, key=("ego", route_name))
        rel = self.ego_heading - path.heading(s)
        return FrenetState(
            s=s,
            s_d=max(self.ego_speed * np.cos(rel), 0.0),
            s_dd=self.ego_accel,
            d=d,
            d_d=self.ego_speed * np.sin(rel),
            d_dd=0.0,
        )

    def _find_leader(self, route_name: str, s_self: float) -> FrenetState | None:
        """Nearest vehicle ahead in this route's corridor, as a Frenet state."""
        path = self.net.route(route_name).path
        best = None
        for v in self.vehicles:
            if not v.active:
                continue
            if np.hypot(v.x - self.ego_x, v.y - self.ego_y) > LEADER_LOOKAHEAD + 10:
                continue
            if v.route == route_name:
                s_v, d_v = v.s, 0.0
            else:
                s_v, d_v = self._project(route_name, v.x, v.y, key=(route_name, v.vid))
            if abs(d_v) > LEADER_CORRIDOR:
                continue
            ds = s_v - s_self
            if 0.0 < ds < LEADER_LOOKAHEAD and (best is None or s_v < best.s):
                rel = v.heading - path.heading(s_v)
                best = FrenetState(
                    s=s_v, s_d=max(v.speed * np.cos(rel), 0.0), s_dd=0.0, d=d_v, d_d=0.0, d_dd=0.0
                )
        return best

    # ------------------------------------------------------------------
    # planning and perception
    # ------------------------------------------------------------------

    def plan_action(self, z: int) -> pl.Behavior:
        mode, route_name, stopline = self.action_route(z)
        route = self.net.route(route_name)
        start = self.ego_frenet(route_name)
        leader = self._find_leader(route_name, start.s) if mode in ("keep", "change") else None
        req = pl.PlanRequest(path=route.path, start=start, leader=leader, stopline_s=stopline)
        behavior = pl.plan(mode, req, self.pcfg)
        behavior.ref = route_name
        return behavior

    def perceive(self) -> list[pl.Behavior]:
        """Constant-speed route extrapolations of the m nearest vehicles."""
        sc = self.sc
        kp1 = sc.horizon_k + 1
        order = sorted(
            (v for v in self.vehicles if v.active),
            key=lambda v: (np.hypot(v.x - self.ego_x, v.y - self.ego_y), v.vid),
        )[: sc.m_detected]
        out = []
        for v in order:
            path = self.net.route(v.route).path
            rows = np.empty((kp1, 3))
            for k in range(kp1):
                s_k = v.s + v.speed * k * sc.dt_im
                xy = frenet_to_cartesian_clamped(path, s_k, 0.0)
                rows[k] = (xy[0], xy[1], v.speed)
            out.append(pl.Behavior(samples=rows, source=v.vid))
        heading_unit = np.array([np.cos(self.ego_heading), np.sin(self.ego_heading)])
        far = np.array([self.ego_x, self.ego_y]) + 1000.0 * heading_unit
        while len(out) < sc.m_detected:
            rows = np.concatenate([np.tile(far, (kp1, 1)), np.zeros((kp1, 1))], axis=1)
            out.append(pl.Behavior(samples=rows, source="pad"))
        if sc.sigma_xy > 0:
            noise = self.rng.normal(0.0, sc.sigma_xy, size=(sc.m_detected, kp1, 2))
            for b, nz in zip(out, noise):
                b.samples[:, :2] += nz
        return out

    def build_state(self) -> HighLevelState:
        ego_behaviors = [self.plan_action(z) for z in range(self.sc.n_actions)]
        others = self.perceive()
        if self.sc.horizon_k == 1:
            # degenerate imagination: only the current position, replicated
            for b in ego_behaviors + others:
                b.samples = np.tile(b.samples[0], (b.samples.shape[0], 1))
        return HighLevelState(
            ego_behaviors=ego_behaviors,
            other_behaviors=others,
            ego_xy=np.array([self.ego_x, self.ego_y]),
            ego_heading=self.ego_heading,
        )

    # ------------------------------------------------------------------
    # stepping
    # ------------------------------------------------------------------

    def step_low_level(self, behavior: pl.Behavior) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        sc = self.sc
        self._advance_ego(behavior)
        self._advance_scripted()
        crashed_pairs = self._detect_scripted_crashes()

        collided, violated = self.check_safety()
        blocked = self._route_blocked() if crashed_pairs or self._any_crashed else False
        reached_goal = self._goal_reached() and not (collided or violated or blocked)
        self.step_count += 1
        timeout = self.step_count >= sc.episode_t

        unsafe = collided or violated or blocked
        r = reward_step(sc, self.ego_speed, unsafe, reached_goal)

        outcome = StepOutcome(
            reward=r,
            collided=collided or blocked,
            safe_distance_violated=violated,
            reached_goal=reached_goal,
            blocked=blocked,
        )
        if unsafe:
            outcome.terminal = True
            outcome.cause = "collision"
        elif reached_goal:
            outcome.terminal = True
            outcome.cause = "goal"
        elif timeout:
            outcome.terminal = True
            outcome.timeout = True
            outcome.cause = "timeout"
        self.done = outcome.terminal
        self.cause = outcome.cause
        return outcome

    def _advance_ego(self, behavior: pl.Behavior):
        dt = self.sc.dt_sim
        old_speed = self.ego_speed
        fa = behavior.frenet_after
        ref = getattr(behavior, "ref", None)
        if fa is not None and ref is not None:
            path = self.net.route(ref).path
            xy = frenet_to_cartesian_clamped(path, fa.s, fa.d)
            speed = float(np.hypot(fa.s_d, fa.d_d))
            if speed > 0.05:
                self.ego_heading = path.heading(fa.s) + float(np.arctan2(fa.d_d, max(fa.s_d, 1e-9)))
            self.ego_x, self.ego_y = float(xy[0]), float(xy[1])
            self.ego_speed = speed
            self._frenet_cache = {ref: fa}
        else:
            # arc-length interpolation along the sampled trajectory
            xy = behavior.xy
            speeds = behavior.speeds
            v0 = speeds[0]
            v1 = float(np.interp(dt, np.arange(len(speeds)) * self.sc.dt_im, speeds))
            dist = 0.5 * (v0 + v1) * dt
            seg = np.diff(xy, axis=0)
            seg_len = np.hypot(seg[:, 0], seg[:, 1])
            cum = np.concatenate([[0.0], np.cumsum(seg_len)])
            dist = min(dist, cum[-1])
            i = int(np.clip(np.searchsorted(cum, dist, side="right") - 1, 0, max(len(seg_len) - 1, 0)))
            if len(seg_len) and seg_len[i] > 1e-9:
                frac = (dist - cum[i]) / seg_len[i]
                pos = xy[i] + frac * seg[i]
                if seg_len[i] > 1e-6 and v1 > 0.05:
                    self.ego_heading = float(np.arctan2(seg[i, 1], seg[i, 0]))
            else:
                pos = xy[0]
            self.ego_x, self.ego_y = float(pos[0]), float(pos[1])
            self.ego_speed = v1
            self._frenet_cache = {}
        self.ego_accel = (self.ego_speed - old_speed) / dt

    def _advance_scripted(self):
        sc = self.sc
        dt = sc.dt_sim
        accels = []
        for v in self.vehicles:
            if not v.active or v.crashed:
                accels.append(0.0)
                continue
            accels.append(self._scripted_accel(v))
        for v, a in zip(self.vehicles, accels):
            if not v.active or v.crashed:
                v.speed = 0.0
                continue
            v.speed = max(0.0, v.speed + a * dt)
            v.s += v.speed * dt
            path = self.net.route(v.route).path
            if v.s >= path.length - 1.0:
                v.active = False
                continue
            xy = frenet_to_cartesian_clamped(path, v.s, 0.0)
            v.x, v.y = float(xy[0]), float(xy[1])
            v.heading = path.heading(v.s)

    def _scripted_accel(self, v: VehicleState) -> float:
        sc = self.sc
        route = self.net.route(v.route)
        gap, dv = self._leader_gap(v)
        a = self._idm(v, gap, dv)

        # gap acceptance ahead of conflict zones
        zones = [(o, iv) for o, iv in route.conflicts.items() if v.s < iv[1]]
        pending = [(o, iv) for o, iv in zones if v.s < iv[0] <= v.s + ZONE_LOOKAHEAD]
        inside = any(iv[0] <= v.s <= iv[1] for _, iv in zones)
        if inside:
            v.yield_state = "proceed"
        elif pending:
            threat = self._conflict_threat(v, pending)
            if threat < sc.gap_accept_time:
                if v.yield_state is None:
                    v.yield_state = "yield" if self.rng.random() < sc.yield_prob else "proceed"
            else:
                v.yield_state = None
            if v.yield_state == "yield":
                wall = min(iv[0] for _, iv in pending) - sc.yield_wall_margin
                wall_gap = wall - v.s - 0.5 * v.length
                a = min(a, self._idm(v, max(wall_gap, 0.05), v.speed))
        else:
            v.yield_state = None
        return a

    def _conflict_threat(self, v: VehicleState, pending) -> float:
        """Smallest time-to-zone among vehicles on conflicting routes (+ ego)."""
        sc = self.sc
        threat = np.inf
        for other_name, _ in pending:
            other_route = self.net.route(other_name)
            interval = other_route.conflicts.get(v.route)
            if interval is None:
                continue
            f0, f1 = interval
            candidates = [
                (u.s, u.speed) for u in self.vehicles
                if u.active and u.vid != v.vid and u.route == other_name
            ]
            if self.ego_route == other_name:
                ef = self.ego_frenet(self.ego_route)
                candidates.append((ef.s, self.ego_speed))
            for s_u, v_u in candidates:
                if f0 <= s_u <= f1:
                    threat = 0.0
                elif s_u < f0 and (f0 - s_u) < 40.0:
                    threat = min(threat, (f0 - s_u) / max(v_u, 0.3))
        return threat

    def _leader_gap(self, v: VehicleState) -> tuple[float, float]:
        """Bumper gap and closing speed to the nearest leader (incl. ego)."""
        best_gap, best_dv = np.inf, 0.0
        best_s = np.inf
        for u in self.vehicles:
            if not u.active or u.vid == v.vid:
                continue
            if np.hypot(u.x - v.x, u.y - v.y) > LEADER_LOOKAHEAD:
                continue
            if u.route == v.route:
                s_u, d_u = u.s, 0.0
            else:
                s_u, d_u = self._project(v.route, u.x, u.y, key=(v.route, "veh", u.vid))
            if abs(d_u) > LEADER_CORRIDOR:
                continue
            ds = s_u - v.s
            if 0.0 < ds < LEADER_LOOKAHEAD and s_u < best_s:
                best_s = s_u
                best_gap = ds - 0.5 * (v.length + u.length)
                best_dv = v.speed - u.speed
        if np.hypot(self.ego_x - v.x, self.ego_y - v.y) <= LEADER_LOOKAHEAD:
            s_e, d_e = self._project(v.route, self.ego_x, self.ego_y, key=(v.route, "ego"))
            if abs(d_e) <= LEADER_CORRIDOR:
                ds = s_e - v.s
                if 0.0 < ds < LEADER_LOOKAHEAD and s_e < best_s:
                    best_gap = ds - 0.5 * (v.length + VEH_LENGTH)
                    best_dv = v.speed - self.ego_speed
        return max(best_gap, 0.05) if np.isfinite(best_gap) else np.inf, best_dv

    def _idm(self, v: VehicleState, gap: float, dv: float) -> float:
        sc = self.sc
        a, b = sc.idm_accel, sc.idm_decel
        free = a * (1.0 - (v.speed / max(v.v_desired, 0.1)) ** 4)
        if not np.isfinite(gap):
            return free
        s_star = sc.idm_jam + max(0.0, v.speed * sc.idm_headway + v.speed * dv / (2 * np.sqrt(a * b)))
        return a * (1.0 - (v.speed / max(v.v_desired, 0.1)) ** 4 - (s_star / max(gap, 0.05)) ** 2)

    # ------------------------------------------------------------------
    # safety / termination
    # ------------------------------------------------------------------

    @property
    def _any_crashed(self) -> bool:
        return any(v.crashed for v in self.vehicles)

    def _detect_scripted_crashes(self) -> list:
        pairs = []
        vs = [v for v in self.vehicles if v.active]
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                if vs[i].crashed and vs[j].crashed:
                    continue
                if _rect_gap_pair(vs[i], vs[j]) == 0.0:
                    vs[i].crashed = True
                    vs[j].crashed = True
                    pairs.append((vs[i].vid, vs[j].vid))
        return pairs

    def check_safety(self) -> tuple[bool, bool]:
        ego = VehicleState(
            vid=-1, route="", s=0, speed=0, x=self.ego_x, y=self.ego_y, heading=self.ego_heading
        )
        collided = False
        violated = False
        for v in self.vehicles:
            if not v.active:
                continue
            gap = _rect_gap_pair(ego, v)
            if gap == 0.0:
                collided = True
                violated = True
                break
            if gap < self.sc.safety_d0:
                violated = True
        return collided, violated

    def _route_blocked(self) -> bool:
        """A crashed vehicle sits on the ego's remaining route."""
        if self.sc.task == "lanechange":
            return False
        route = self.net.route(self.ego_route)
        ef = self.ego_frenet(self.ego_route)
        for v in self.vehicles:
            if not (v.active and v.crashed):
                continue
            s_v, d_v = self._project(self.ego_route, v.x, v.y, key=(self.ego_route, "blk", v.vid))
            if abs(d_v) < BLOCK_CORRIDOR and ef.s + 2.0 < s_v < (route.goal_s or route.path.length):
                return True
        return False

    def _goal_reached(self) -> bool:
        sc = self.sc
        if sc.task == "lanechange":
            _, d = self._project("lane1", self.ego_x, self.ego_y, key=("ego", "lane1"))
            return abs(d) < 0.5
        route = self.net.route(self.ego_route)
        return self.ego_frenet(self.ego_route).s >= (route.goal_s or route.path.length - 5.0)
