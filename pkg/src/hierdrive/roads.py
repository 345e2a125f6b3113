"""Road network builders: k-way intersections, a roundabout, a two-lane road.

A network is a set of named routes (dense centerline paths from spawn edge to
exit edge), per-route stop lines ahead of the junction, and a pairwise
conflict table giving the arclength interval of each route that comes close
to another route.  Lane centerlines of opposing flows are kept 6.5 m apart so
that passing traffic stays outside the safe-distance threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frenet import ReferencePath, build_reference_path

LANE_OFFSET = 3.25        # m, centerline offset from the road axis
CONFLICT_WIDTH = 3.0      # m, route-to-route distance that counts as crossing
STOPLINE_SETBACK = 6.0    # m, stop line placed this far before the junction


@dataclass
class Route:
    name: str
    path: ReferencePath
    stopline_s: float | None = None
    goal_s: float | None = None
    # other route name -> (enter_s, exit_s) interval on THIS route
    conflicts: dict[str, tuple[float, float]] = field(default_factory=dict)
    in_leg: int = -1
    out_leg: int = -1


@dataclass
class RoadNetwork:
    routes: dict[str, Route]
    center: np.ndarray
    lane_names: list[str] = field(default_factory=list)  # lane-change task lanes

    def route(self, name: str) -> Route:
        return self.routes[name]


def _bezier(a, ctrl, b, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) ** 2 * a + 2 * t * (1 - t) * ctrl + t**2 * b


def _ray_intersection(p1, d1, p2, d2):
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-9:
        return None
    t = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / den
    return p1 + t * d1


def _connector(a, dir_a, b, dir_b) -> np.ndarray:
    ctrl = _ray_intersection(a, dir_a, b, dir_b)
    if ctrl is None or np.hypot(*(ctrl - a)) > 60.0:
        ctrl = 0.5 * (a + b)
    n = max(8, int(np.ceil(np.hypot(*(b - a)) / 0.4)))
    return _bezier(a, ctrl, b, n)


def _dedupe(pts: np.ndarray) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > 1e-6:
            keep.append(i)
    return pts[keep]


def build_intersection(
    legs: int,
    approach: float = 90.0,
    junction_radius: float = 12.0,
    goal_dist: float = 30.0,
) -> RoadNetwork:
    """Single-lane-per-direction intersection with one route per leg pair."""
    center = np.zeros(2)
    theta = [2 * np.pi * i / legs + np.pi / 2 for i in range(legs)]
    u = [np.array([np.cos(t), np.sin(t)]) for t in theta]
    off_in = [LANE_OFFSET * np.array([-ui[1], ui[0]]) for ui in u]
    off_out = [LANE_OFFSET * np.array([ui[1], -ui[0]]) for ui in u]

    routes: dict[str, Route] = {}
    for i in range(legs):
        for j in range(legs):
            if i == j:
                continue
            a_far = center + approach * u[i] + off_in[i]
            a_near = center + junction_radius * u[i] + off_in[i]
            b_near = center + junction_radius * u[j] + off_out[j]
            b_far = center + approach * u[j] + off_out[j]
            conn = _connector(a_near, -u[i], b_near, u[j])
            pts = _dedupe(np.concatenate([[a_far], conn, [b_far]]))
            path = build_reference_path(pts)
            stop_s = approach - junction_radius - STOPLINE_SETBACK
            route = Route(
                name=f"in{i}_out{j}",
                path=path,
                stopline_s=stop_s,
                goal_s=_goal_arclength(path, center, goal_dist, stop_s),
                in_leg=i,
                out_leg=j,
            )
            routes[route.name] = route
    net = RoadNetwork(routes=routes, center=center)
    _fill_conflicts(net, skip_shared_in_leg=True, zone_radius=junction_radius + 10.0)
    return net


def build_roundabout(
    legs: int = 4,
    ring_radius: float = 14.0,
    approach: float = 90.0,
    goal_dist: float = 32.0,
) -> RoadNetwork:
    """Counterclockwise ring with tangential entry/exit connectors."""
    center = np.zeros(2)
    theta = [2 * np.pi * i / legs + np.pi / 2 for i in range(legs)]
    u = [np.array([np.cos(t), np.sin(t)]) for t in theta]
    off_in = [LANE_OFFSET * np.array([-ui[1], ui[0]]) for ui in u]
    off_out = [LANE_OFFSET * np.array([ui[1], -ui[0]]) for ui in u]
    r_apron = ring_radius + 10.0
    eps = 0.55  # rad between a leg and its merge/diverge point on the ring

    def ring_point(phi):
        return center + ring_radius * np.array([np.cos(phi), np.sin(phi)])

    def ring_tangent(phi):
        return np.array([-np.sin(phi), np.cos(phi)])

    routes: dict[str, Route] = {}
    for i in range(legs):
        for j in range(legs):
            if i == j:
                continue
            a_far = center + approach * u[i] + off_in[i]
            a_near = center + r_apron * u[i] + off_in[i]
            phi_in = theta[i] + eps
            phi_out = theta[j] - eps
            while phi_out <= phi_in + 0.05:
                phi_out += 2 * np.pi
            entry = _connector(a_near, -u[i], ring_point(phi_in), ring_tangent(phi_in))
            n_arc = max(4, int(np.ceil((phi_out - phi_in) * ring_radius / 0.5)))
            arc = np.stack([ring_point(p) for p in np.linspace(phi_in, phi_out, n_arc)])
            b_near = center + r_apron * u[j] + off_out[j]
            b_far = center + approach * u[j] + off_out[j]
            exit_c = _connector(ring_point(phi_out), ring_tangent(phi_out), b_near, u[j])
            pts = _dedupe(np.concatenate([[a_far], entry, arc[1:], exit_c[1:], [b_far]]))
            path = build_reference_path(pts)
            stop_s = approach - r_apron - STOPLINE_SETBACK
            route = Route(
                name=f"in{i}_out{j}",
                path=path,
                stopline_s=stop_s,
                goal_s=_goal_arclength(path, center, goal_dist, stop_s),
                in_leg=i,
                out_leg=j,
            )
            routes[route.name] = route
    net = RoadNetwork(routes=routes, center=center)
    _fill_conflicts(net, skip_shared_in_leg=True, zone_radius=r_apron + 6.0)
    return net


def build_two_lane_road(
    length: float = 450.0,
    back: float = 150.0,
    lane_gap: float = 6.0,
) -> RoadNetwork:
    """Straight two-lane road along +x; lane1 is the left (target) lane."""
    routes = {}
    for k, y in enumerate((0.0, lane_gap)):
        path = build_reference_path([(-back, y), (length, y)])
        routes[f"lane{k}"] = Route(name=f"lane{k}", path=path, in_leg=k, out_leg=k)
    net = RoadNetwork(routes=routes, center=np.zeros(2), lane_names=["lane0", "lane1"])
    return net


def _goal_arclength(path: ReferencePath, center, goal_dist: float, stop_s: float) -> float:
    """First arclength past the junction where the route is goal_dist out."""
    d = np.hypot(path.pts[:, 0] - center[0], path.pts[:, 1] - center[1])
    past = (path.cum_s > stop_s + 1.0) & (d >= goal_dist)
    idx = np.argmax(past)
    if not past.any():
        return path.length - 5.0
    return float(path.cum_s[idx])


def _fill_conflicts(
    net: RoadNetwork,
    skip_shared_in_leg: bool,
    sample_ds: float = 2.0,
    zone_radius: float | None = None,
) -> None:
    """Pairwise crossing/merge intervals from coarse polyline distances.

    Only points inside the junction neighborhood count: once two routes have
    merged onto a shared lane, spacing is the car-following logic's problem,
    not gap acceptance.
    """
    names = list(net.routes)
    coarse: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for name in names:
        p = net.routes[name].path
        s = np.arange(0.0, p.length, sample_ds)
        idx = np.searchsorted(p.cum_s, s, side="right") - 1
        idx = np.clip(idx, 0, len(p.seg_len) - 1)
        pts = p.pts[idx] + (s - p.cum_s[idx])[:, None] * p.seg_dir[idx]
        coarse[name] = (s, pts)
    for a in names:
        ra = net.routes[a]
        sa, pa = coarse[a]
        in_zone_a = np.ones(len(sa), dtype=bool)
        if zone_radius is not None:
            in_zone_a = np.hypot(pa[:, 0] - net.center[0], pa[:, 1] - net.center[1]) < zone_radius
        for b in names:
            if a == b:
                continue
            rb = net.routes[b]
            if skip_shared_in_leg and ra.in_leg == rb.in_leg:
                continue
            sb, pb = coarse[b]
            d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
            near = (d2.min(axis=1) < CONFLICT_WIDTH**2) & in_zone_a
            if not near.any():
                continue
            first = int(np.argmax(near))
            last = len(near) - 1 - int(np.argmax(near[::-1]))
            ra.conflicts[b] = (float(sa[first]), float(sa[last]))
