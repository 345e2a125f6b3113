"""Arc-length parameterized reference paths and minimum-jerk quintic profiles.

A reference path is a dense polyline with piecewise-linear tangents; the
lateral axis is the tangent rotated +90 deg (left of travel).  All geometry
is double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import polyline_project

RESAMPLE_SPACING = 0.5  # m, segments longer than this get subdivided
DEFAULT_CORRIDOR = 20.0  # m, projection rejects points farther out
_S_TOL = 1e-6


class PathError(ValueError):
    """Raised for degenerate waypoint input."""


class DomainError(ValueError):
    """Raised when a query coordinate is outside its valid range."""


class CorridorError(ValueError):
    """Raised when a point is too far from the path to project."""


@dataclass(frozen=True)
class ReferencePath:
    """Polyline with precomputed arc-length table and unit frame vectors."""

    pts: np.ndarray        # (N, 2)
    cum_s: np.ndarray      # (N,)
    seg_dir: np.ndarray    # (N-1, 2) unit tangents
    seg_nor: np.ndarray    # (N-1, 2) unit left normals
    seg_len: np.ndarray    # (N-1,)

    @property
    def length(self) -> float:
        return float(self.cum_s[-1])

    def segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self.cum_s, s, side="right")) - 1
        return min(max(i, 0), len(self.seg_len) - 1)

    def tangent(self, s: float) -> np.ndarray:
        return self.seg_dir[self.segment_index(s)]

    def normal(self, s: float) -> np.ndarray:
        return self.seg_nor[self.segment_index(s)]

    def heading(self, s: float) -> float:
        t = self.tangent(s)
        return float(np.arctan2(t[1], t[0]))


@dataclass
class FrenetState:
    """Longitudinal (s) and lateral (d) position with two derivatives each."""

    s: float
    s_d: float
    s_dd: float
    d: float
    d_d: float
    d_dd: float

    def lon(self) -> tuple[float, float, float]:
        return (self.s, self.s_d, self.s_dd)

    def lat(self) -> tuple[float, float, float]:
        return (self.d, self.d_d, self.d_dd)


@dataclass(frozen=True)
class QuinticProfile:
    """Degree-5 polynomial p(t) = sum(coeffs[k] * t**k) over [0, duration]."""

    coeffs: np.ndarray  # (6,)
    duration: float


def build_reference_path(waypoints) -> ReferencePath:
    """Build an arc-length table over the waypoint polyline.

    Segments longer than RESAMPLE_SPACING are subdivided so downstream
    projections see a dense polyline; original vertices are preserved.
    """
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 2:
        raise PathError("need at least 2 waypoints of shape (N, 2)")
    seg = np.diff(wp, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    if (seg_len < 1e-9).any():
        raise PathError("consecutive waypoints coincide")

    pts = [wp[0]]
    for i in range(len(seg_len)):
        n_sub = max(1, int(np.ceil(seg_len[i] / RESAMPLE_SPACING)))
        for k in range(1, n_sub + 1):
            pts.append(wp[i] + seg[i] * (k / n_sub))
    pts = np.asarray(pts)

    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    seg_dir = seg / seg_len[:, None]
    seg_nor = np.stack([-seg_dir[:, 1], seg_dir[:, 0]], axis=1)
    cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
    return ReferencePath(pts=pts, cum_s=cum_s, seg_dir=seg_dir, seg_nor=seg_nor, seg_len=seg_len)


def frenet_to_cartesian(path: ReferencePath, s: float, d: float) -> np.ndarray:
    """Map (s, d) to the plane: root point plus d along the left normal."""
    if s < -_S_TOL or s > path.length + _S_TOL:
        raise DomainError(f"s={s} outside [0, {path.length}]")
    s = min(max(s, 0.0), path.length)
    i = path.segment_index(s)
    base = path.pts[i] + (s - path.cum_s[i]) * path.seg_dir[i]
    return base + d * path.seg_nor[i]


def frenet_to_cartesian_clamped(path: ReferencePath, s: float, d: float) -> np.ndarray:
    """Like frenet_to_cartesian but extrapolates along the end tangents."""
    if 0.0 <= s <= path.length:
        return frenet_to_cartesian(path, s, d)
    if s < 0.0:
        return path.pts[0] + s * path.seg_dir[0] + d * path.seg_nor[0]
    over = s - path.length
    return path.pts[-1] + over * path.seg_dir[-1] + d * path.seg_nor[-1]


def cartesian_to_frenet(
    path: ReferencePath,
    point,
    hint_s: float | None = None,
    corridor: float = DEFAULT_CORRIDOR,
    window: float = 10.0,
) -> tuple[float, float]:
    """Project a point to (s, d) on the path.

    With ``hint_s`` the scan is restricted to segments within ``window``
    meters of the hint; if the local optimum sits on the window edge the
    full path is rescanned.  Distance ties resolve toward smaller s.
    """
    px, py = float(point[0]), float(point[1])
    n_seg = len(path.seg_len)
    if hint_s is not None:
        lo = path.segment_index(max(hint_s - window, 0.0))
        hi = path.segment_index(min(hint_s + window, path.length)) + 1
        s, d, dist, idx = polyline_project(px, py, path.pts, path.cum_s, lo, hi)
        interior = (idx > lo or lo == 0) and (idx < hi - 1 or hi == n_seg)
        if interior and dist <= corridor:
            return float(s), float(d)
    s, d, dist, _ = polyline_project(px, py, path.pts, path.cum_s, 0, n_seg)
    if dist > corridor:
        raise CorridorError(f"point {dist:.2f} m from path exceeds corridor {corridor}")
    return float(s), float(d)


def solve_quintic(start, end, duration: float) -> QuinticProfile:
    """Boundary-value quintic: matches both (p, pd, pdd) triples.

    Among degree-5 polynomials meeting the boundary conditions this is the
    unique one, and it minimizes the integral of squared jerk over all
    sufficiently smooth connections.
    """
    if duration <= 0:
        raise DomainError(f"duration must be positive, got {duration}")
    T = float(duration)
    A = _boundary_matrix(T)
    b = np.array([start[0], start[1], start[2], end[0], end[1], end[2]], dtype=float)
    coeffs = np.linalg.solve(A, b)
    return QuinticProfile(coeffs=coeffs, duration=T)


def solve_quintic_batch(starts: np.ndarray, ends: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Vectorized boundary solves; returns (N, 6) coefficient rows."""
    if (durations <= 0).any():
        raise DomainError("durations must be positive")
    A = np.stack([_boundary_matrix(float(T)) for T in durations])
    b = np.concatenate([starts, ends], axis=1).astype(float)
    return np.linalg.solve(A, b)


def _boundary_matrix(T: float) -> np.ndarray:
    return np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, T, T**2, T**3, T**4, T**5],
            [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
            [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
        ],
        dtype=float,
    )


def eval_profile(profile: QuinticProfile, t: float) -> tuple[float, float, float, float]:
    """Horner evaluation of p and its first three derivatives at t."""
    if t < -_S_TOL or t > profile.duration + _S_TOL:
        raise DomainError(f"t={t} outside [0, {profile.duration}]")
    c = profile.coeffs
    p = _horner(c, t)
    pd = _horner(c[1:] * np.arange(1, 6), t)
    pdd = _horner(c[2:] * np.array([2, 6, 12, 20]), t)
    pddd = _horner(c[3:] * np.array([6, 24, 60]), t)
    return p, pd, pdd, pddd


def _horner(c: np.ndarray, t: float) -> float:
    out = 0.0
    for k in range(len(c) - 1, -1, -1):
        out = out * t + c[k]
    return float(out)


def eval_profile_array(coeffs: np.ndarray, t: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Vectorized polynomial evaluation of one coefficient row."""
    c = np.asarray(coeffs, dtype=float)
    for _ in range(deriv):
        c = c[1:] * np.arange(1, len(c))
    out = np.zeros_like(t, dtype=float)
    for k in range(len(c) - 1, -1, -1):
        out = out * t + c[k]
    return out


def jerk_integral(profile: QuinticProfile) -> float:
    """Closed-form integral of squared jerk over [0, duration].

    The third derivative is quadratic, A + B t + C t**2, so the integral of
    its square has an exact polynomial antiderivative.
    """
    c = profile.coeffs
    T = profile.duration
    A = 6.0 * c[3]
    B = 24.0 * c[4]
    C = 60.0 * c[5]
    return float(
        A * A * T
        + A * B * T**2
        + (B * B + 2.0 * A * C) * T**3 / 3.0
        + B * C * T**4 / 2.0
        + C * C * T**5 / 5.0
    )
