"""Differential-drive robot: kinematics, rectangular footprint, and raycast LiDAR."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(theta, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    return a


def normalize_angles(theta: np.ndarray) -> np.ndarray:
    a = np.remainder(theta + math.pi, TWO_PI) - math.pi
    return np.where(a <= -math.pi, a + TWO_PI, a)


class Pose(NamedTuple):
    x: float
    y: float
    theta: float


class Action(NamedTuple):
    v: float
    w: float


@dataclass(frozen=True)
class RobotSpec:
    length: float = 0.62
    width: float = 0.64
    v_max: float = 0.5
    w_max: float = math.pi / 2
    dt: float = 0.1
    lidar_fov: float = TWO_PI
    lidar_beams: int = 1667
    lidar_max_range: float = 30.0
    minpool_sectors: int = 36
    # forward offset of the LiDAR origin from the footprint center
    lidar_offset: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (self.lidar_beams >= self.minpool_sectors >= 1):
            raise ValueError("need lidar_beams >= minpool_sectors >= 1")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("footprint dimensions must be positive")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.length, self.width)

    @property
    def obs_dim(self) -> int:
        return self.minpool_sectors + 4

    def clamp(self, a: Action) -> Action:
        return Action(
            float(np.clip(a[0], -self.v_max, self.v_max)),
            float(np.clip(a[1], -self.w_max, self.w_max)),
        )


DEFAULT_ROBOT = RobotSpec()


def _sinc(h: float) -> float:
    if abs(h) < 1e-6:
        return 1.0 - h * h / 6.0
    return math.sin(h) / h


def integrate_unicycle(p: Pose, a: Action, dt: float) -> Pose:
    """Advance a pose under constant (v, w) for ``dt`` seconds using exact arc motion.

    The chord form ``v*dt*sinc(w*dt/2)`` along the mid-arc heading is used
    instead of ``(v/w)*(sin - sin)`` so that small ``w`` does not cancel
    catastrophically; it is algebraically identical to the circular-arc
    solution.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, theta = p
    v, w = a
    if abs(w) < 1e-9:
        return Pose(x + v * dt * math.cos(theta), y + v * dt * math.sin(theta), normalize_angle(theta))
    phi = w * dt
    chord = v * dt * _sinc(0.5 * phi)
    mid = theta + 0.5 * phi
    return Pose(x + chord * math.cos(mid), y + chord * math.sin(mid), normalize_angle(theta + phi))


def footprint_corners(p: Pose, spec: RobotSpec = DEFAULT_ROBOT) -> np.ndarray:
    """World-frame corners (4, 2), counter-clockwise from front-left."""
    hl, hw = 0.5 * spec.length, 0.5 * spec.width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(p.theta), math.sin(p.theta)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([p.x, p.y])


def _as_segments(obstacles) -> np.ndarray:
    segs = getattr(obstacles, "segments", obstacles)
    return np.asarray(segs, dtype=float).reshape(-1, 4)


def segments_hit_box(segs: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Boolean mask of segments (already in box frame) touching the closed box |x|<=hx, |y|<=hy.

    Liang-Barsky clipping of each segment's parameter interval [0, 1].
    """
    x0, y0 = segs[:, 0], segs[:, 1]
    dx, dy = segs[:, 2] - x0, segs[:, 3] - y0
    lo = np.zeros(len(segs))
    hi = np.ones(len(segs))
    ok = np.ones(len(segs), dtype=bool)
    for d, q0, h in ((dx, x0, hx), (dy, y0, hy)):
        # constraints: -h <= q0 + t d <= h
        for pp, qq in ((-d, q0 + h), (d, h - q0)):
            par = pp == 0.0
            ok &= ~(par & (qq < 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(par, 0.0, qq / np.where(par, 1.0, pp))
            lo = np.where(~par & (pp < 0), np.maximum(lo, r), lo)
            hi = np.where(~par & (pp > 0), np.minimum(hi, r), hi)
    return ok & (lo <= hi)


def to_robot_frame(segs: np.ndarray, p: Pose) -> np.ndarray:
    c, s = math.cos(p.theta), math.sin(p.theta)
    out = np.empty_like(segs)
    for i in (0, 2):
        dx = segs[:, i] - p.x
        dy = segs[:, i + 1] - p.y
        out[:, i] = c * dx + s * dy
        out[:, i + 1] = -s * dx + c * dy
    return out


def footprint_collides(p: Pose, world, spec: RobotSpec = DEFAULT_ROBOT) -> bool:
    """True iff any obstacle segment intersects or lies inside the footprint rectangle."""
    segs = _as_segments(world)
    if len(segs) == 0:
        return False
    local = to_robot_frame(segs, p)
    return bool(segments_hit_box(local, 0.5 * spec.length, 0.5 * spec.width).any())


def beam_angles(spec: RobotSpec = DEFAULT_ROBOT) -> np.ndarray:
    return spec.lidar_fov * np.arange(spec.lidar_beams) / spec.lidar_beams


def raycast(origin, directions: np.ndarray, segs: np.ndarray, max_range: float) -> np.ndarray:
    """Distance along each unit direction (N, 2) to the nearest segment, clamped to ``max_range``."""
    n = len(directions)
    if len(segs) == 0:
        return np.full(n, float(max_range))
    ox, oy = origin
    p1 = segs[:, :2]
    e = segs[:, 2:] - p1
    dx = directions[:, 0:1]
    dy = directions[:, 1:2]
    wx = (p1[:, 0] - ox)[None, :]
    wy = (p1[:, 1] - oy)[None, :]
    ex = e[:, 0][None, :]
    ey = e[:, 1][None, :]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        s = (wx * dy - wy * dx) / denom
    valid = (denom != 0.0) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    t = np.where(valid, t, np.inf)
    return np.minimum(t.min(axis=1), max_range)


def cast_lidar(p: Pose, world, spec: RobotSpec = DEFAULT_ROBOT) -> np.ndarray:
    """Full scan; beam k points along ``theta + fov*k/beams``."""
    segs = _as_segments(world)
    ang = p.theta + beam_angles(spec)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    origin = (p.x + spec.lidar_offset * math.cos(p.theta), p.y + spec.lidar_offset * math.sin(p.theta))
    return raycast(origin, dirs, segs, spec.lidar_max_range)


def minpool(scan, m: int) -> np.ndarray:
    """Minimum over ``m`` contiguous sectors; the last sector absorbs any remainder."""
    scan = np.asarray(scan, dtype=float)
    if m < 1:
        raise ValueError("minpool needs at least one sector")
    if m > len(scan):
        raise ValueError("more sectors than beams")
    size = len(scan) // m
    head = scan[: size * (m - 1)].reshape(m - 1, size).min(axis=1) if m > 1 else np.empty(0)
    return np.concatenate([head, [scan[size * (m - 1):].min()]])


def relative_goal(p: Pose, goal) -> tuple[float, float]:
    """Distance and bearing of ``goal`` in the robot frame."""
    dx = goal[0] - p.x
    dy = goal[1] - p.y
    d = math.hypot(dx, dy)
    phi = normalize_angle(math.atan2(dy, dx) - p.theta)
    return d, phi
