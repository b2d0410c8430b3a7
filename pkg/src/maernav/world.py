"""Segment-based maps, the scenario text format, and the 5x5 training grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .robot import DEFAULT_ROBOT, Pose, RobotSpec, footprint_collides, normalize_angle

GRID_SIZE = 5
GRID_SEED = 20250401


class ScenarioError(ValueError):
    """Malformed or invalid scenario content."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def boundary_segments(width: float, height: float) -> list[tuple[float, float, float, float]]:
    return [
        (0.0, 0.0, width, 0.0),
        (width, 0.0, width, height),
        (width, height, 0.0, height),
        (0.0, height, 0.0, 0.0),
    ]


def _same_segment(a, b) -> bool:
    return tuple(a) == tuple(b) or tuple(a) == (b[2], b[3], b[0], b[1])


def point_segment_distance(px: float, py: float, segs: np.ndarray) -> np.ndarray:
    p1 = segs[:, :2]
    e = segs[:, 2:] - p1
    ee = (e * e).sum(axis=1)
    t = np.where(ee > 0, ((px - p1[:, 0]) * e[:, 0] + (py - p1[:, 1]) * e[:, 1]) / np.where(ee > 0, ee, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx = p1[:, 0] + t * e[:, 0]
    cy = p1[:, 1] + t * e[:, 1]
    return np.hypot(px - cx, py - cy)


@dataclass(frozen=True, eq=False)
class WorldMap:
    width: float
    height: float
    segments: np.ndarray
    start_poses: tuple[Pose, ...] = ()
    goal_points: tuple[tuple[float, float], ...] = ()
    name: str = "map"

    def __post_init__(self):
        segs = np.array(self.segments, dtype=float).reshape(-1, 4)
        segs.setflags(write=False)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "start_poses", tuple(Pose(*map(float, p)) for p in self.start_poses))
        object.__setattr__(self, "goal_points", tuple((float(g[0]), float(g[1])) for g in self.goal_points))

    def __eq__(self, other):
        if not isinstance(other, WorldMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.name == other.name
            and self.segments.shape == other.segments.shape
            and bool(np.array_equal(self.segments, other.segments))
            and self.start_poses == other.start_poses
            and self.goal_points == other.goal_points
        )

    __hash__ = None

    def inside(self, x: float, y: float) -> bool:
        return 0.0 < x < self.width and 0.0 < y < self.height

    def with_segments(self, extra) -> "WorldMap":
        segs = np.vstack([self.segments, np.asarray(extra, dtype=float).reshape(-1, 4)])
        return WorldMap(self.width, self.height, segs, self.start_poses, self.goal_points, self.name)


@dataclass(frozen=True)
class TaskSpec:
    start: Pose
    goal: tuple[float, float]
    max_steps: int = 400
    task_id: str = ""

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


def validate_map(m: WorldMap, spec: RobotSpec = DEFAULT_ROBOT) -> None:
    """Raise ScenarioError naming the first violated invariant."""
    if not (m.width > 0 and m.height > 0):
        raise ScenarioError("map size must be positive")
    s = m.segments
    if len(s):
        xs, ys = s[:, [0, 2]], s[:, [1, 3]]
        if xs.min() < 0 or ys.min() < 0 or xs.max() > m.width or ys.max() > m.height:
            raise ScenarioError("segment out of bounds")
    for b in boundary_segments(m.width, m.height):
        if not any(_same_segment(b, seg) for seg in s):
            raise ScenarioError("boundary segment missing")
    for p in m.start_poses:
        if not m.inside(p.x, p.y):
            raise ScenarioError(f"start {tuple(p)} outside the map")
        if footprint_collides(p, s, spec):
            raise ScenarioError(f"start {tuple(p)} in collision")
    for g in m.goal_points:
        if not m.inside(*g):
            raise ScenarioError(f"goal {g} outside the map")
        if len(s) and point_segment_distance(g[0], g[1], s).min() == 0.0:
            raise ScenarioError(f"goal {g} lies on an obstacle")


def _parse_floats(parts: list[str], n: int, lineno: int) -> list[float]:
    if len(parts) != n:
        raise ScenarioError(f"expected {n} numbers, got {len(parts)}", lineno)
    try:
        return [float(v) for v in parts]
    except ValueError as exc:
        raise ScenarioError(f"bad number ({exc})", lineno) from None


def load_scenario(text: str, spec: RobotSpec = DEFAULT_ROBOT) -> WorldMap:
    size = None
    name = "map"
    segments, starts, goals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *rest = line.split()
        if key == "size":
            size = _parse_floats(rest, 2, lineno)
        elif key == "segment":
            segments.append(tuple(_parse_floats(rest, 4, lineno)))
        elif key == "start":
            x, y, th = _parse_floats(rest, 3, lineno)
            starts.append(Pose(x, y, normalize_angle(th)))
        elif key == "goal":
            goals.append(tuple(_parse_floats(rest, 2, lineno)))
        elif key == "name":
            if len(rest) != 1:
                raise ScenarioError("name takes a single token", lineno)
            name = rest[0]
        else:
            raise ScenarioError(f"unknown directive {key!r}", lineno)
    if size is None:
        raise ScenarioError("missing 'size' directive")
    w, h = size
    for b in boundary_segments(w, h):
        if not any(_same_segment(b, seg) for seg in segments):
            segments.append(b)
    m = WorldMap(w, h, segments, tuple(starts), tuple(goals), name)
    validate_map(m, spec)
    return m


def dump_scenario(m: WorldMap) -> str:
    lines = [f"name {m.name}", f"size {m.width!r} {m.height!r}"]
    lines += ["segment " + " ".join(repr(float(v)) for v in seg) for seg in m.segments]
    lines += [f"start {p.x!r} {p.y!r} {p.theta!r}" for p in m.start_poses]
    lines += [f"goal {g[0]!r} {g[1]!r}" for g in m.goal_points]
    return "\n".join(lines) + "\n"


def grid_map_size(row: int, col: int) -> float:
    return 20.0 - 1.5 * (row + col)


def _slot_segments(wall: int, offset: float, width: float, depth: float, size: float):
    """Three-sided dead-end slot opening into the room from boundary ``wall`` (0=S,1=E,2=N,3=W)."""
    a, b = offset, offset + width
    if wall == 0:
        return [(a, 0.0, a, depth), (b, 0.0, b, depth)], (0.5 * (a + b), 0.5 * depth)
    if wall == 2:
        return [(a, size, a, size - depth), (b, size, b, size - depth)], (0.5 * (a + b), size - 0.5 * depth)
    if wall == 1:
        return [(size, a, size - depth, a), (size, b, size - depth, b)], (size - 0.5 * depth, 0.5 * (a + b))
    return [(0.0, a, depth, a), (0.0, b, depth, b)], (0.5 * depth, 0.5 * (a + b))


def _procedural_map(row: int, col: int, rng: np.random.Generator, spec: RobotSpec) -> WorldMap:
    size = grid_map_size(row, col)
    level = row + col
    segs = list(boundary_segments(size, size))
    goals: list[tuple[float, float]] = []
    # dead-end slots along the boundary with a goal deep inside each; narrower than the
    # footprint diagonal so the robot cannot turn around inside
    n_slots = 1 + level // 3
    walls = rng.permutation(4)
    for k in range(n_slots):
        wall = int(walls[k % 4])
        width = float(rng.uniform(0.78, 0.88))
        depth = float(rng.uniform(1.2, 2.0))
        offset = float(rng.uniform(2.2, size - 2.2 - width))
        slot, goal = _slot_segments(wall, offset, width, depth, size)
        segs += slot
        goals.append(goal)
    # free-standing interior walls
    n_walls = 2 + level // 2
    placed = attempts = 0
    while placed < n_walls and attempts < 1000:
        attempts += 1
        length = float(rng.uniform(1.0, 3.0))
        ang = float(rng.choice([0.0, math.pi / 2, rng.uniform(0, math.pi)]))
        cx, cy = rng.uniform(2.0, size - 2.0, size=2)
        dx, dy = 0.5 * length * math.cos(ang), 0.5 * length * math.sin(ang)
        cand = np.array([[cx - dx, cy - dy, cx + dx, cy + dy]])
        # keep a robot-width of clearance to everything already placed
        existing = np.array(segs)
        ends_clear = all(point_segment_distance(x, y, existing).min() > 1.2 for x, y in ((cx - dx, cy - dy), (cx + dx, cy + dy)))
        if ends_clear and not footprint_collides(Pose(cx, cy, ang), existing, RobotSpec(length=length + 1.2, width=1.2)):
            segs.append(tuple(cand[0]))
            placed += 1
    arr = np.array(segs)
    starts: list[Pose] = []
    inflated = RobotSpec(length=spec.length + 0.6, width=spec.width + 0.6)
    while len(starts) < 8:
        x, y = rng.uniform(0.8, size - 0.8, size=2)
        th = normalize_angle(float(rng.uniform(-math.pi, math.pi)))
        p = Pose(float(x), float(y), th)
        if not footprint_collides(p, arr, inflated):
            starts.append(p)
    while len(goals) < 8 + n_slots // 2:
        x, y = rng.uniform(0.8, size - 0.8, size=2)
        if point_segment_distance(x, y, arr).min() > 0.8:
            goals.append((float(x), float(y)))
    return WorldMap(size, size, arr, tuple(starts), tuple(goals), f"env_{row}_{col}")


def generate_training_grid(spec: RobotSpec = DEFAULT_ROBOT) -> list[list[WorldMap]]:
    """25 maps indexed [row][col]; side length shrinks by 1.5 m per grid step away from (0, 0)."""
    root = np.random.SeedSequence(GRID_SEED)
    children = root.spawn(GRID_SIZE * GRID_SIZE)
    grid = []
    for r in range(GRID_SIZE):
        grid.append([_procedural_map(r, c, np.random.default_rng(children[r * GRID_SIZE + c]), spec) for c in range(GRID_SIZE)])
    return grid


def empty_room(size: float = 6.0, name: str = "empty_room", n: int = 16, seed: int = 0,
               spec: RobotSpec = DEFAULT_ROBOT) -> WorldMap:
    """Obstacle-free square room with ``n`` annotated starts and goals."""
    rng = np.random.default_rng(seed)
    margin = 0.6
    starts = tuple(
        Pose(float(x), float(y), normalize_angle(float(t)))
        for x, y, t in zip(rng.uniform(margin, size - margin, n), rng.uniform(margin, size - margin, n), rng.uniform(-math.pi, math.pi, n))
    )
    goals = tuple((float(x), float(y)) for x, y in rng.uniform(margin, size - margin, (n, 2)))
    return WorldMap(size, size, boundary_segments(size, size), starts, goals, name)
