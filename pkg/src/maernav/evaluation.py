"""Task-suite runner, navigation metrics, and the fixed challenge scenarios."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .robot import DEFAULT_ROBOT, Action, Pose, RobotSpec, footprint_collides, normalize_angle
from .sim import NavEnv, Outcome, RewardConfig, StepRecord
from .world import TaskSpec, WorldMap, boundary_segments

Policy = Callable[[np.ndarray], Action]


def nav_score(steps: int, max_steps: int, success: bool) -> float:
    if not 0 <= steps <= max_steps:
        raise ValueError("steps must lie in [0, max_steps]")
    return 1.0 - 2.0 * steps / max_steps if success else -1.0


@dataclass
class TaskResult:
    task_id: str
    outcome: Outcome
    steps: int
    max_steps: int = 400
    trajectory: list[StepRecord] = field(default_factory=list, repr=False)
    start: Pose | None = None
    goal: tuple[float, float] | None = None

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    @property
    def score(self) -> float:
        return nav_score(self.steps, self.max_steps, self.success)


@dataclass(frozen=True)
class MetricsReport:
    SR: float
    CR: float
    TR: float
    AES_star: float
    MANS: tuple[float, float]
    n_tasks: int


class PolicyAdapter:
    """Wraps an :class:`~maernav.learner.SACAgent` as a deterministic evaluation policy."""

    def __init__(self, agent):
        self.agent = agent

    def __call__(self, obs: np.ndarray) -> Action:
        return self.agent.act(obs, deterministic=True)


def jitter_start(task: TaskSpec, world: WorldMap, rng: np.random.Generator, amount: float,
                 spec: RobotSpec = DEFAULT_ROBOT) -> TaskSpec:
    """Small collision-free perturbation of the start pose (position +-amount m, heading +-amount rad / 4)."""
    if amount <= 0:
        return task
    for _ in range(100):
        dx, dy = rng.uniform(-amount, amount, size=2)
        dth = rng.uniform(-amount, amount) / 4.0
        p = Pose(task.start.x + dx, task.start.y + dy, normalize_angle(task.start.theta + dth))
        if not footprint_collides(p, world, spec):
            return TaskSpec(p, task.goal, task.max_steps, task.task_id)
    return task


def run_task(policy: Policy, world: WorldMap, task: TaskSpec, spec: RobotSpec = DEFAULT_ROBOT,
             reward_cfg: RewardConfig = RewardConfig()) -> TaskResult:
    env = NavEnv(world, spec, reward_cfg)
    obs = env.reset(task)
    done = False
    while not done:
        obs, _, done, _ = env.step(policy(obs.as_array()))
    return TaskResult(task.task_id, env.outcome.kind, env.t, task.max_steps, env.log, task.start, task.goal)


def run_task_suite(policy: Policy, world: WorldMap, tasks: Sequence[TaskSpec], seed: int = 0,
                   spec: RobotSpec = DEFAULT_ROBOT, reward_cfg: RewardConfig = RewardConfig(),
                   start_jitter: float = 0.0, jobs: int = 1, log_dir: str | Path | None = None) -> list[TaskResult]:
    """Run every task with ``policy``; results keep task order regardless of ``jobs``."""
    for t in tasks:
        if footprint_collides(t.start, world, spec):
            raise ValueError(f"task {t.task_id!r}: start in collision")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(tasks))]
    tasks = [jitter_start(t, world, r, start_jitter, spec) for t, r in zip(tasks, rngs)]

    def one(t):
        return run_task(policy, world, t, spec, reward_cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]
    if log_dir is not None:
        from .sim import format_step

        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        for r in results:
            (log_dir / f"{r.task_id}.traj").write_text("".join(format_step(s) + "\n" for s in r.trajectory))
    return results


def format_results(results: Sequence[TaskResult]) -> str:
    return "".join(f"{r.task_id} {r.outcome.value} {r.steps} {r.max_steps} {r.score:.9g}\n" for r in results)


def parse_results(text: str) -> list[TaskResult]:
    out = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        tid, kind, steps, max_steps, _ = line.split()
        out.append(TaskResult(tid, Outcome(kind), int(steps), int(max_steps)))
    return out


def compute_metrics(results: Mapping[str, Sequence[TaskResult]]) -> dict[str, MetricsReport]:
    """SR/CR/TR, AES* over the tasks every method solved, and MANS (mean, population std)."""
    if not results:
        return {}
    ids = {name: sorted(r.task_id for r in rs) for name, rs in results.items()}
    ref = next(iter(ids.values()))
    for name, lst in ids.items():
        if lst != ref or len(set(lst)) != len(lst):
            raise ValueError(f"method {name!r} ran a different task list")
    common = set(ref)
    for rs in results.values():
        common &= {r.task_id for r in rs if r.success}
    out = {}
    for name, rs in results.items():
        n = len(rs)
        kinds = [r.outcome for r in rs]
        if any(k is Outcome.RUNNING for k in kinds):
            raise ValueError("unfinished task in results")
        sr = kinds.count(Outcome.SUCCESS) / n
        cr = kinds.count(Outcome.CRASH) / n
        tr = kinds.count(Outcome.TIMEOUT) / n
        common_steps = [r.steps for r in rs if r.task_id in common]
        aes = sum(common_steps) / len(common_steps) if common_steps else math.nan
        # exactly rounded sums keep the result independent of task order
        scores = [r.score for r in rs]
        mean = math.fsum(scores) / n
        std = math.sqrt(math.fsum((s - mean) ** 2 for s in scores) / n)
        out[name] = MetricsReport(sr, cr, tr, aes, (mean, std), n)
    return out


# -- challenge fixtures ------------------------------------------------------


@dataclass(frozen=True)
class Challenge:
    world: WorldMap
    tasks: tuple[TaskSpec, ...]


def _polyline(points) -> list[tuple[float, float, float, float]]:
    return [(*points[i], *points[(i + 1) % len(points)]) for i in range(len(points))]


def build_challenge_scenarios(size: float = 8.0, corridor: float = 0.8, slot_depth: float = 1.5,
                              spec: RobotSpec = DEFAULT_ROBOT) -> dict[str, Challenge]:
    """Cross corridor, wall-hugging start, and garage dead end, each on an 8x8 m map.

    Every fixture has a forward variant (robot facing its way out) and a
    backward variant (robot facing the dead end or wall direction), and in
    every start configuration turning in place collides.
    """
    c = size / 2.0
    h = corridor / 2.0
    lo, hi = 0.4, size - 0.4
    half_len = spec.length / 2.0
    out = {}

    cross = [(c - h, hi), (c + h, hi), (c + h, c + h), (hi, c + h), (hi, c - h), (c + h, c - h),
             (c + h, lo), (c - h, lo), (c - h, c - h), (lo, c - h), (lo, c + h), (c - h, c + h)]
    segs = boundary_segments(size, size) + _polyline(cross)
    top = hi - half_len - 0.4
    tasks = []
    for gname, goal in (("left", (lo + 0.6, c)), ("bottom", (c, lo + 0.6))):
        tasks.append(TaskSpec(Pose(c, top, -math.pi / 2), goal, 400, f"corridor_{gname}_forward"))
        tasks.append(TaskSpec(Pose(c, top, math.pi / 2), goal, 400, f"corridor_{gname}_backward"))
    out["corridor"] = Challenge(WorldMap(size, size, segs, tuple(t.start for t in tasks),
                                         tuple(t.goal for t in tasks), "corridor"), tuple(tasks))

    wall_y = c
    segs = boundary_segments(size, size) + [
        (1.0, wall_y, size - 1.0, wall_y),
        (2.0, wall_y + 1.5, size - 2.0, wall_y + 1.5),
        (c + 0.5, 0.0, c + 0.5, 1.8),
    ]
    y0 = wall_y - 0.05 - spec.width / 2.0
    goal = (size - 2.0, wall_y - 1.0)
    tasks = [
        TaskSpec(Pose(2.0, y0, 0.0), goal, 400, "wall_forward"),
        TaskSpec(Pose(2.0, y0, math.pi), goal, 400, "wall_backward"),
    ]
    out["wall"] = Challenge(WorldMap(size, size, segs, tuple(t.start for t in tasks), (goal,), "wall"), tuple(tasks))

    mouth = c + 1.0
    back = mouth + slot_depth
    segs = boundary_segments(size, size) + [
        (0.0, mouth, c - h, mouth),
        (c + h, mouth, size, mouth),
        (c - h, mouth, c - h, back),
        (c + h, mouth, c + h, back),
        (c - h, back, c + h, back),
    ]
    y0 = back - half_len - 0.29
    goal = (c, mouth - 2.0)
    tasks = [
        TaskSpec(Pose(c, y0, math.pi / 2), goal, 400, "garage_backward"),
        TaskSpec(Pose(c, y0, -math.pi / 2), goal, 400, "garage_forward"),
    ]
    out["garage"] = Challenge(WorldMap(size, size, segs, tuple(t.start for t in tasks), (goal,), "garage"), tuple(tasks))
    return out


# -- plotting ----------------------------------------------------------------

_COLORS = {Outcome.SUCCESS: "tab:green", Outcome.CRASH: "tab:red", Outcome.TIMEOUT: "tab:orange"}


def plot_trajectories(world: WorldMap, results: Sequence[TaskResult], path: str | Path,
                      spec: RobotSpec = DEFAULT_ROBOT) -> None:
    """Standalone vector overlay of every trajectory on the map (format from the file suffix)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .robot import footprint_corners

    fig, ax = plt.subplots(figsize=(6, 6))
    for x1, y1, x2, y2 in world.segments:
        ax.plot([x1, x2], [y1, y2], color="black", linewidth=1.5)
    for r in results:
        pts = [r.start] if r.start is not None else []
        pts += [s.pose for s in r.trajectory]
        if pts:
            xs, ys = zip(*[(p.x, p.y) for p in pts])
            ax.plot(xs, ys, color=_COLORS.get(r.outcome, "gray"), linewidth=1.0)
            corners = footprint_corners(pts[-1], spec)
            ax.fill(corners[:, 0], corners[:, 1], facecolor="none", edgecolor=_COLORS.get(r.outcome, "gray"))
        if r.start is not None:
            ax.plot(r.start.x, r.start.y, marker="o", color="tab:blue", markersize=4)
        if r.goal is not None:
            ax.plot(r.goal[0], r.goal[1], marker="*", color="tab:purple", markersize=8)
    ax.set_xlim(0, world.width)
    ax.set_ylim(0, world.height)
    ax.set_aspect("equal")
    ax.set_title(world.name)
    fig.savefig(path)
    plt.close(fig)


def plot_returns(episode_returns: Sequence[float], path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(np.arange(1, len(episode_returns) + 1), episode_returns, linewidth=0.8)
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
