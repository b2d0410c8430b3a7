"""Episode engine: observations, reward, termination, and trajectory logs."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .robot import (
    DEFAULT_ROBOT,
    Action,
    Pose,
    RobotSpec,
    cast_lidar,
    footprint_collides,
    integrate_unicycle,
    minpool,
    relative_goal,
)
from .world import TaskSpec, WorldMap


class Outcome(str, enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    CRASH = "crash"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: Outcome
    steps: int


@dataclass(frozen=True)
class RewardConfig:
    c1: float = 2.0
    r_s: float = 10.0
    r_c: float = -10.0
    gamma: float = 0.99
    epsilon_goal: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.epsilon_goal <= 0:
            raise ValueError("epsilon_goal must be positive")


@dataclass(frozen=True, eq=False)
class Observation:
    lidar: np.ndarray
    goal_d: float
    goal_phi: float
    v: float
    w: float

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.lidar, [self.goal_d, self.goal_phi, self.v, self.w]])

    @classmethod
    def from_array(cls, arr) -> "Observation":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[:-4].copy(), float(arr[-4]), float(arr[-3]), float(arr[-2]), float(arr[-1]))

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))


def compute_reward(d_t: float, d_next: float, outcome: Outcome, cfg: RewardConfig = RewardConfig()) -> float:
    if outcome is Outcome.SUCCESS:
        return cfg.r_s
    if outcome is Outcome.CRASH:
        return cfg.r_c
    return cfg.c1 * (d_t - d_next)


def observe(p: Pose, world: WorldMap, goal, v: float, w: float, spec: RobotSpec = DEFAULT_ROBOT) -> Observation:
    d, phi = relative_goal(p, goal)
    return Observation(minpool(cast_lidar(p, world, spec), spec.minpool_sectors), d, phi, float(v), float(w))


@dataclass
class StepRecord:
    step: int
    pose: Pose
    action: Action
    reward: float
    kind: Outcome


def format_step(rec: StepRecord) -> str:
    vals = (*rec.pose, *rec.action, rec.reward)
    return f"{rec.step} " + " ".join(format(float(v), ".9g") for v in vals) + f" {rec.kind.value}"


def parse_trajectory(text: str) -> list[StepRecord]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        nums = [float(v) for v in parts[1:7]]
        out.append(StepRecord(int(parts[0]), Pose(*nums[:3]), Action(*nums[3:5]), nums[5], Outcome(parts[7])))
    return out


class EpisodeError(RuntimeError):
    pass


@dataclass
class NavEnv:
    """One navigation episode on a fixed map.

    ``reset`` places the robot at the task start; ``step`` applies one
    clamped velocity command for ``spec.dt`` seconds.
    """

    world: WorldMap
    spec: RobotSpec = DEFAULT_ROBOT
    reward_cfg: RewardConfig = field(default_factory=RewardConfig)

    def __post_init__(self):
        self.pose: Pose | None = None
        self.goal = None
        self.max_steps = 400
        self.t = 0
        self.done = True
        self.obs: Observation | None = None
        self.log: list[StepRecord] = []

    def reset(self, task: TaskSpec) -> Observation:
        if footprint_collides(task.start, self.world, self.spec):
            raise EpisodeError(f"task start {tuple(task.start)} is in collision")
        self.pose = task.start
        self.goal = task.goal
        self.max_steps = task.max_steps
        self.t = 0
        self.done = False
        self.log = []
        self.obs = observe(self.pose, self.world, self.goal, 0.0, 0.0, self.spec)
        return self.obs

    def step(self, action) -> tuple[Observation, float, bool, Pose]:
        if self.done:
            raise EpisodeError("step() called on a finished episode; call reset()")
        a = self.spec.clamp(Action(*action))
        d_t = self.obs.goal_d
        pose = integrate_unicycle(self.pose, a, self.spec.dt)
        self.t += 1
        obs = observe(pose, self.world, self.goal, a.v, a.w, self.spec)
        if footprint_collides(pose, self.world, self.spec):
            kind = Outcome.CRASH
        elif obs.goal_d < self.reward_cfg.epsilon_goal:
            kind = Outcome.SUCCESS
        elif self.t >= self.max_steps:
            kind = Outcome.TIMEOUT
        else:
            kind = Outcome.RUNNING
        r = compute_reward(d_t, obs.goal_d, kind, self.reward_cfg)
        self.done = kind is not Outcome.RUNNING
        self.pose, self.obs = pose, obs
        self.last_action = a
        self.log.append(StepRecord(self.t, pose, a, r, kind))
        return obs, r, self.done, pose

    @property
    def outcome(self) -> EpisodeOutcome:
        kind = self.log[-1].kind if self.log else Outcome.RUNNING
        return EpisodeOutcome(kind, self.t)

    def trajectory_text(self) -> str:
        return "".join(format_step(r) + "\n" for r in self.log)

