"""Replay storage and mirror augmentation of successful episodes.

Successful episodes are replayed backwards: the original start becomes the
goal, every action is negated, and the resulting synthetic transitions are
added to the main buffer next to the real ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .robot import Action, Pose, relative_goal
from .sim import Observation, RewardConfig

BUFFER_FORMAT = "maernav-buffer"
BUFFER_VERSION = 1


@dataclass(frozen=True)
class Transition:
    obs: Observation
    action: Action
    reward: float
    next_obs: Observation
    done: bool


@dataclass(frozen=True)
class PoseTransition(Transition):
    pose: Pose = Pose(0.0, 0.0, 0.0)
    next_pose: Pose = Pose(0.0, 0.0, 0.0)


class Batch(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer backed by preallocated float32 arrays."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.obs = np.zeros((self.capacity, self.obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((self.capacity, self.obs_dim), dtype=np.float32)
        self.action = np.zeros((self.capacity, 2), dtype=np.float32)
        self.reward = np.zeros(self.capacity, dtype=np.float32)
        self.done = np.zeros(self.capacity, dtype=np.float32)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        i = self.cursor
        self.obs[i] = t.obs.as_array()
        self.next_obs[i] = t.next_obs.as_array()
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.done[i] = float(t.done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, ts: Iterable[Transition]) -> None:
        for t in ts:
            self.push(t)

    def _slot(self, k: int) -> int:
        """Storage row of the k-th oldest record."""
        if not 0 <= k < self.size:
            raise IndexError(k)
        start = self.cursor if self.size == self.capacity else 0
        return (start + k) % self.capacity

    def __getitem__(self, k: int) -> Transition:
        i = self._slot(k)
        return Transition(
            Observation.from_array(self.obs[i]),
            Action(float(self.action[i, 0]), float(self.action[i, 1])),
            float(self.reward[i]),
            Observation.from_array(self.next_obs[i]),
            bool(self.done[i]),
        )

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=n)

    def sample_minibatch(self, n: int, rng: np.random.Generator) -> Batch:
        """Uniform draws with replacement over the stored records."""
        idx = self.sample_indices(n, rng)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx], self.done[idx])

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "obs": self.obs[: self.size].copy(),
            "next_obs": self.next_obs[: self.size].copy(),
            "action": self.action[: self.size].copy(),
            "reward": self.reward[: self.size].copy(),
            "done": self.done[: self.size].copy(),
            "meta": np.array([self.capacity, self.obs_dim, self.cursor, self.size], dtype=np.int64),
        }

    @classmethod
    def from_state_arrays(cls, arrays: dict[str, np.ndarray]) -> "ReplayBuffer":
        capacity, obs_dim, cursor, size = (int(v) for v in arrays["meta"])
        buf = cls(capacity, obs_dim)
        for name in ("obs", "next_obs", "action", "reward", "done"):
            getattr(buf, name)[:size] = arrays[name]
        buf.cursor, buf.size = cursor, size
        return buf

    def dump(self) -> str:
        """Line-delimited JSON, oldest record first, after a one-line header."""
        header = {"format": BUFFER_FORMAT, "version": BUFFER_VERSION, "capacity": self.capacity,
                  "obs_dim": self.obs_dim, "size": self.size}
        lines = [json.dumps(header)]
        for k in range(self.size):
            i = self._slot(k)
            lines.append(json.dumps({
                "obs": self.obs[i].tolist(),
                "action": self.action[i].tolist(),
                "reward": float(self.reward[i]),
                "next_obs": self.next_obs[i].tolist(),
                "done": bool(self.done[i]),
            }))
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "ReplayBuffer":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty buffer dump")
        header = json.loads(lines[0])
        if header.get("format") != BUFFER_FORMAT:
            raise ValueError("not a buffer dump")
        if header.get("version") != BUFFER_VERSION:
            raise ValueError(f"unsupported buffer dump version {header.get('version')!r}")
        buf = cls(header["capacity"], header["obs_dim"])
        for line in lines[1:]:
            rec = json.loads(line)
            buf.push(Transition(
                Observation.from_array(rec["obs"]), Action(*rec["action"]), rec["reward"],
                Observation.from_array(rec["next_obs"]), rec["done"],
            ))
        return buf


def negate_action(a: Action) -> Action:
    return Action(-a[0], -a[1])


def mirror_reward(d_cur: float, d_next: float, cfg: RewardConfig = RewardConfig()) -> tuple[float, bool]:
    # no crash branch: mirrored segments come from collision-free episodes
    if d_next < cfg.epsilon_goal:
        return cfg.r_s, True
    return cfg.c1 * (d_cur - d_next), False


def _retarget(obs: Observation, pose: Pose, goal) -> Observation:
    d, phi = relative_goal(pose, goal)
    return Observation(obs.lidar, d, phi, obs.v, obs.w)


def mirror_episode(ep: list[PoseTransition], start_pose: Pose, cfg: RewardConfig = RewardConfig()) -> list[Transition]:
    """Synthetic backward transitions for one successful episode.

    Record ``t`` becomes a transition from ``p_{t+1}`` to ``p_t`` under the
    negated action with the episode's start position as the goal. Output
    order runs from the original goal back to the start.
    """
    if not ep:
        raise ValueError("cannot mirror an empty episode")
    if not ep[-1].done or ep[-1].reward != cfg.r_s:
        raise ValueError("mirror augmentation requires a successful episode")
    goal = (start_pose.x, start_pose.y)
    out = []
    for tr in reversed(ep):
        cur = _retarget(tr.next_obs, tr.next_pose, goal)
        nxt = _retarget(tr.obs, tr.pose, goal)
        r, done = mirror_reward(cur.goal_d, nxt.goal_d, cfg)
        out.append(Transition(cur, negate_action(tr.action), r, nxt, done))
    return out


class EpisodeBuffer(list):
    """Per-episode pose-augmented storage; emptied at every episode boundary."""

    def store(self, t: PoseTransition) -> None:
        self.append(t)


def on_episode_end(success: bool, buffer: ReplayBuffer, episode: EpisodeBuffer, start_pose: Pose,
                   cfg: RewardConfig = RewardConfig(), enabled: bool = True) -> int:
    """Push mirrored transitions for a success, then clear the episode store. Returns the count pushed."""
    pushed = 0
    if success and enabled and episode:
        mirrored = mirror_episode(list(episode), start_pose, cfg)
        buffer.extend(mirrored)
        pushed = len(mirrored)
    episode.clear()
    return pushed
