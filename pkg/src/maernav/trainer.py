"""Training loop: curriculum sampling, rollouts, mirror augmentation, SAC updates, checkpoints."""

from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .curriculum import Curriculum
from .evaluation import PolicyAdapter, build_challenge_scenarios, run_task_suite
from .learner import SACAgent, TrainerConfig
from .replay import EpisodeBuffer, PoseTransition, ReplayBuffer, Transition, on_episode_end
from .robot import Action, RobotSpec
from .sim import NavEnv, Outcome, RewardConfig
from .world import TaskSpec, WorldMap, empty_room, generate_training_grid, load_scenario

log = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
EVAL_LOG_NAME = "eval_log.jsonl"
CKPT_NAME = "checkpoint.npz"
RECENT_WINDOW = 100

ROBOT_KEYS = {"minpool_sectors", "lidar_beams", "lidar_max_range", "lidar_offset"}


@dataclass
class TrainRunConfig:
    total_steps: int = 200_000
    seed: int = 0
    checkpoint_every: int = 100  # episodes
    eval_every: int = 200  # episodes; challenge fixtures, deterministic policy
    out_dir: str = "runs/default"
    mirror_enabled: bool = True
    curriculum_enabled: bool = True
    maps: str = "grid"  # "grid", "empty_room", or a scenario file / directory of them
    max_steps: int = 400
    min_goal_distance: float = 1.0
    max_goal_distance: float = 0.0  # 0 disables the cap
    curriculum_window: int = 20
    curriculum_threshold: float = 0.7
    checkpoint_buffer: bool = True  # False writes policy-only checkpoints that cannot be resumed
    stop_success_rate: float = 0.0  # stop early once the trailing-100 success rate reaches this; 0 disables

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if self.checkpoint_every < 1 or self.eval_every < 1:
            raise ValueError("cadences must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.stop_success_rate <= 1.0:
            raise ValueError("stop_success_rate must lie in [0, 1]")


class ConfigError(ValueError):
    pass


def _coerce(raw: str, typ: type):
    if typ is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    return typ(raw)


def parse_config(text: str) -> tuple[TrainRunConfig, TrainerConfig, RobotSpec]:
    """``key = value`` lines ('#' comments) over run, learner, and LiDAR fields."""
    run_types = {f.name: type(getattr(TrainRunConfig(), f.name)) for f in fields(TrainRunConfig)}
    learn_types = TrainerConfig.field_types()
    robot_types = {k: type(getattr(RobotSpec(), k)) for k in ROBOT_KEYS}
    run_kw, learn_kw, robot_kw = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        for types, target in ((run_types, run_kw), (learn_types, learn_kw), (robot_types, robot_kw)):
            if key in types:
                try:
                    target[key] = _coerce(value, types[key])
                except ValueError as exc:
                    raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
                break
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        return TrainRunConfig(**run_kw), TrainerConfig(**learn_kw), RobotSpec(**robot_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def dump_config(run: TrainRunConfig, learn: TrainerConfig, spec: RobotSpec) -> str:
    lines = [f"{k} = {v}" for k, v in asdict(run).items()]
    lines += [f"{k} = {v}" for k, v in asdict(learn).items()]
    lines += [f"{k} = {getattr(spec, k)}" for k in sorted(ROBOT_KEYS)]
    return "\n".join(lines) + "\n"


def load_maps(spec: str, robot: RobotSpec) -> list[list[WorldMap]]:
    if spec == "grid":
        return generate_training_grid(robot)
    if spec == "empty_room":
        return [[empty_room(6.0, spec=robot)]]
    path = Path(spec)
    if path.is_dir():
        files = sorted(path.glob("*.scn")) or sorted(path.glob("*.txt"))
        if not files:
            raise FileNotFoundError(f"no scenario files in {path}")
        return [[load_scenario(f.read_text(), robot) for f in files]]
    return [[load_scenario(path.read_text(), robot)]]


def sample_task(world: WorldMap, rng: np.random.Generator, run: TrainRunConfig) -> TaskSpec:
    starts, goals = world.start_poses, world.goal_points
    if not starts or not goals:
        raise ValueError(f"map {world.name} has no annotated starts or goals")
    cap = run.max_goal_distance if run.max_goal_distance > 0 else math.inf
    for _ in range(200):
        s = starts[int(rng.integers(len(starts)))]
        g = goals[int(rng.integers(len(goals)))]
        d = math.hypot(g[0] - s.x, g[1] - s.y)
        if run.min_goal_distance <= d <= cap:
            return TaskSpec(s, g, run.max_steps)
    raise ValueError(f"map {world.name}: no start/goal pair satisfies the distance limits")


class Trainer:
    """Sequential Algorithm-1 style loop. All randomness flows from ``run.seed``."""

    def __init__(self, run: TrainRunConfig, learn: TrainerConfig = TrainerConfig(), spec: RobotSpec = RobotSpec(),
                 reward_cfg: RewardConfig | None = None, maps: list[list[WorldMap]] | None = None):
        self.run = run
        self.learn = learn
        self.spec = spec
        self.reward_cfg = reward_cfg or RewardConfig(gamma=learn.gamma)
        self.maps = maps if maps is not None else load_maps(run.maps, spec)
        rows, cols = len(self.maps), len(self.maps[0])
        self.curriculum = Curriculum(rows, cols, run.curriculum_window, run.curriculum_threshold, run.curriculum_enabled)
        ss = np.random.SeedSequence(run.seed)
        env_ss, sample_ss, explore_ss = ss.spawn(3)
        self.env_rng = np.random.default_rng(env_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.agent = SACAgent(learn, spec, seed=run.seed)
        self.buffer = ReplayBuffer(learn.buffer_capacity, spec.obs_dim)
        self.episode_buffer = EpisodeBuffer()
        self.total_steps = 0
        self.episode = 0
        self.recent = deque(maxlen=RECENT_WINDOW)
        self.out = Path(run.out_dir)

    # -- one episode -------------------------------------------------------

    def _action(self, obs) -> Action:
        if self.total_steps < self.learn.warmup_steps:
            v = self.explore_rng.uniform(-self.spec.v_max, self.spec.v_max)
            w = self.explore_rng.uniform(-self.spec.w_max, self.spec.w_max)
            return Action(float(v), float(w))
        return self.agent.act(obs.as_array())

    def run_episode(self) -> dict:
        env_id = self.curriculum.sample_env(self.env_rng)
        world = self.maps[env_id[0]][env_id[1]]
        task = sample_task(world, self.env_rng, self.run)
        env = NavEnv(world, self.spec, self.reward_cfg)
        obs = env.reset(task)
        pose = task.start
        ret = 0.0
        learn_steps = 0
        done = False
        while not done:
            a = self._action(obs)
            if self.total_steps >= self.learn.warmup_steps:
                learn_steps += 1
            next_obs, r, done, next_pose = env.step(a)
            a = env.last_action
            kind = env.log[-1].kind
            # timeouts are not terminal for bootstrapping
            terminal = kind in (Outcome.SUCCESS, Outcome.CRASH)
            self.buffer.push(Transition(obs, a, r, next_obs, terminal))
            self.episode_buffer.store(PoseTransition(obs, a, r, next_obs, terminal, pose, next_pose))
            obs, pose = next_obs, next_pose
            ret += r
            self.total_steps += 1
        success = env.outcome.kind is Outcome.SUCCESS
        mirrored = on_episode_end(success, self.buffer, self.episode_buffer, task.start, self.reward_cfg,
                                  enabled=self.run.mirror_enabled)
        losses = []
        for _ in range(learn_steps * self.learn.utd_ratio):
            batch = self.buffer.sample_minibatch(self.learn.batch_size, self.sample_rng)
            losses.append(self.agent.update(batch))
        self.curriculum.record_outcome(env_id, success)
        self.episode += 1
        row = {
            "episode": self.episode,
            "env": list(env_id),
            "outcome": env.outcome.kind.value,
            "steps": env.t,
            "return": ret,
            "sr_window": self.curriculum.mean_success(env_id),
            "total_steps": self.total_steps,
            "buffer": len(self.buffer),
            "mirrored": mirrored,
            "updates": self.agent.updates,
            "unlocked": len(self.curriculum.unlocked),
        }
        if losses:
            arr = np.array(losses, dtype=float)
            row["losses"] = {k: float(v) for k, v in zip(("critic1", "critic2", "actor", "alpha_loss", "alpha"), arr.mean(axis=0))}
        return row

    # -- loop ----------------------------------------------------------------

    def train(self) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "config.txt").write_text(dump_config(self.run, self.learn, self.spec))
        ckpt = self.out / CKPT_NAME
        fresh = self.episode == 0
        if fresh:
            (self.out / EVAL_LOG_NAME).unlink(missing_ok=True)
        # a fresh run starts its log over; a resumed one continues it
        with open(self.out / LOG_NAME, "w" if fresh else "a") as fh:
            while self.total_steps < self.run.total_steps:
                row = self.run_episode()
                fh.write(json.dumps(row) + "\n")
                fh.flush()
                self.recent.append(row["outcome"] == Outcome.SUCCESS.value)
                if self.episode % self.run.eval_every == 0:
                    self.evaluate()
                if self.episode % self.run.checkpoint_every == 0:
                    self.save(ckpt)
                if self.reached_target():
                    log.info("trailing success rate %.2f reached at step %d", self.trailing_success(), self.total_steps)
                    break
        self.save(ckpt)
        return ckpt

    def trailing_success(self) -> float:
        return sum(self.recent) / len(self.recent) if self.recent else 0.0

    def reached_target(self) -> bool:
        stop = self.run.stop_success_rate
        return stop > 0 and len(self.recent) == RECENT_WINDOW and self.trailing_success() >= stop

    def evaluate(self) -> dict:
        policy = PolicyAdapter(self.agent)
        rows = {}
        for name, ch in build_challenge_scenarios(spec=self.spec).items():
            res = run_task_suite(policy, ch.world, ch.tasks, seed=self.run.seed, spec=self.spec, reward_cfg=self.reward_cfg)
            rows.update({r.task_id: r.outcome.value for r in res})
        with open(self.out / EVAL_LOG_NAME, "a") as fh:
            fh.write(json.dumps({"episode": self.episode, "total_steps": self.total_steps, "results": rows}) + "\n")
        return rows

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        arrays = {f"agent/{k}": v for k, v in self.agent.state_arrays().items()}
        if self.run.checkpoint_buffer:
            arrays.update({f"buffer/{k}": v for k, v in self.buffer.state_arrays().items()})
        meta = {
            "run_config": asdict(self.run),
            "trainer_config": asdict(self.learn),
            "robot": {k: getattr(self.spec, k) for k in sorted(ROBOT_KEYS)},
            "curriculum": self.curriculum.to_dict(),
            "rng": {
                "env": self.env_rng.bit_generator.state,
                "sample": self.sample_rng.bit_generator.state,
                "explore": self.explore_rng.bit_generator.state,
            },
            "total_steps": self.total_steps,
            "episode": self.episode,
            "recent": [int(x) for x in self.recent],
        }
        checkpoint.save(path, meta, arrays)

    @classmethod
    def resume(cls, path: str | Path, total_steps: int | None = None, out_dir: str | None = None,
               maps: list[list[WorldMap]] | None = None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; ``total_steps`` optionally extends the budget."""
        meta, arrays = checkpoint.load(path)
        if "buffer/meta" not in arrays:
            raise checkpoint.CheckpointError(f"{path}: policy-only checkpoint, cannot resume training")
        run_kw = dict(meta["run_config"])
        if total_steps is not None:
            run_kw["total_steps"] = total_steps
        if out_dir is not None:
            run_kw["out_dir"] = out_dir
        run = TrainRunConfig(**run_kw)
        learn = TrainerConfig(**meta["trainer_config"])
        spec = RobotSpec(**meta["robot"])
        tr = cls(run, learn, spec, maps=maps)
        tr.agent.load_state_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("agent/")})
        tr.buffer = ReplayBuffer.from_state_arrays({k[7:]: v for k, v in arrays.items() if k.startswith("buffer/")})
        tr.curriculum = Curriculum.from_dict(meta["curriculum"])
        tr.env_rng.bit_generator.state = meta["rng"]["env"]
        tr.sample_rng.bit_generator.state = meta["rng"]["sample"]
        tr.explore_rng.bit_generator.state = meta["rng"]["explore"]
        tr.total_steps = int(meta["total_steps"])
        tr.episode = int(meta["episode"])
        tr.recent.extend(bool(x) for x in meta.get("recent", []))
        return tr


def load_agent(path: str | Path) -> SACAgent:
    """Inference-only agent from a checkpoint."""
    meta, arrays = checkpoint.load(path)
    learn = TrainerConfig(**meta["trainer_config"])
    spec = RobotSpec(**meta["robot"])
    agent = SACAgent(learn, spec, seed=meta["run_config"]["seed"])
    agent.load_state_arrays({k[6:]: v for k, v in arrays.items() if k.startswith("agent/")})
    return agent
