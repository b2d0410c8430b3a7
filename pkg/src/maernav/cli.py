"""Command-line entry point: ``maernav <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .evaluation import (
    PolicyAdapter,
    TaskResult,
    build_challenge_scenarios,
    compute_metrics,
    format_results,
    parse_results,
    plot_returns,
    plot_trajectories,
    run_task_suite,
)
from .robot import Pose, normalize_angle
from .sim import parse_trajectory
from .trainer import LOG_NAME, ConfigError, Trainer, load_agent, parse_config
from .world import ScenarioError, TaskSpec, dump_scenario, generate_training_grid, load_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_INVALID = 4
EXIT_IO = 5

log = logging.getLogger("maernav")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one-line diagnostic, distinct exit code for usage problems
        raise CliError(f"{self.prog}: {message}", EXIT_USAGE)


def _need_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {path}", EXIT_MISSING)
    return p


def _load_map(path: str):
    p = _need_file(path, "map")
    try:
        return load_scenario(p.read_text())
    except ScenarioError as exc:
        raise CliError(f"invalid map {path}: {exc}", EXIT_INVALID) from None


def _load_agent(path: str):
    p = _need_file(path, "checkpoint")
    try:
        return load_agent(p)
    except checkpoint.CheckpointError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None


def parse_tasks(text: str, default_steps: int = 400) -> list[TaskSpec]:
    """One task per line: ``id x y theta goal_x goal_y [max_steps]``; '#' starts a comment."""
    tasks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (6, 7):
            raise ValueError(f"line {lineno}: expected 6 or 7 fields, got {len(parts)}")
        try:
            x, y, th, gx, gy = (float(v) for v in parts[1:6])
            steps = int(parts[6]) if len(parts) == 7 else default_steps
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        tasks.append(TaskSpec(Pose(x, y, normalize_angle(th)), (gx, gy), steps, parts[0]))
    if len({t.task_id for t in tasks}) != len(tasks):
        raise ValueError("duplicate task ids")
    return tasks


def format_tasks(tasks) -> str:
    return "".join(
        f"{t.task_id} {t.start.x!r} {t.start.y!r} {t.start.theta!r} {t.goal[0]!r} {t.goal[1]!r} {t.max_steps}\n"
        for t in tasks
    )


def _metrics_json(results: dict[str, list[TaskResult]]) -> str:
    out = {}
    for name, m in compute_metrics(results).items():
        out[name] = {
            "SR": m.SR, "CR": m.CR, "TR": m.TR,
            "AES_star": None if math.isnan(m.AES_star) else m.AES_star,
            "MANS_mean": m.MANS[0], "MANS_std": m.MANS[1], "n_tasks": m.n_tasks,
        }
    return json.dumps(out, indent=1, sort_keys=True) + "\n"


def _write_suite(out: Path, results: list[TaskResult], name: str) -> None:
    (out / "results.txt").write_text(format_results(results))
    (out / "metrics.json").write_text(_metrics_json({name: results}))


# -- subcommands --------------------------------------------------------------


def cmd_train(args) -> int:
    if args.resume:
        _need_file(args.resume, "checkpoint")
        try:
            tr = Trainer.resume(args.resume, total_steps=args.steps, out_dir=args.out)
        except checkpoint.CheckpointError as exc:
            raise CliError(str(exc), EXIT_INVALID) from None
    else:
        if not args.config:
            raise CliError("train: --config is required unless --resume is given", EXIT_USAGE)
        text = _need_file(args.config, "config").read_text()
        try:
            run, learn, spec = parse_config(text)
            if args.seed is not None:
                run.seed = args.seed
            run.out_dir = args.out
            if args.no_mirror:
                run.mirror_enabled = False
            if args.no_curriculum:
                run.curriculum_enabled = False
            if args.steps is not None:
                run.total_steps = args.steps
            if run.maps not in ("grid", "empty_room"):
                _need_file(run.maps, "map set")
            tr = Trainer(run, learn, spec)
        except (ConfigError, ValueError) as exc:
            raise CliError(f"invalid config: {exc}", EXIT_INVALID) from None
        except ScenarioError as exc:
            raise CliError(f"invalid map: {exc}", EXIT_INVALID) from None
    ckpt = tr.train()
    print(f"trained {tr.episode} episodes, {tr.total_steps} steps -> {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    agent = _load_agent(args.checkpoint)
    world = _load_map(args.map)
    try:
        tasks = parse_tasks(_need_file(args.tasks, "task file").read_text())
    except ValueError as exc:
        raise CliError(f"invalid task file: {exc}", EXIT_INVALID) from None
    out = Path(args.out)
    try:
        results = run_task_suite(PolicyAdapter(agent), world, tasks, seed=args.seed, spec=agent.spec,
                                 start_jitter=args.jitter, jobs=args.jobs, log_dir=out / "trajectories")
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    _write_suite(out, results, world.name)
    sr = sum(r.success for r in results) / len(results) if results else 0.0
    print(f"{len(results)} tasks, SR {sr:.3f} -> {out}")
    return EXIT_OK


def cmd_challenge(args) -> int:
    agent = _load_agent(args.checkpoint)
    out = Path(args.out)
    policy = PolicyAdapter(agent)
    all_results = []
    for name, ch in build_challenge_scenarios(spec=agent.spec).items():
        sub = out / name
        sub.mkdir(parents=True, exist_ok=True)
        (sub / "map.scn").write_text(dump_scenario(ch.world))
        tasks = []
        for t in ch.tasks:
            for k in range(args.runs):
                tid = t.task_id if args.runs == 1 else f"{t.task_id}_{k}"
                tasks.append(TaskSpec(t.start, t.goal, t.max_steps, tid))
        (sub / "tasks.txt").write_text(format_tasks(tasks))
        results = run_task_suite(policy, ch.world, tasks, seed=args.seed, spec=agent.spec,
                                 start_jitter=args.jitter, jobs=args.jobs, log_dir=sub / "trajectories")
        _write_suite(sub, results, name)
        all_results += results
        for r in results:
            print(f"{r.task_id} {r.outcome.value} {r.steps}")
    (out / "results.txt").write_text(format_results(all_results))
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.buffer:
        from .replay import ReplayBuffer

        text = _need_file(args.buffer, "buffer dump").read_text()
        try:
            buf = ReplayBuffer.load(text)
        except (ValueError, KeyError) as exc:
            raise CliError(f"invalid buffer dump: {exc}", EXIT_INVALID) from None
        n = len(buf)
        print(f"buffer: {n}/{buf.capacity} records, obs_dim {buf.obs_dim}")
        if n:
            r = buf.reward[:n] if buf.size < buf.capacity else buf.reward
            d = buf.done[:n] if buf.size < buf.capacity else buf.done
            print(f"reward mean {float(np.mean(r)):.6g} min {float(np.min(r)):.6g} max {float(np.max(r)):.6g}")
            print(f"terminal records {int(d.sum())}")
            for k in range(min(args.head, n)):
                t = buf[k]
                print(f"[{k}] a=({t.action.v:.4g}, {t.action.w:.4g}) r={t.reward:.6g} done={t.done} "
                      f"goal=({t.obs.goal_d:.4g}, {t.obs.goal_phi:.4g})")
        return EXIT_OK
    p = _need_file(args.checkpoint, "checkpoint")
    try:
        meta, arrays = checkpoint.load(p)
    except checkpoint.CheckpointError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    print(f"checkpoint {p}: version {meta['version']}, episode {meta.get('episode')}, steps {meta.get('total_steps')}")
    for key in ("run_config", "trainer_config", "robot"):
        if key in meta:
            print(f"{key}: " + ", ".join(f"{k}={v}" for k, v in sorted(meta[key].items())))
    if "curriculum" in meta:
        print(f"curriculum unlocked: {len(meta['curriculum']['unlocked'])}")
    total = 0
    for entry in meta["arrays"]:
        total += int(np.prod(entry["shape"])) if entry["shape"] else 1
        if args.arrays:
            print(f"  {entry['name']} {tuple(entry['shape'])} {entry['dtype']}")
    print(f"{len(meta['arrays'])} arrays, {total} values")
    return EXIT_OK


def cmd_gen_maps(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = generate_training_grid()
    for r, row in enumerate(grid):
        for c, m in enumerate(row):
            (out / f"env_{r}_{c}.scn").write_text(dump_scenario(m))
    print(f"wrote {sum(len(row) for row in grid)} maps to {out}")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = Path(args.out)
    if args.log:
        rows = [json.loads(line) for line in _need_file(args.log, "training log").read_text().splitlines() if line.strip()]
        out.parent.mkdir(parents=True, exist_ok=True)
        plot_returns([r["return"] for r in rows], out)
        return EXIT_OK
    if not (args.results and args.map):
        raise CliError("plot: need --results and --map, or --log", EXIT_USAGE)
    rpath = _need_file(args.results, "results file")
    world = _load_map(args.map)
    try:
        results = parse_results(rpath.read_text())
    except (ValueError, KeyError) as exc:
        raise CliError(f"invalid results file: {exc}", EXIT_INVALID) from None
    traj_dir = Path(args.trajectories) if args.trajectories else rpath.parent / "trajectories"
    tasks_file = rpath.parent / "tasks.txt"
    starts = {}
    if tasks_file.exists():
        starts = {t.task_id: t for t in parse_tasks(tasks_file.read_text())}
    for r in results:
        f = traj_dir / f"{r.task_id}.traj"
        if f.exists():
            r.trajectory = parse_trajectory(f.read_text())
        if r.task_id in starts:
            r.start, r.goal = starts[r.task_id].start, starts[r.task_id].goal
    out.parent.mkdir(parents=True, exist_ok=True)
    plot_trajectories(world, results, out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="maernav", description="Mirror-augmented SAC navigation: training, evaluation, and tooling.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="run the training loop")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--seed", type=int, help="master seed (overrides the config value)")
    t.add_argument("--out", required=True, help="output directory for logs and checkpoints")
    t.add_argument("--no-mirror", action="store_true", help="disable mirror augmentation (raw ablation)")
    t.add_argument("--no-curriculum", action="store_true", help="sample all environments uniformly")
    t.add_argument("--steps", type=int, help="override total_steps")
    t.add_argument("--resume", help="continue from a checkpoint written by train")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="run a task suite with the deterministic policy")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--map", required=True, help="scenario file")
    e.add_argument("--tasks", required=True, help="task file: 'id x y theta goal_x goal_y [max_steps]' per line")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out", required=True)
    e.add_argument("--jobs", type=int, default=1, help="parallel task workers")
    e.add_argument("--jitter", type=float, default=0.0, help="start pose perturbation in metres (default 0)")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("challenge", help="corridor, wall, and garage fixtures, forward and backward")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--runs", type=int, default=1, help="repetitions per task (use with --jitter)")
    c.add_argument("--jitter", type=float, default=0.0)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_challenge)

    i = sub.add_parser("inspect", help="summarize a buffer dump or a checkpoint")
    g = i.add_mutually_exclusive_group(required=True)
    g.add_argument("--buffer")
    g.add_argument("--checkpoint")
    i.add_argument("--head", type=int, default=5, help="buffer records to print")
    i.add_argument("--arrays", action="store_true", help="list every checkpoint array")
    i.set_defaults(func=cmd_inspect)

    m = sub.add_parser("gen-maps", help="write the 25 training maps as scenario files")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_gen_maps)

    pl = sub.add_parser("plot", help="trajectory overlay (or return curve with --log) as a vector file")
    pl.add_argument("--results")
    pl.add_argument("--map")
    pl.add_argument("--trajectories", help="directory of .traj files (default: next to results)")
    pl.add_argument("--log", help=f"training {LOG_NAME} to plot returns from instead")
    pl.add_argument("--out", required=True, help="output file; format from suffix (.svg, .pdf)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
