import json
import math

import numpy as np
import pytest

from maernav import checkpoint
from maernav.learner import TrainerConfig
from maernav.robot import Action, RobotSpec
from maernav.trainer import (
    CKPT_NAME,
    LOG_NAME,
    ConfigError,
    Trainer,
    TrainRunConfig,
    dump_config,
    load_agent,
    parse_config,
)

TINY = TrainerConfig(hidden=16, n_layers=2, batch_size=16, warmup_steps=60, buffer_capacity=20_000)


def run_cfg(tmp_path, name="run", **kw):
    base = dict(total_steps=300, seed=3, out_dir=str(tmp_path / name), maps="empty_room", max_steps=60,
                max_goal_distance=2.5, checkpoint_every=1000, eval_every=1000, curriculum_enabled=False)
    base.update(kw)
    return TrainRunConfig(**base)


def same_checkpoint(a, b):
    ma, aa = checkpoint.load(a)
    mb, ab = checkpoint.load(b)
    ma["run_config"].pop("out_dir")
    mb["run_config"].pop("out_dir")
    return ma == mb and aa.keys() == ab.keys() and all(np.array_equal(aa[k], ab[k]) for k in aa)


def homing(trainer):
    def act(obs):
        phi = obs.goal_phi
        return Action(0.5 * max(math.cos(phi), 0.0), float(np.clip(2.0 * phi, -1.5, 1.5)))
    trainer._action = act
    return trainer


class TestConfigFile:
    def test_round_trip(self):
        run = TrainRunConfig(total_steps=1234, seed=9, mirror_enabled=False)
        learn = TrainerConfig(hidden=32, tau=0.01)
        spec = RobotSpec(minpool_sectors=24)
        r2, l2, s2 = parse_config(dump_config(run, learn, spec))
        assert (r2, l2, s2.minpool_sectors) == (run, learn, 24)

    def test_comments_and_sci_notation(self):
        run, learn, _ = parse_config("# hi\ntotal_steps = 1e4  # budget\nbatch_size = 64\n")
        assert run.total_steps == 10_000 and learn.batch_size == 64

    @pytest.mark.parametrize("text", ["nope = 1\n", "seed = abc\n", "tau = 0\n", "total_steps = 0\n", "just words\n",
                                      "mirror_enabled = maybe\n"])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_cadence_validation(self):
        with pytest.raises(ValueError):
            TrainRunConfig(checkpoint_every=0)


class TestEpisodes:
    def test_mirror_doubles_success(self, tmp_path):
        tr = homing(Trainer(run_cfg(tmp_path), TINY))
        for _ in range(6):
            before = len(tr.buffer)
            row = tr.run_episode()
            grown = len(tr.buffer) - before
            n = row["steps"]
            assert grown == (2 * n if row["outcome"] == "success" else n)
            assert len(tr.episode_buffer) == 0

    def test_raw_never_mirrors(self, tmp_path):
        tr = homing(Trainer(run_cfg(tmp_path, mirror_enabled=False), TINY))
        for _ in range(4):
            before = len(tr.buffer)
            row = tr.run_episode()
            assert len(tr.buffer) - before == row["steps"]
            assert row["mirrored"] == 0

    def test_update_count_tracks_steps(self, tmp_path):
        tr = Trainer(run_cfg(tmp_path), TINY)
        total = 0
        for _ in range(5):
            row = tr.run_episode()
            total += row["steps"]
            assert row["updates"] == max(0, total - TINY.warmup_steps)

    def test_budget_below_warmup(self, tmp_path):
        cfg = TrainerConfig(hidden=16, n_layers=2, batch_size=16, warmup_steps=10_000, buffer_capacity=5000)
        tr = Trainer(run_cfg(tmp_path, total_steps=100), cfg)
        tr.train()
        assert tr.agent.updates == 0

    def test_early_stop(self, tmp_path):
        cfg = TrainerConfig(hidden=16, n_layers=2, batch_size=16, warmup_steps=10**6, buffer_capacity=50_000)
        tr = homing(Trainer(run_cfg(tmp_path, total_steps=10**6, stop_success_rate=0.5), cfg))
        tr.train()
        rows = [json.loads(l) for l in (tmp_path / "run" / LOG_NAME).read_text().splitlines()]
        assert len(rows) >= 100 and tr.total_steps < 10**6
        wins = [r["outcome"] == "success" for r in rows]
        assert sum(wins[-100:]) >= 50 and sum(wins[-101:-1]) < 50 or len(rows) == 100

    def test_log_rows(self, tmp_path):
        tr = Trainer(run_cfg(tmp_path), TINY)
        tr.train()
        rows = [json.loads(l) for l in (tmp_path / "run" / LOG_NAME).read_text().splitlines()]
        assert rows[-1]["total_steps"] >= 300
        assert {"episode", "env", "outcome", "steps", "return", "sr_window", "buffer", "losses"} <= set(rows[-1])


class TestDeterminism:
    def test_identical_logs(self, tmp_path):
        Trainer(run_cfg(tmp_path, "a"), TINY).train()
        Trainer(run_cfg(tmp_path, "b"), TINY).train()
        assert (tmp_path / "a" / LOG_NAME).read_bytes() == (tmp_path / "b" / LOG_NAME).read_bytes()
        assert same_checkpoint(tmp_path / "a" / CKPT_NAME, tmp_path / "b" / CKPT_NAME)

    def test_rerun_same_dir(self, tmp_path):
        Trainer(run_cfg(tmp_path, "a"), TINY).train()
        first = (tmp_path / "a" / LOG_NAME).read_bytes()
        Trainer(run_cfg(tmp_path, "a"), TINY).train()
        assert (tmp_path / "a" / LOG_NAME).read_bytes() == first

    def test_seed_matters(self, tmp_path):
        Trainer(run_cfg(tmp_path, "a"), TINY).train()
        Trainer(run_cfg(tmp_path, "b", seed=4), TINY).train()
        assert (tmp_path / "a" / LOG_NAME).read_bytes() != (tmp_path / "b" / LOG_NAME).read_bytes()


class TestResume:
    def test_split_run_matches(self, tmp_path):
        Trainer(run_cfg(tmp_path, "full", total_steps=400), TINY).train()
        Trainer(run_cfg(tmp_path, "split", total_steps=150), TINY).train()
        tr = Trainer.resume(tmp_path / "split" / CKPT_NAME, total_steps=400)
        tr.train()
        assert (tmp_path / "full" / LOG_NAME).read_bytes() == (tmp_path / "split" / LOG_NAME).read_bytes()
        assert same_checkpoint(tmp_path / "full" / CKPT_NAME, tmp_path / "split" / CKPT_NAME)

    def test_zero_step_resume_idempotent(self, tmp_path):
        Trainer(run_cfg(tmp_path), TINY).train()
        ck = tmp_path / "run" / CKPT_NAME
        tr = Trainer.resume(ck)
        tr.save(tmp_path / "again.npz")
        assert ck.read_bytes() == (tmp_path / "again.npz").read_bytes()

    def test_version_mismatch(self, tmp_path, monkeypatch):
        Trainer(run_cfg(tmp_path, total_steps=80), TINY).train()
        meta, arrays = checkpoint.load(tmp_path / "run" / CKPT_NAME)
        monkeypatch.setattr(checkpoint, "VERSION", 7)
        checkpoint.save(tmp_path / "v.npz", meta, arrays)
        monkeypatch.undo()
        with pytest.raises(checkpoint.CheckpointVersionError):
            Trainer.resume(tmp_path / "v.npz")

    def test_flipped_byte(self, tmp_path):
        Trainer(run_cfg(tmp_path, total_steps=80), TINY).train()
        raw = bytearray((tmp_path / "run" / CKPT_NAME).read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        (tmp_path / "x.npz").write_bytes(bytes(raw))
        with pytest.raises(checkpoint.CheckpointError):
            Trainer.resume(tmp_path / "x.npz")

    def test_corrupt(self, tmp_path):
        (tmp_path / "bad.npz").write_bytes(b"not a zip")
        with pytest.raises(checkpoint.CheckpointError):
            Trainer.resume(tmp_path / "bad.npz")

    def test_policy_only(self, tmp_path):
        Trainer(run_cfg(tmp_path, total_steps=80, checkpoint_buffer=False), TINY).train()
        ck = tmp_path / "run" / CKPT_NAME
        assert load_agent(ck).act(np.ones(40), deterministic=True) is not None
        with pytest.raises(checkpoint.CheckpointError):
            Trainer.resume(ck)

    def test_curriculum_restored(self, tmp_path):
        tr = Trainer(run_cfg(tmp_path, maps="grid", curriculum_enabled=True, max_goal_distance=0.0,
                             total_steps=120), TINY)
        tr.train()
        again = Trainer.resume(tmp_path / "run" / CKPT_NAME)
        assert again.curriculum.to_dict() == tr.curriculum.to_dict()
        assert again.env_rng.bit_generator.state == tr.env_rng.bit_generator.state
