import math

import numpy as np
import pytest

from maernav.replay import (
    EpisodeBuffer,
    PoseTransition,
    ReplayBuffer,
    Transition,
    mirror_episode,
    mirror_reward,
    negate_action,
    on_episode_end,
)
from maernav.robot import Action, Pose, integrate_unicycle, relative_goal
from maernav.sim import NavEnv, Observation, Outcome
from maernav.world import TaskSpec, empty_room


def obs_at(pose, goal, lidar_val=1.0, v=0.0, w=0.0, m=36):
    d, phi = relative_goal(pose, goal)
    return Observation(np.full(m, lidar_val), d, phi, v, w)


def straight_episode(poses, action, goal, success=True):
    ep = []
    for t in range(len(poses) - 1):
        last = t == len(poses) - 2
        r = 10.0 if (last and success) else 2.0 * (relative_goal(poses[t], goal)[0] - relative_goal(poses[t + 1], goal)[0])
        ep.append(PoseTransition(
            obs_at(poses[t], goal, lidar_val=t + 1.0), action, r,
            obs_at(poses[t + 1], goal, lidar_val=t + 2.0, v=action.v, w=action.w), last,
            poses[t], poses[t + 1],
        ))
    return ep


def dummy(i, dim=40):
    o = Observation.from_array(np.full(dim, float(i)))
    return Transition(o, Action(0.1 * i, 0.0), float(i), o, False)


class TestReplayBuffer:
    def test_push_one(self):
        b = ReplayBuffer(4, 40)
        b.push(dummy(1))
        assert len(b) == 1
        assert b[0].reward == 1.0

    def test_ring_eviction(self):
        b = ReplayBuffer(2, 40)
        for i in range(3):
            b.push(dummy(i))
        assert len(b) == 2
        assert [b[k].reward for k in range(2)] == [1.0, 2.0]

    def test_size_capped(self):
        b = ReplayBuffer(1000, 4)
        t = dummy(1, 4)
        for _ in range(10_000):
            b.push(t)
        assert len(b) == 1000

    def test_sample_single(self):
        b = ReplayBuffer(8, 40)
        b.push(dummy(3))
        batch = b.sample_minibatch(4, np.random.default_rng(0))
        assert (batch.reward == 3.0).all() and batch.obs.shape == (4, 40)

    def test_sample_empty(self):
        with pytest.raises(ValueError):
            ReplayBuffer(8, 40).sample_minibatch(1, np.random.default_rng(0))

    def test_sample_deterministic(self):
        b = ReplayBuffer(16, 40)
        b.extend(dummy(i) for i in range(10))
        a = b.sample_indices(50, np.random.default_rng(9))
        c = b.sample_indices(50, np.random.default_rng(9))
        assert np.array_equal(a, c)

    def test_sample_uniform(self):
        b = ReplayBuffer(16, 40)
        b.extend(dummy(i) for i in range(10))
        n = 100_000
        counts = np.bincount(b.sample_indices(n, np.random.default_rng(1)), minlength=10)
        sigma = math.sqrt(n * 0.1 * 0.9)
        assert np.abs(counts - n / 10).max() < 5 * sigma

    def test_dump_round_trip(self):
        b = ReplayBuffer(3, 40)
        b.extend(dummy(i) for i in range(5))
        again = ReplayBuffer.load(b.dump())
        assert again.dump() == b.dump()
        assert [again[k].reward for k in range(3)] == [2.0, 3.0, 4.0]

    def test_dump_bad_version(self):
        text = ReplayBuffer(3, 40).dump().replace('"version": 1', '"version": 99')
        with pytest.raises(ValueError, match="version"):
            ReplayBuffer.load(text)

    def test_state_arrays_round_trip(self):
        b = ReplayBuffer(4, 40)
        b.extend(dummy(i) for i in range(6))
        c = ReplayBuffer.from_state_arrays(b.state_arrays())
        assert c.dump() == b.dump()


class TestMirrorPrimitives:
    def test_negate(self):
        assert negate_action(Action(0.5, 0.0)) == (-0.5, -0.0)
        assert negate_action(Action(0.0, 0.0)) == (0.0, 0.0)
        a = Action(0.3, -1.2)
        assert negate_action(negate_action(a)) == a

    @pytest.mark.parametrize("cur, nxt, expect", [
        (0.5, 0.1, (10.0, True)),
        (1.0, 0.5, (1.0, False)),
        (0.3, 0.3, (0.0, False)),
    ])
    def test_mirror_reward(self, cur, nxt, expect):
        assert mirror_reward(cur, nxt) == expect


class TestMirrorEpisode:
    def test_one_step(self):
        p0 = Pose(0.0, 0.0, 0.0)
        p1 = integrate_unicycle(p0, Action(0.5, 0.0), 1.0)
        assert p1 == (0.5, 0.0, 0.0)
        out = mirror_episode(straight_episode([p0, p1], Action(0.5, 0.0), (0.5, 0.0)), p0)
        assert len(out) == 1
        t = out[0]
        assert (t.obs.goal_d, t.obs.goal_phi) == (0.5, math.pi)
        assert t.action == (-0.5, -0.0)
        assert t.next_obs.goal_d == 0.0
        assert (t.reward, t.done) == (10.0, True)

    def test_two_step(self):
        poses = [Pose(0.0, 0.0, 0.0), Pose(0.5, 0.0, 0.0), Pose(1.0, 0.0, 0.0)]
        out = mirror_episode(straight_episode(poses, Action(0.5, 0.0), (1.0, 0.0)), poses[0])
        assert [(t.obs.goal_d, t.next_obs.goal_d) for t in out] == [(1.0, 0.5), (0.5, 0.0)]
        assert [(t.reward, t.done) for t in out] == [(1.0, False), (10.0, True)]

    def test_lidar_and_velocity_reused(self):
        poses = [Pose(0.0, 0.0, 0.0), Pose(0.5, 0.0, 0.0), Pose(1.0, 0.0, 0.0)]
        ep = straight_episode(poses, Action(0.5, 0.0), (1.0, 0.0))
        out = mirror_episode(ep, poses[0])
        for src, m in zip(reversed(ep), out):
            assert np.array_equal(m.obs.lidar, src.next_obs.lidar)
            assert np.array_equal(m.next_obs.lidar, src.obs.lidar)
            assert (m.obs.v, m.obs.w) == (src.next_obs.v, src.next_obs.w)
            assert m.action == negate_action(src.action)

    def test_rejects_failure_and_empty(self):
        poses = [Pose(0.0, 0.0, 0.0), Pose(0.5, 0.0, 0.0)]
        with pytest.raises(ValueError):
            mirror_episode(straight_episode(poses, Action(0.5, 0.0), (3.0, 0.0), success=False), poses[0])
        with pytest.raises(ValueError):
            mirror_episode([], poses[0])

    def test_replay_retraces_poses(self):
        env = NavEnv(empty_room(6.0))
        task = TaskSpec(Pose(1.5, 1.5, 0.3), (2.6, 2.4))
        env.reset(task)
        rng = np.random.default_rng(7)
        poses = [task.start]
        actions = []
        while not env.done:
            d, phi = relative_goal(env.pose, task.goal)
            a = Action(0.5 * max(math.cos(phi), 0.2), float(np.clip(2 * phi + rng.normal(0, 0.2), -1.5, 1.5)))
            env.step(a)
            actions.append(env.last_action)
            poses.append(env.pose)
        assert env.outcome.kind is Outcome.SUCCESS
        p = poses[-1]
        for k, a in enumerate(reversed(actions)):
            p = integrate_unicycle(p, negate_action(a), 0.1)
            ref = poses[-2 - k]
            assert math.hypot(p.x - ref.x, p.y - ref.y) < 1e-9


class TestEpisodeEnd:
    def make(self, n):
        poses = [Pose(0.05 * i, 0.0, 0.0) for i in range(n + 1)]
        return poses, straight_episode(poses, Action(0.5, 0.0), (poses[-1].x, 0.0))

    def test_success_grows_buffer(self):
        poses, ep = self.make(10)
        b = ReplayBuffer(100, 40)
        store = EpisodeBuffer(ep)
        assert on_episode_end(True, b, store, poses[0]) == 10
        assert len(b) == 10 and len(store) == 0

    def test_failure_leaves_buffer(self):
        poses, ep = self.make(10)
        b = ReplayBuffer(100, 40)
        store = EpisodeBuffer(ep)
        assert on_episode_end(False, b, store, poses[0]) == 0
        assert len(b) == 0 and len(store) == 0

    def test_disabled(self):
        poses, ep = self.make(4)
        b = ReplayBuffer(100, 40)
        assert on_episode_end(True, b, EpisodeBuffer(ep), poses[0], enabled=False) == 0
        assert len(b) == 0

    def test_consecutive_episodes_do_not_mix(self):
        b = ReplayBuffer(100, 40)
        store = EpisodeBuffer()
        poses, ep = self.make(3)
        for t in ep:
            store.store(t)
        on_episode_end(True, b, store, poses[0])
        poses2 = [Pose(2.0, 0.05 * i, math.pi / 2) for i in range(6)]
        for t in straight_episode(poses2, Action(0.5, 0.0), (2.0, 0.25)):
            store.store(t)
        on_episode_end(True, b, store, poses2[0])
        assert len(b) == 8
        # second episode's mirrored goal is its own start
        for k in range(3, 8):
            assert b[k].next_obs.goal_d <= 0.25 + 1e-6
