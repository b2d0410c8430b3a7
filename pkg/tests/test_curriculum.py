import math

import numpy as np
import pytest

from maernav.curriculum import Curriculum, LockedEnvironmentError


def feed(cur, env, outcomes):
    unlocked = []
    for o in outcomes:
        unlocked += cur.record_outcome(env, bool(o))
    return unlocked


def is_connected(cells):
    cells = set(cells)
    seen, stack = set(), [(0, 0)]
    while stack:
        c = stack.pop()
        if c in seen or c not in cells:
            continue
        seen.add(c)
        stack += [(c[0] + 1, c[1]), (c[0] - 1, c[1]), (c[0], c[1] + 1), (c[0], c[1] - 1)]
    return seen == cells


class TestMeanSuccess:
    def test_window(self):
        cur = Curriculum()
        feed(cur, (0, 0), [1, 1, 0, 1])
        assert cur.mean_success((0, 0)) == 0.75

    def test_empty(self):
        assert Curriculum().mean_success((0, 0)) == 0.0

    def test_last_twenty(self):
        cur = Curriculum(threshold=2.0)
        feed(cur, (0, 0), [0] * 5 + [1] * 20)
        assert cur.mean_success((0, 0)) == 1.0
        assert cur.counts[(0, 0)] == 25

    def test_locked(self):
        cur = Curriculum()
        with pytest.raises(LockedEnvironmentError):
            cur.mean_success((2, 2))
        with pytest.raises(LockedEnvironmentError):
            cur.record_outcome((0, 1), True)


class TestUnlock:
    def test_first_unlock(self):
        cur = Curriculum()
        new = feed(cur, (0, 0), [1] * 15 + [0] * 5)
        assert new == [(0, 1), (1, 0)]

    def test_strict_threshold(self):
        cur = Curriculum()
        assert feed(cur, (0, 0), [1] * 14 + [0] * 6) == []
        assert cur.unlocked == [(0, 0)]

    def test_needs_full_window(self):
        cur = Curriculum()
        assert feed(cur, (0, 0), [1] * 19) == []

    def test_saturation(self):
        cur = Curriculum(enabled=False)
        assert len(cur.unlocked) == 25
        for env in list(cur.unlocked):
            assert feed(cur, env, [1] * 20) == []

    def test_grows_connected(self):
        cur = Curriculum()
        rng = np.random.default_rng(0)
        for _ in range(8000):
            env = cur.sample_env(rng)
            before = list(cur.unlocked)
            cur.record_outcome(env, rng.random() < 0.97)
            assert cur.unlocked[: len(before)] == before
            assert is_connected(cur.unlocked)
        assert len(cur.unlocked) == 25

    def test_replay_same_timeline(self):
        def timeline(seed):
            cur, rng, out = Curriculum(), np.random.default_rng(seed), []
            for i in range(3000):
                env = cur.sample_env(rng)
                out.append((i, tuple(cur.record_outcome(env, rng.random() < 0.85))))
            return [t for t in out if t[1]]

        assert timeline(5) == timeline(5)


class TestSampling:
    def test_probabilities(self):
        cur = Curriculum()
        feed(cur, (0, 0), [1] * 20)
        cur2 = Curriculum()
        cur2.unlocked += [(0, 1)]
        feed(cur2, (0, 0), [1, 0])
        feed(cur2, (0, 1), [0, 1])
        assert cur2.probabilities().tolist() == [0.5, 0.5]
        cur2.history[(0, 0)].clear()
        cur2.history[(0, 1)].clear()
        feed(cur2, (0, 0), [1])
        feed(cur2, (0, 1), [0])
        assert cur2.probabilities().tolist() == [0.0, 1.0]

    def test_all_perfect_uniform(self):
        cur = Curriculum()
        cur.unlocked += [(0, 1)]
        feed(cur, (0, 0), [1])
        feed(cur, (0, 1), [1])
        assert cur.probabilities().tolist() == [0.5, 0.5]

    def test_perfect_never_sampled(self):
        cur = Curriculum()
        cur.unlocked += [(0, 1), (1, 0)]
        feed(cur, (0, 0), [1])
        feed(cur, (0, 1), [1, 0])
        rng = np.random.default_rng(0)
        assert all(cur.sample_env(rng) != (0, 0) for _ in range(2000))

    def test_sums_to_one(self):
        cur = Curriculum()
        cur.unlocked += [(0, 1), (1, 0), (1, 1)]
        rng = np.random.default_rng(2)
        for env in cur.unlocked:
            feed(cur, env, rng.random(7) < 0.4)
        assert math.isclose(cur.probabilities().sum(), 1.0, abs_tol=1e-12)

    def test_disabled_uniform(self):
        cur = Curriculum(enabled=False)
        feed(cur, (3, 3), [1, 1, 1])
        assert np.allclose(cur.probabilities(), 1 / 25)


def test_dict_round_trip():
    cur = Curriculum()
    feed(cur, (0, 0), [1] * 18 + [0, 1])
    feed(cur, (0, 1), [1, 0])
    again = Curriculum.from_dict(cur.to_dict())
    assert again.to_dict() == cur.to_dict()
    rng_a, rng_b = np.random.default_rng(1), np.random.default_rng(1)
    assert [cur.sample_env(rng_a) for _ in range(50)] == [again.sample_env(rng_b) for _ in range(50)]
