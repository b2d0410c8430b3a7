"""Success-gated curriculum over the 5x5 environment grid."""

from __future__ import annotations

from collections import deque

import numpy as np

Cell = tuple[int, int]


class LockedEnvironmentError(KeyError):
    pass


class Curriculum:
    """Tracks a sliding success window per environment and unlocks the 4-adjacent frontier.

    Unlocking happens only when every unlocked environment has a full
    window and each window's success rate is strictly above ``threshold``.
    Sampling weights environments by their failure rate. With
    ``enabled=False`` every environment starts unlocked and is drawn
    uniformly.
    """

    def __init__(self, rows: int = 5, cols: int = 5, window: int = 20, threshold: float = 0.7,
                 enabled: bool = True):
        self.rows, self.cols = rows, cols
        self.window = window
        self.threshold = threshold
        self.enabled = enabled
        cells = [(r, c) for r in range(rows) for c in range(cols)]
        self.unlocked: list[Cell] = [(0, 0)] if enabled else cells
        self.history: dict[Cell, deque] = {cell: deque(maxlen=window) for cell in cells}
        self.counts: dict[Cell, int] = {cell: 0 for cell in cells}

    def _check(self, env: Cell) -> Cell:
        env = (int(env[0]), int(env[1]))
        if env not in self.unlocked:
            raise LockedEnvironmentError(f"environment {env} is locked")
        return env

    def mean_success(self, env: Cell) -> float:
        env = self._check(env)
        h = self.history[env]
        return sum(h) / len(h) if h else 0.0

    def frontier(self) -> list[Cell]:
        have = set(self.unlocked)
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                if (r, c) in have:
                    continue
                if any((r + dr, c + dc) in have for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1))):
                    out.append((r, c))
        return out

    def record_outcome(self, env: Cell, success: bool) -> list[Cell]:
        env = self._check(env)
        self.history[env].append(bool(success))
        self.counts[env] += 1
        ready = all(
            len(self.history[e]) == self.window and self.mean_success(e) > self.threshold
            for e in self.unlocked
        )
        if not ready:
            return []
        new = self.frontier()
        self.unlocked.extend(new)
        return new

    def probabilities(self) -> np.ndarray:
        """Selection probability of each unlocked environment, in ``unlocked`` order."""
        if not self.enabled:
            return np.full(len(self.unlocked), 1.0 / len(self.unlocked))
        fail = np.array([1.0 - self.mean_success(e) for e in self.unlocked])
        total = fail.sum()
        if total <= 0.0:
            return np.full(len(fail), 1.0 / len(fail))
        return fail / total

    def sample_env(self, rng: np.random.Generator) -> Cell:
        p = self.probabilities()
        # inverse-CDF draw so a zero-probability environment can never be picked
        cdf = np.cumsum(p)
        u = rng.random() * cdf[-1]
        i = int(np.searchsorted(cdf, u, side="right"))
        if i >= len(p):
            i = int(np.flatnonzero(p)[-1])
        return self.unlocked[i]

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "window": self.window,
            "threshold": self.threshold,
            "enabled": self.enabled,
            "unlocked": [list(c) for c in self.unlocked],
            "history": {f"{r},{c}": [int(v) for v in h] for (r, c), h in self.history.items()},
            "counts": {f"{r},{c}": n for (r, c), n in self.counts.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Curriculum":
        cur = cls(d["rows"], d["cols"], d["window"], d["threshold"], d["enabled"])
        cur.unlocked = [tuple(c) for c in d["unlocked"]]
        for key, vals in d["history"].items():
            r, c = map(int, key.split(","))
            cur.history[(r, c)].extend(bool(v) for v in vals)
        for key, n in d["counts"].items():
            r, c = map(int, key.split(","))
            cur.counts[(r, c)] = int(n)
        return cur
