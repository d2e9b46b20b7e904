"""Birth-death Metropolis-Hastings sampling of Geyer models.

Each step draws ``y1, y2 ~ U(0, 1)`` first.  ``y1 <= 1/2`` proposes a birth
at a uniform location in the window, accepted when ``y2 < r`` with
``r = |W| / (n + 1) * lambda(u | x)``.  Otherwise a uniformly chosen event is
proposed for deletion and removed when ``y2 < 1 / r`` with
``r = |W| / n * lambda(x_i | x)``.  A death proposal on the empty pattern
leaves the state unchanged.

Deletion swaps the last event into the freed row, so the row order of the
state is a deterministic function of the random stream.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError
from .fileio import atomic_write_text
from .geometry import PointPattern
from .model import GeyerModel, probe_statistics

__all__ = [
    "McmcConfig",
    "McmcTrace",
    "make_rng",
    "mh_step",
    "run_chain",
    "initial_pattern",
    "birth_log_ratio",
    "death_log_ratio",
]

BIRTH, DEATH = 1, 0


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``.

    The stream depends only on the key tuple, so replicate ``i`` gets the same
    draws whether replicates run in order or concurrently.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=keys)))


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, burn-in, seed and initial state.

    ``initial`` is ``"empty"`` or ``("poisson", rate)``; a bare ``"poisson"``
    uses the model's maximal trend value as the rate.
    """

    n_steps: int = 20_000
    burn_in: int = 20_000
    seed: int = 0
    initial: object = "poisson"
    thin: int = 100

    def __post_init__(self):
        if int(self.n_steps) < 1:
            raise InvalidParameterError("n_steps must be a positive integer")
        if not 0 <= int(self.burn_in) <= int(self.n_steps):
            raise InvalidParameterError("burn_in must lie in [0, n_steps]")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if int(self.thin) < 1:
            raise InvalidParameterError("thin must be a positive integer")
        init = self.initial
        if isinstance(init, (list, tuple)):
            if len(init) != 2 or init[0] != "poisson" or not float(init[1]) > 0:
                raise InvalidParameterError(f"bad initial state {init!r}")
            init = ("poisson", float(init[1]))
        elif init not in ("empty", "poisson"):
            raise InvalidParameterError(f"bad initial state {init!r}")
        object.__setattr__(self, "initial", init)
        for name in ("n_steps", "burn_in", "seed", "thin"):
            object.__setattr__(self, name, int(getattr(self, name)))


@dataclass
class McmcTrace:
    """Per-step record of a chain plus its final state."""

    n_points: np.ndarray
    moves: np.ndarray
    accepted: np.ndarray
    final: PointPattern
    burn_in: int = 0
    thin: int = 100
    initial_n: int = 0
    birth_proposed: int = field(init=False)
    birth_accepted: int = field(init=False)
    death_proposed: int = field(init=False)
    death_accepted: int = field(init=False)

    def __post_init__(self):
        births = self.moves == BIRTH
        self.birth_proposed = int(births.sum())
        self.birth_accepted = int((births & self.accepted).sum())
        self.death_proposed = int((~births).sum())
        self.death_accepted = int((~births & self.accepted).sum())

    @property
    def n_steps(self) -> int:
        return len(self.n_points)

    def thinned_counts(self, thin: int | None = None) -> np.ndarray:
        """Point counts after burn-in, every ``thin`` steps."""
        thin = self.thin if thin is None else int(thin)
        return self.n_points[self.burn_in + thin - 1 :: thin]

    def acceptance_rates(self) -> dict:
        def rate(a, p):
            return a / p if p else float("nan")

        return {
            "birth": rate(self.birth_accepted, self.birth_proposed),
            "death": rate(self.death_accepted, self.death_proposed),
        }

    def to_csv(self, path) -> None:
        """Write ``step,n_points,move,accepted`` rows (steps numbered from 1)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "n_points", "move", "accepted"])
        for k, (n, mv, acc) in enumerate(
            zip(self.n_points.tolist(), self.moves.tolist(), self.accepted.tolist()), 1
        ):
            w.writerow([k, n, "birth" if mv == BIRTH else "death", int(acc)])
        atomic_write_text(path, buf.getvalue())


def _accept(y2: float, log_ratio: float) -> bool:
    # y2 < exp(log_ratio), safe against overflow
    return y2 < math.exp(min(log_ratio, 700.0))


def birth_log_ratio(model: GeyerModel, points: np.ndarray, u: np.ndarray) -> float:
    """``log r`` for adding ``u`` to ``points`` (computed from scratch)."""
    log_trend = float(model.trend.log(u)[0])
    if log_trend == -math.inf:
        return -math.inf
    stats = probe_statistics(u, points, model.shape)[0]
    return (
        math.log(model.window.volume())
        - math.log(len(points) + 1)
        + log_trend
        + float(stats @ model.log_gamma)
    )


def death_log_ratio(model: GeyerModel, points: np.ndarray, i: int) -> float:
    """``log r`` of the reverse birth for deleting row ``i`` of ``points``."""
    return birth_log_ratio(model, np.delete(points, i, axis=0), points[i])


def mh_step(model: GeyerModel, pattern: PointPattern, rng: np.random.Generator) -> PointPattern:
    """One birth-death Metropolis-Hastings transition, evaluated from scratch."""
    y1, y2 = rng.random(2)
    window = model.window
    pts = pattern.points
    if y1 <= 0.5:
        u = window.lower + rng.random(3) * window.lengths
        if _accept(y2, birth_log_ratio(model, pts, u)):
            return PointPattern(np.vstack([pts, u]), pattern.window)
        return pattern
    n = len(pts)
    if n == 0:
        return pattern
    i = int(rng.integers(n))
    if _accept(y2, -death_log_ratio(model, pts, i)):
        new = pts.copy()
        new[i] = pts[n - 1]
        return PointPattern(new[: n - 1], pattern.window)
    return pattern


def initial_pattern(model: GeyerModel, config: McmcConfig, rng: np.random.Generator) -> PointPattern:
    window = model.window
    if config.initial == "empty":
        return PointPattern(np.empty((0, 3)), window)
    rate = model.trend.sup() if config.initial == "poisson" else config.initial[1]
    n = int(rng.poisson(rate * window.volume()))
    pts = window.lower + rng.random((n, 3)) * window.lengths
    return PointPattern(pts, window)


class _ChainState:
    """Mutable event buffer with cached per-scale neighbour counts."""

    def __init__(self, model: GeyerModel, points: np.ndarray):
        from .model import neighbour_counts

        self.m = model.m
        self.r = np.array([c.r for c in model.scales])
        self.q = np.array([c.q for c in model.scales])
        self.s = np.array([c.s for c in model.scales])
        self.log_gamma = model.log_gamma
        cap = max(64, 2 * len(points))
        self.pts = np.empty((cap, 3))
        self.counts = np.zeros((cap, self.m), dtype=np.int64)
        self.n = len(points)
        self.pts[: self.n] = points
        self.counts[: self.n] = neighbour_counts(points, model.shape)

    def _near(self, u, skip=-1):
        pts = self.pts[: self.n]
        dxy = np.hypot(pts[:, 0] - u[0], pts[:, 1] - u[1])
        dt = np.abs(pts[:, 2] - u[2])
        near = (dxy[:, None] <= self.r) & (dt[:, None] <= self.q)
        if skip >= 0:
            near[skip] = False
        return near

    def birth_stats(self, u):
        near = self._near(u)
        c = self.counts[: self.n]
        inc = np.minimum(self.s, c + 1) - np.minimum(self.s, c)
        stats = np.minimum(self.s, near.sum(axis=0)) + (near * inc).sum(axis=0)
        return stats, near

    def death_stats(self, i):
        near = self._near(self.pts[i], skip=i)
        c = self.counts[: self.n]
        dec = np.minimum(self.s, c) - np.minimum(self.s, np.maximum(c - 1, 0))
        stats = np.minimum(self.s, c[i]) + (near * dec).sum(axis=0)
        return stats, near

    def add(self, u, near):
        if self.n == len(self.pts):
            self.pts = np.concatenate([self.pts, np.empty_like(self.pts)])
            self.counts = np.concatenate([self.counts, np.zeros_like(self.counts)])
        self.counts[: self.n] += near
        self.pts[self.n] = u
        self.counts[self.n] = near.sum(axis=0)
        self.n += 1

    def remove(self, i, near):
        self.counts[: self.n] -= near
        last = self.n - 1
        self.pts[i] = self.pts[last]
        self.counts[i] = self.counts[last]
        self.n = last


def run_chain(model: GeyerModel, config: McmcConfig, rng: np.random.Generator | None = None) -> McmcTrace:
    """Run ``config.n_steps`` transitions and return the trace.

    The random stream is ``make_rng(config.seed)`` unless ``rng`` is given.
    The initial state is drawn from the same stream before the first step.
    """
    if rng is None:
        rng = make_rng(config.seed)
    window = model.window
    start = initial_pattern(model, config, rng)
    state = _ChainState(model, start.points)
    lower, lengths = window.lower, window.lengths
    log_vol = math.log(window.volume())
    log_gamma = state.log_gamma
    trend = model.trend
    const_log_trend = math.log(trend.beta) if trend.is_constant else None

    steps = config.n_steps
    n_points = np.empty(steps, dtype=np.int64)
    moves = np.empty(steps, dtype=np.int8)
    accepted = np.zeros(steps, dtype=bool)
    for k in range(steps):
        y1, y2 = rng.random(2)
        if y1 <= 0.5:
            moves[k] = BIRTH
            u = lower + rng.random(3) * lengths
            lt = const_log_trend if const_log_trend is not None else float(trend.log(u)[0])
            if lt != -math.inf:
                stats, near = state.birth_stats(u)
                log_r = log_vol - math.log(state.n + 1) + lt + float(stats @ log_gamma)
                if _accept(y2, log_r):
                    state.add(u, near)
                    accepted[k] = True
        else:
            moves[k] = DEATH
            if state.n > 0:
                i = int(rng.integers(state.n))
                p = state.pts[i]
                lt = const_log_trend if const_log_trend is not None else float(trend.log(p)[0])
                stats, near = state.death_stats(i)
                log_r = log_vol - math.log(state.n) + lt + float(stats @ log_gamma)
                if _accept(y2, -log_r):
                    state.remove(i, near)
                    accepted[k] = True
        n_points[k] = state.n
    final = PointPattern(state.pts[: state.n].copy(), window)
    return McmcTrace(
        n_points, moves, accepted, final, config.burn_in, config.thin, initial_n=len(start)
    )
