"""Multi-scale space-time Geyer saturation model.

The unnormalised density of a pattern ``x`` is

    f(x) ∝ prod_{p in x} lambda(p) prod_j gamma_j ** min(s_j, n_j(p; x))

where ``n_j(p; x)`` counts the other events of ``x`` in the cylinder of
radii ``(r_j, q_j)`` centred at ``p``.  Everything below works in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DomainError, InvalidParameterError
from .geometry import PointPattern, SpacetimeWindow, pairwise_within, within_cylinder

__all__ = [
    "ScaleComponent",
    "TrendFunction",
    "GeyerModel",
    "neighbour_counts",
    "probe_statistics",
    "data_statistics",
    "log_density_unnormalized",
    "papangelou",
    "log_papangelou",
    "sufficient_statistics",
    "strauss_papangelou",
]


@dataclass(frozen=True)
class ScaleComponent:
    """One interaction scale: strength ``gamma``, radii ``(r, q)``, saturation ``s``."""

    gamma: float
    r: float
    q: float
    s: float

    def __post_init__(self):
        for name in ("gamma", "r", "q"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParameterError(f"{name} must be positive and finite, got {v}")
            object.__setattr__(self, name, v)
        s = float(self.s)
        if not (s >= 0 and math.isfinite(s)):
            raise InvalidParameterError(f"s must be nonnegative and finite, got {s}")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True, eq=False)
class TrendFunction:
    """First-order term ``lambda(x, y, t) = beta * mu(x, y, t)``.

    With ``raster`` left as ``None`` the trend is the constant ``beta``.
    Otherwise ``raster`` is an ``(nx, ny, nt)`` array of ``mu`` values on an
    even partition of ``window``, looked up piecewise-constantly.
    """

    beta: float = 1.0
    raster: np.ndarray | None = None
    window: SpacetimeWindow | None = None

    def __post_init__(self):
        beta = float(self.beta)
        if not (beta > 0 and math.isfinite(beta)):
            raise InvalidParameterError(f"beta must be positive and finite, got {beta}")
        object.__setattr__(self, "beta", beta)
        if self.raster is not None:
            r = np.array(self.raster, dtype=float)
            if r.ndim != 3 or min(r.shape) < 1:
                raise InvalidParameterError("raster must be a non-empty 3-d array")
            if not np.all(np.isfinite(r)) or np.any(r < 0):
                raise InvalidParameterError("raster values must be finite and nonnegative")
            if self.window is None:
                raise InvalidParameterError("a raster trend needs its window")
            r.setflags(write=False)
            object.__setattr__(self, "raster", r)

    @property
    def is_constant(self) -> bool:
        return self.raster is None

    def mu(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if self.raster is None:
            return np.ones(len(pts))
        shape = np.array(self.raster.shape)
        w = self.window
        cell = np.floor((pts - w.lower) / w.lengths * shape).astype(np.int64)
        cell = np.clip(cell, 0, shape - 1)
        return self.raster[cell[:, 0], cell[:, 1], cell[:, 2]]

    def __call__(self, points) -> np.ndarray:
        return self.beta * self.mu(points)

    def log(self, points) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self(points))

    def log_mu(self, points) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.mu(points))

    def sup(self) -> float:
        return self.beta * (1.0 if self.raster is None else float(self.raster.max()))

    def with_beta(self, beta) -> "TrendFunction":
        return TrendFunction(beta, self.raster, self.window)


@dataclass(frozen=True, eq=False)
class GeyerModel:
    """Trend plus an ordered, nonempty list of interaction scales on a window."""

    trend: TrendFunction
    scales: tuple = field(default_factory=tuple)
    window: SpacetimeWindow = field(default_factory=SpacetimeWindow)

    def __post_init__(self):
        scales = tuple(self.scales)
        if not scales:
            raise InvalidParameterError("a Geyer model needs at least one scale")
        if not all(isinstance(c, ScaleComponent) for c in scales):
            raise InvalidParameterError("scales must be ScaleComponent instances")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def homogeneous(cls, beta, gamma, r, q, s, window=None) -> "GeyerModel":
        """Constant-trend model from per-scale parameter sequences."""
        if not (len(gamma) == len(r) == len(q) == len(s)):
            raise InvalidParameterError("per-scale parameter lists differ in length")
        return cls(
            TrendFunction(beta),
            tuple(ScaleComponent(*args) for args in zip(gamma, r, q, s)),
            window or SpacetimeWindow(),
        )

    @property
    def m(self) -> int:
        return len(self.scales)

    @property
    def gamma(self) -> np.ndarray:
        return np.array([c.gamma for c in self.scales])

    @property
    def log_gamma(self) -> np.ndarray:
        return np.log(self.gamma)

    @property
    def shape(self) -> list:
        """Irregular parameters as ``[(r_j, q_j, s_j), ...]``."""
        return [(c.r, c.q, c.s) for c in self.scales]

    def with_gamma(self, gamma: Sequence[float]) -> "GeyerModel":
        if len(gamma) != self.m:
            raise InvalidParameterError("gamma vector has the wrong length")
        return GeyerModel(
            self.trend,
            tuple(ScaleComponent(g, c.r, c.q, c.s) for g, c in zip(gamma, self.scales)),
            self.window,
        )

    def with_trend(self, trend: TrendFunction) -> "GeyerModel":
        return GeyerModel(trend, self.scales, self.window)

    # thin method wrappers, convenient for interactive use
    def log_density(self, pattern):
        return log_density_unnormalized(self, pattern)

    def papangelou(self, pattern, point):
        return papangelou(self, pattern, point)


def _shape_of(shape_or_model):
    if isinstance(shape_or_model, GeyerModel):
        return shape_or_model.shape
    return [tuple(float(v) for v in rqs) for rqs in shape_or_model]


def neighbour_counts(points, shape) -> np.ndarray:
    """``(n, m)`` integer array of other-point counts ``n_j(x_i; x)``.

    Self-exclusion is by row index, so coincident events count each other.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    shape = _shape_of(shape)
    out = np.zeros((len(pts), len(shape)), dtype=np.int64)
    for j, (r, q, _s) in enumerate(shape):
        adj = pairwise_within(pts, pts, r, q)
        np.fill_diagonal(adj, False)
        out[:, j] = adj.sum(axis=1)
    return out


def probe_statistics(probes, points, shape, counts=None) -> np.ndarray:
    """Sufficient statistics ``S_j(u, x)`` for probes ``u`` that are *added* to ``x``.

    ``S_j(u, x) = min(s_j, n_j(u; x)) + sum_{p in C_j[u]} [min(s_j, n_j(p; x) + 1)
    - min(s_j, n_j(p; x))]``.  ``counts`` may pass precomputed
    :func:`neighbour_counts` of ``points``.
    """
    probes = np.asarray(probes, dtype=float).reshape(-1, 3)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    shape = _shape_of(shape)
    if counts is None:
        counts = neighbour_counts(pts, shape)
    out = np.zeros((len(probes), len(shape)))
    if len(pts) == 0:
        return out
    for j, (r, q, s) in enumerate(shape):
        near = pairwise_within(probes, pts, r, q)
        c = counts[:, j]
        increment = np.minimum(s, c + 1) - np.minimum(s, c)
        out[:, j] = np.minimum(s, near.sum(axis=1)) + near @ increment
    return out


def data_statistics(points, shape, counts=None) -> np.ndarray:
    """Sufficient statistics ``S_j(x_i, x minus x_i)`` for every event of ``x``.

    Row ``i`` is the statistic of event ``i`` against the remaining events,
    i.e. the log conditional intensity of a data point decomposes as
    ``log lambda(x_i) + log(gamma) @ row_i``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    shape = _shape_of(shape)
    out = np.zeros((len(pts), len(shape)))
    for j, (r, q, s) in enumerate(shape):
        adj = pairwise_within(pts, pts, r, q)
        np.fill_diagonal(adj, False)
        c = adj.sum(axis=1) if counts is None else counts[:, j]
        # c >= 1 for any neighbour, so c - 1 is a valid count
        decrement = np.minimum(s, c) - np.minimum(s, np.maximum(c - 1, 0))
        out[:, j] = np.minimum(s, c) + adj @ decrement
    return out


def log_density_unnormalized(model: GeyerModel, pattern: PointPattern) -> float:
    """Log of the unnormalised density; ``-inf`` when some event has zero trend."""
    if len(pattern) == 0:
        return 0.0
    log_trend = model.trend.log(pattern.points)
    if np.any(np.isneginf(log_trend)):
        return -math.inf
    counts = neighbour_counts(pattern.points, model.shape)
    s = np.array([c.s for c in model.scales])
    interaction = np.minimum(s, counts) @ model.log_gamma
    return float(log_trend.sum() + interaction.sum())


def _check_probe(pattern, point):
    p = np.asarray(point, dtype=float).reshape(3)
    if not np.all(np.isfinite(p)) or not pattern.window.contains(p)[0]:
        raise DomainError(f"point {tuple(p)} lies outside the window")
    return p


def sufficient_statistics(model, pattern: PointPattern, point) -> np.ndarray:
    """Vector ``S(u, x)`` with ``log papangelou = log lambda(u) + log(gamma) @ S``.

    If ``point`` coincides with an event of ``pattern`` (first match), the
    statistic is taken against the pattern with that event removed.
    """
    p = _check_probe(pattern, point)
    shape = _shape_of(model)
    idx = pattern.index_of(p)
    pts = pattern.points if idx < 0 else np.delete(pattern.points, idx, axis=0)
    return probe_statistics(p, pts, shape)[0]


def log_papangelou(model: GeyerModel, pattern: PointPattern, point) -> float:
    p = _check_probe(pattern, point)
    idx = pattern.index_of(p)
    others = pattern.points if idx < 0 else np.delete(pattern.points, idx, axis=0)
    # 0/0 := 0: a zero-trend event elsewhere makes both densities vanish
    if len(others) and np.any(model.trend(others) == 0):
        return -math.inf
    log_trend = float(model.trend.log(p)[0])
    if log_trend == -math.inf:
        return -math.inf
    stats = probe_statistics(p, others, model.shape)[0]
    return log_trend + float(stats @ model.log_gamma)


def papangelou(model: GeyerModel, pattern: PointPattern, point) -> float:
    """Papangelou conditional intensity ``lambda(u | x)``.

    For ``u`` not in ``x`` this is ``f(x + u) / f(x)``; for ``u`` in ``x`` it
    is ``f(x) / f(x - u)``.
    """
    return math.exp(log_papangelou(model, pattern, point))


def strauss_papangelou(lam, gamma, r, q, pattern: PointPattern, point) -> float:
    """Conditional intensity ``lam * gamma ** n(C_r^q[u])`` of the space-time
    Strauss process, with ``gamma`` in ``(0, 1]``."""
    if not (lam > 0):
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if not (0 < gamma <= 1):
        raise InvalidParameterError(f"Strauss gamma must lie in (0, 1], got {gamma}")
    if not (r > 0 and q > 0):
        raise InvalidParameterError(f"cylinder radii must be positive, got r={r}, q={q}")
    p = _check_probe(pattern, point)
    near = within_cylinder(pattern.points, p, r, q)
    near &= ~np.all(pattern.points == p, axis=1)
    return lam * gamma ** int(near.sum())
