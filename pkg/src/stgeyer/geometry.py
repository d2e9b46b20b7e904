"""Space-time windows, point patterns and cylindrical neighbourhood counts.

A cylinder of spatial radius ``r`` and temporal half-height ``q`` centred at
``(x, y, t)`` contains every event ``(a, b, c)`` with
``hypot(x - a, y - b) <= r`` and ``|t - c| <= q``.  Both tests are inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exceptions import DomainError, InvalidParameterError

__all__ = [
    "SpacetimeWindow",
    "EventPoint",
    "PointPattern",
    "NeighborIndex",
    "cylinder_count",
    "neighbor_index",
    "within_cylinder",
    "pairwise_within",
]


def _check_interval(name, interval):
    lo, hi = (float(v) for v in interval)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise InvalidParameterError(
            f"{name} must be a finite interval of positive length, got {interval!r}"
        )
    return lo, hi


@dataclass(frozen=True)
class SpacetimeWindow:
    """Rectangular observation window ``S x T``.

    Parameters
    ----------
    x_range, y_range : tuple of float
        Closed spatial intervals.
    t_range : tuple of float
        Closed time interval.
    """

    x_range: tuple = (0.0, 1.0)
    y_range: tuple = (0.0, 1.0)
    t_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "x_range", _check_interval("x_range", self.x_range))
        object.__setattr__(self, "y_range", _check_interval("y_range", self.y_range))
        object.__setattr__(self, "t_range", _check_interval("t_range", self.t_range))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.t_range[0]])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.t_range[1]])

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    def area(self) -> float:
        """Area of the spatial region ``S``."""
        return (self.x_range[1] - self.x_range[0]) * (self.y_range[1] - self.y_range[0])

    def volume(self) -> float:
        """Space-time volume ``|S x T|``."""
        return self.area() * (self.t_range[1] - self.t_range[0])

    def contains(self, points) -> np.ndarray:
        """Boolean mask of rows of ``points`` (shape ``(n, 3)``) inside the window."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def to_dict(self) -> dict:
        return {"x": list(self.x_range), "y": list(self.y_range), "t": list(self.t_range)}

    @classmethod
    def from_dict(cls, d) -> "SpacetimeWindow":
        return cls(tuple(d["x"]), tuple(d["y"]), tuple(d["t"]))


class EventPoint(NamedTuple):
    """A single event: planar location ``(x, y)`` and time ``t``."""

    x: float
    y: float
    t: float


@dataclass(frozen=True, eq=False)
class PointPattern:
    """Finite set of events inside a window.

    ``points`` is stored as a read-only ``(n, 3)`` float array with columns
    ``x, y, t``.  Row order is preserved and is significant for
    reproducibility of the samplers.
    """

    points: np.ndarray
    window: SpacetimeWindow = field(default_factory=SpacetimeWindow)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidParameterError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidParameterError("point coordinates must be finite")
        inside = self.window.contains(pts) if len(pts) else np.ones(0, bool)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise DomainError(f"point {bad} {tuple(pts[bad])} lies outside the window")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return (EventPoint(*row) for row in self.points.tolist())

    def __eq__(self, other):
        if not isinstance(other, PointPattern):
            return NotImplemented
        return self.window == other.window and np.array_equal(self.points, other.points)

    @property
    def n(self) -> int:
        return len(self)

    def index_of(self, point) -> int:
        """Row index of the first event coordinate-identical to ``point``, or -1."""
        p = np.asarray(point, dtype=float)
        hits = np.flatnonzero(np.all(self.points == p, axis=1))
        return int(hits[0]) if hits.size else -1

    def without(self, index: int) -> "PointPattern":
        return PointPattern(np.delete(self.points, index, axis=0), self.window)

    def with_point(self, point) -> "PointPattern":
        p = np.asarray(point, dtype=float).reshape(1, 3)
        return PointPattern(np.vstack([self.points, p]), self.window)


def _check_radii(r, q):
    if not (r > 0 and q > 0):
        raise InvalidParameterError(f"cylinder radii must be positive, got r={r}, q={q}")


def within_cylinder(points, center, r, q) -> np.ndarray:
    """Mask of rows of ``points`` lying in the cylinder ``C_r^q[center]``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    c = np.asarray(center, dtype=float)
    dxy = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
    return (dxy <= r) & (np.abs(pts[:, 2] - c[2]) <= q)


def pairwise_within(probes, points, r, q) -> np.ndarray:
    """``(p, n)`` boolean matrix: ``[k, i]`` is true when ``points[i]`` is in
    the cylinder centred at ``probes[k]``.  No self-exclusion is applied."""
    a = np.asarray(probes, dtype=float).reshape(-1, 3)
    b = np.asarray(points, dtype=float).reshape(-1, 3)
    dxy = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    return (dxy <= r) & (np.abs(a[:, None, 2] - b[None, :, 2]) <= q)


def cylinder_count(
    pattern: PointPattern, center, r: float, q: float, exclude_center: bool = True
) -> int:
    """Number of events of ``pattern`` in the cylinder ``C_r^q[center]``.

    With ``exclude_center`` every event coordinate-identical to ``center`` is
    left out, which gives the count of *other* points used by the density.
    """
    _check_radii(r, q)
    if len(pattern) == 0:
        return 0
    mask = within_cylinder(pattern.points, center, r, q)
    if exclude_center:
        mask &= ~np.all(pattern.points == np.asarray(center, dtype=float), axis=1)
    return int(mask.sum())


class NeighborIndex:
    """Uniform space-time grid over a pattern for repeated cylinder queries.

    Cells have size ``(r_max, r_max, q_max)``, so every event within a
    cylinder of radii ``r <= r_max``, ``q <= q_max`` lies in the 27 cells
    surrounding the query cell.

    Parameters
    ----------
    pattern : PointPattern
    r_max, q_max : float
        Largest spatial and temporal radii that will be queried.
    """

    def __init__(self, pattern: PointPattern, r_max: float, q_max: float):
        _check_radii(r_max, q_max)
        self.pattern = pattern
        self.r_max = float(r_max)
        self.q_max = float(q_max)
        self._origin = pattern.window.lower
        # slight inflation keeps rounding in the cell lookup from dropping
        # neighbours that sit exactly at the query radius
        self._size = np.array([self.r_max, self.r_max, self.q_max]) * (1.0 + 1e-9)
        cells = self._cells(pattern.points)
        buckets: dict = {}
        for i, key in enumerate(map(tuple, cells.tolist())):
            buckets.setdefault(key, []).append(i)
        self._buckets = {k: np.asarray(v, dtype=np.intp) for k, v in buckets.items()}

    def _cells(self, pts):
        return np.floor((np.asarray(pts, dtype=float) - self._origin) / self._size).astype(np.int64)

    def candidates(self, center) -> np.ndarray:
        """Indices of events in the 27 grid cells around ``center``."""
        cx, cy, ct = self._cells(np.asarray(center, dtype=float).reshape(1, 3))[0].tolist()
        found = [
            self._buckets[key]
            for dx in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dt in (-1, 0, 1)
            if (key := (cx + dx, cy + dy, ct + dt)) in self._buckets
        ]
        if not found:
            return np.empty(0, dtype=np.intp)
        return np.sort(np.concatenate(found))

    def neighbors(self, center, r, q, exclude_center=True, mask=None) -> np.ndarray:
        """Sorted indices of events in ``C_r^q[center]``.

        ``mask`` is an optional boolean array over the pattern; events with a
        false entry are treated as removed.
        """
        _check_radii(r, q)
        if r > self.r_max or q > self.q_max:
            raise InvalidParameterError(
                f"query radii ({r}, {q}) exceed index radii ({self.r_max}, {self.q_max})"
            )
        idx = self.candidates(center)
        if mask is not None:
            idx = idx[np.asarray(mask, dtype=bool)[idx]]
        pts = self.pattern.points[idx]
        keep = within_cylinder(pts, center, r, q)
        if exclude_center:
            keep &= ~np.all(pts == np.asarray(center, dtype=float), axis=1)
        return idx[keep]

    def count(self, center, r, q, exclude_center=True, mask=None) -> int:
        return int(self.neighbors(center, r, q, exclude_center, mask).size)


def neighbor_index(pattern: PointPattern, r_max: float, q_max: float) -> NeighborIndex:
    """Build a :class:`NeighborIndex` for cylinder queries up to ``(r_max, q_max)``."""
    return NeighborIndex(pattern, r_max, q_max)


def as_points(points: Sequence) -> np.ndarray:
    """Coerce a sequence of triples to an ``(n, 3)`` float array."""
    arr = np.asarray(points, dtype=float)
    return arr.reshape(-1, 3)
