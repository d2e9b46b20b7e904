"""Quadrature schemes for pseudo-likelihood and logistic fitting.

A scheme lists the data points first, then the dummy points.  Counting
weights split the window into ``nx * ny * nt`` boxes of equal volume ``v``
and give every point of a box the weight ``v / (points in that box)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, InvalidParameterError
from .fileio import atomic_write_text
from .geometry import PointPattern, SpacetimeWindow
from .model import TrendFunction, data_statistics, neighbour_counts, probe_statistics

__all__ = [
    "QuadratureScheme",
    "default_grid",
    "cell_index",
    "stratified_offsets",
    "counting_weights",
    "poisson_dummies",
    "design_matrix",
    "write_scheme_csv",
]

# reciprocal powers of the plastic number: an additive recurrence with these
# steps spreads points evenly over the unit square
_PLASTIC = 1.324717957244746
_STEPS = (1.0 / _PLASTIC, 1.0 / _PLASTIC**2)


@dataclass(frozen=True, eq=False)
class QuadratureScheme:
    """Quadrature points with data indicators, weights and GLM offsets."""

    points: np.ndarray
    is_data: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    window: SpacetimeWindow
    grid: tuple | None = None
    rho: float | None = None

    @property
    def n_data(self) -> int:
        return int(self.is_data.sum())

    @property
    def n_dummy(self) -> int:
        return len(self.points) - self.n_data

    def __len__(self):
        return len(self.points)


def default_grid(n_points: int) -> tuple:
    """Cubic grid with about ``4 n`` cells, i.e. ``ceil((4 n) ** (1/3))`` per axis."""
    k = max(1, math.ceil(round((4 * max(n_points, 1)) ** (1.0 / 3.0), 9)))
    return (k, k, k)


def _check_grid(n_cells):
    try:
        grid = tuple(int(v) for v in n_cells)
    except TypeError:
        grid = (int(n_cells),) * 3
    if len(grid) != 3 or min(grid) < 1:
        raise InvalidParameterError(f"grid must be three positive integers, got {n_cells!r}")
    return grid


def cell_index(points, window: SpacetimeWindow, grid) -> np.ndarray:
    """Flat box index of every point; points on the upper faces go to the last box."""
    grid = np.asarray(_check_grid(grid))
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    ijk = np.floor((pts - window.lower) / window.lengths * grid).astype(np.int64)
    ijk = np.clip(ijk, 0, grid - 1)
    return np.ravel_multi_index(ijk.T, tuple(grid))


def stratified_offsets(k: int) -> np.ndarray:
    """``k`` deterministic positions in the unit box; ``k = 1`` gives its centre."""
    i = np.arange(k)
    return np.column_stack(
        [
            (i + 0.5) / k,
            np.mod(0.5 + i * _STEPS[0], 1.0),
            np.mod(0.5 + i * _STEPS[1], 1.0),
        ]
    )


def counting_weights(
    pattern: PointPattern,
    n_cells=None,
    dummy_per_cell: int = 1,
    trend_mu: TrendFunction | None = None,
) -> QuadratureScheme:
    """Data points plus a regular dummy lattice, with counting weights.

    Offsets are ``log mu`` at each quadrature point (zero when ``trend_mu``
    is omitted).
    """
    grid = _check_grid(default_grid(len(pattern)) if n_cells is None else n_cells)
    if int(dummy_per_cell) < 1:
        raise InvalidParameterError("dummy_per_cell must be a positive integer")
    window = pattern.window
    nx, ny, nt = grid
    size = window.lengths / np.array(grid)
    corners = np.stack(
        np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nt), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    offs = stratified_offsets(int(dummy_per_cell))
    dummies = window.lower + ((corners[:, None, :] + offs[None, :, :]) * size).reshape(-1, 3)
    points = np.vstack([pattern.points, dummies])
    is_data = np.zeros(len(points), dtype=bool)
    is_data[: len(pattern)] = True

    # dummy boxes come from construction, not from re-binning their coordinates
    dummy_cells = np.repeat(np.ravel_multi_index(corners.T, grid), len(offs))
    cells = np.concatenate([cell_index(pattern.points, window, grid), dummy_cells])
    per_cell = np.bincount(cells, minlength=nx * ny * nt)
    cell_volume = window.volume() / (nx * ny * nt)
    weights = cell_volume / per_cell[cells]
    offsets = np.zeros(len(points)) if trend_mu is None else trend_mu.log_mu(points)
    return QuadratureScheme(points, is_data, weights, offsets, window, grid=grid)


def poisson_dummies(
    pattern: PointPattern,
    rho: float,
    rng: np.random.Generator,
    trend_mu: TrendFunction | None = None,
) -> QuadratureScheme:
    """Data points plus a homogeneous Poisson dummy pattern of intensity ``rho``.

    Weights are all one; offsets are ``log(mu / rho)``.
    """
    rho = float(rho)
    if not (rho > 0 and math.isfinite(rho)):
        raise InvalidParameterError(f"rho must be positive, got {rho}")
    window = pattern.window
    k = int(rng.poisson(rho * window.volume()))
    dummies = window.lower + rng.random((k, 3)) * window.lengths
    points = np.vstack([pattern.points, dummies])
    is_data = np.zeros(len(points), dtype=bool)
    is_data[: len(pattern)] = True
    log_mu = np.zeros(len(points)) if trend_mu is None else trend_mu.log_mu(points)
    return QuadratureScheme(
        points, is_data, np.ones(len(points)), log_mu - math.log(rho), window, rho=rho
    )


def design_matrix(model_shape, scheme: QuadratureScheme, source_pattern: PointPattern) -> np.ndarray:
    """``(p, m)`` matrix of sufficient statistics at the quadrature points.

    Data rows hold ``S(x_i, x minus x_i)``; dummy rows hold ``S(u, x)``.
    """
    n = len(source_pattern)
    if (
        scheme.n_data != n
        or not scheme.is_data[:n].all()
        or not np.array_equal(scheme.points[:n], source_pattern.points)
    ):
        raise ContractError("quadrature scheme was not built from this pattern")
    shape = [tuple(float(v) for v in rqs) for rqs in model_shape]
    counts = neighbour_counts(source_pattern.points, shape)
    return np.vstack(
        [
            data_statistics(source_pattern.points, shape, counts),
            probe_statistics(scheme.points[n:], source_pattern.points, shape, counts),
        ]
    )


def write_scheme_csv(path, scheme: QuadratureScheme, design: np.ndarray | None = None) -> None:
    """Audit dump: ``x,y,t,is_data,weight,S_1..S_m``."""
    m = 0 if design is None else design.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "t", "is_data", "weight"] + [f"S_{j + 1}" for j in range(m)])
    for k in range(len(scheme)):
        row = [repr(float(v)) for v in scheme.points[k]]
        row += [int(scheme.is_data[k]), repr(float(scheme.weights[k]))]
        if m:
            row += [repr(float(v)) for v in design[k]]
        w.writerow(row)
    atomic_write_text(path, buf.getvalue())
