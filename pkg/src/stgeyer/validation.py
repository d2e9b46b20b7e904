"""Input validation for the estimator interface."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import InvalidParameterError
from .geometry import PointPattern, SpacetimeWindow


def check_window(window) -> SpacetimeWindow:
    """Accept ``None`` (unit cube), a window, a ``{"x","y","t"}`` mapping or a
    triple of ``(lo, hi)`` intervals."""
    if window is None:
        return SpacetimeWindow()
    if isinstance(window, SpacetimeWindow):
        return window
    if isinstance(window, dict):
        return SpacetimeWindow.from_dict(window)
    ranges = list(window)
    if len(ranges) != 3:
        raise InvalidParameterError("window needs x, y and t intervals")
    return SpacetimeWindow(*(tuple(r) for r in ranges))


def check_events(X, window=None, allow_empty=False) -> PointPattern:
    """Validate an ``(n, 3)`` array of ``x, y, t`` rows and wrap it as a pattern."""
    if isinstance(X, PointPattern):
        return X
    arr = check_array(
        X,
        dtype=np.float64,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_2d=True,
    )
    if arr.shape[1] != 3:
        raise ValueError(f"X must have 3 columns (x, y, t), got {arr.shape[1]}")
    return PointPattern(arr, check_window(window))


def check_scales(r, q, s):
    r, q, s = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (r, q, s))
    if not (r.shape == q.shape == s.shape) or r.ndim != 1:
        raise InvalidParameterError("r, q and s must be 1-d sequences of equal length")
    return r, q, s
