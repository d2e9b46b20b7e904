"""Shared fixtures and independent oracles.

The oracles below deliberately avoid the library's vectorised code paths:
they loop over points in plain Python and recompute every count from
scratch.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from stgeyer import GeyerModel, PointPattern, SpacetimeWindow

MODEL1 = dict(beta=70.0, gamma=(0.5, 1.5), r=(0.1, 0.11), q=(0.05, 0.1), s=(1, 2))
MODEL2 = dict(beta=70.0, gamma=(0.2, 1.2), r=(0.1, 0.11), q=(0.05, 0.1), s=(1, 2))


def brute_count(points, center, r, q, exclude_center=True):
    c = 0
    for p in points:
        if exclude_center and tuple(p) == tuple(center):
            continue
        if math.hypot(p[0] - center[0], p[1] - center[1]) <= r and abs(p[2] - center[2]) <= q:
            c += 1
    return c


def oracle_log_density(model, points):
    """Direct summation of the unnormalised log density."""
    total = 0.0
    pts = [tuple(p) for p in points]
    for i, p in enumerate(pts):
        lam = float(model.trend(np.array([p]))[0])
        if lam == 0:
            return -math.inf
        total += math.log(lam)
        others = pts[:i] + pts[i + 1 :]
        for sc in model.scales:
            n = 0
            for o in others:
                if math.hypot(o[0] - p[0], o[1] - p[1]) <= sc.r and abs(o[2] - p[2]) <= sc.q:
                    n += 1
            total += min(sc.s, n) * math.log(sc.gamma)
    return total


def oracle_ratio(model, points, probe):
    """papangelou via exp of a density difference (probe not in the pattern)."""
    pts = [tuple(p) for p in points]
    return math.exp(oracle_log_density(model, pts + [tuple(probe)]) - oracle_log_density(model, pts))


def random_model(rng, m=None, window=None):
    m = int(rng.integers(1, 4)) if m is None else m
    return GeyerModel.homogeneous(
        beta=float(rng.uniform(5, 100)),
        gamma=tuple(rng.uniform(0.1, 2.5, m)),
        r=tuple(rng.uniform(0.05, 0.35, m)),
        q=tuple(rng.uniform(0.05, 0.35, m)),
        s=tuple(rng.choice([0, 1, 2, 3, 1.5], m)),
        window=window,
    )


def uniform_pattern(rng, n, window=None):
    window = window or SpacetimeWindow()
    pts = window.lower + rng.random((n, 3)) * window.lengths
    return PointPattern(pts, window)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def model1():
    return GeyerModel.homogeneous(**MODEL1)


@pytest.fixture
def model2():
    return GeyerModel.homogeneous(**MODEL2)


def dense_newton(X, y, w, off, family, tol=1e-15, max_iter=200):
    """Plain Newton ascent on the exact objective, full steps plus a simple
    backtrack; written independently of the library solver."""

    def parts(theta):
        eta = off + X @ theta
        if family == "poisson":
            mu = np.exp(eta)
            obj = np.sum(w * (y * eta - mu))
            var = mu
        else:
            mu = 1 / (1 + np.exp(-eta))
            obj = np.sum(w * (y * eta - np.logaddexp(0, eta)))
            var = mu * (1 - mu)
        grad = X.T @ (w * (y - mu))
        hess = -(X * (w * var)[:, None]).T @ X
        return obj, grad, hess

    theta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        obj, grad, hess = parts(theta)
        step = np.linalg.solve(-hess, grad)
        t = 1.0
        while parts(theta + t * step)[0] < obj - 1e-12 * abs(obj) and t > 1e-10:
            t /= 2
        theta = theta + t * step
        if np.max(np.abs(t * step)) < tol:
            break
    return theta


def random_glm_problem(rng, family, p=None, k=None):
    p = int(rng.integers(30, 120)) if p is None else p
    k = int(rng.integers(1, 4)) if k is None else k
    X = np.column_stack([np.ones(p), rng.normal(0, 1, (p, k))])
    off = rng.normal(0, 0.3, p)
    theta = rng.normal(0, 0.5, k + 1)
    eta = off + X @ theta
    if family == "poisson":
        w = rng.uniform(0.2, 2.0, p)
        y = rng.poisson(np.exp(eta)) / w
    else:
        w = np.ones(p)
        y = (rng.random(p) < 1 / (1 + np.exp(-eta))).astype(float)
    return X, y, w, off


_PATTERN_CACHE = {}


def simulated_patterns(params, n, seed):
    """``n`` final states of 20,000-step chains; replicate ``i`` uses stream (seed, i, 0)."""
    from stgeyer import McmcConfig, make_rng, run_chain

    key = (tuple(sorted((k, tuple(v) if isinstance(v, tuple) else v) for k, v in params.items())), n, seed)
    if key not in _PATTERN_CACHE:
        model = GeyerModel.homogeneous(**params)
        cfg = McmcConfig(20_000, 20_000)
        _PATTERN_CACHE[key] = [run_chain(model, cfg, make_rng(seed, i, 0)).final for i in range(n)]
    return _PATTERN_CACHE[key]


@pytest.fixture(scope="session")
def model1_patterns():
    return simulated_patterns(MODEL1, 200, 2024)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
