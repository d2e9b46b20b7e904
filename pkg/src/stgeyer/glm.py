"""Weighted Poisson and Bernoulli log-linear regression by IRLS.

Both fitters maximise a concave objective in ``theta`` with linear predictor
``eta = offset + X @ theta``:

* Poisson: ``sum_k w_k * (y_k * eta_k - exp(eta_k))``
* logistic: ``sum_k w_k * (y_k * eta_k - log(1 + exp(eta_k)))``

Each iteration solves the weighted least-squares system of the Newton step
and halves the step until the objective does not decrease.  A fit counts as
converged once the relative objective change and the sup-norm of the score
(scaled by ``1 + |objective|``) both fall below ``tol``; one further Newton
step then polishes the estimate.  A coefficient beyond 50 in magnitude is
reported as divergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, xlogy

from .exceptions import InvalidParameterError, RankDeficientError

__all__ = [
    "GlmProblem",
    "GlmFit",
    "fit_poisson",
    "fit_logistic",
    "poisson_objective",
    "logistic_objective",
    "first_dependent_column",
]

DIVERGENCE_BOUND = 50.0
MAX_HALVINGS = 30
BOUNDARY_NOTE = 8.0
_EPS = 1e-10


@dataclass(frozen=True, eq=False)
class GlmProblem:
    """Response, design (leading intercept column), prior weights and offset."""

    response: np.ndarray
    design: np.ndarray
    weights: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.response, dtype=float).reshape(-1)
        p = len(y)
        if X.ndim != 2 or X.shape[0] != p:
            raise InvalidParameterError(f"design shape {X.shape} does not match {p} responses")
        w = np.ones(p) if self.weights is None else np.asarray(self.weights, dtype=float).reshape(-1)
        off = np.zeros(p) if self.offset is None else np.asarray(self.offset, dtype=float).reshape(-1)
        if len(w) != p or len(off) != p:
            raise InvalidParameterError("weights and offset must have one entry per response")
        for name, arr in (("response", y), ("design", X), ("weights", w), ("offset", off)):
            if not np.all(np.isfinite(arr)):
                raise InvalidParameterError(f"{name} contains non-finite entries")
        if np.any(w <= 0):
            raise InvalidParameterError("weights must be positive")
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offset", off)

    @property
    def n_coef(self) -> int:
        return self.design.shape[1]


@dataclass
class GlmFit:
    """Estimates and convergence record of one fit.

    ``covariance`` is the inverse observed information at ``coefficients``.
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    objective: float
    gradient_norm: float
    covariance: np.ndarray
    family: str
    diagnostics: list = field(default_factory=list)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def poisson_objective(theta, problem: GlmProblem) -> float:
    eta = problem.offset + problem.design @ np.asarray(theta, dtype=float)
    with np.errstate(over="ignore"):
        return float(np.sum(problem.weights * (problem.response * eta - np.exp(eta))))


def logistic_objective(theta, problem: GlmProblem) -> float:
    eta = problem.offset + problem.design @ np.asarray(theta, dtype=float)
    return float(np.sum(problem.weights * (problem.response * eta - np.logaddexp(0.0, eta))))


def _poisson_moments(eta):
    with np.errstate(over="ignore"):
        mu = np.exp(eta)
    return mu, mu


def _logistic_moments(eta):
    mu = expit(eta)
    return mu, mu * (1.0 - mu)


def first_dependent_column(X: np.ndarray) -> int:
    """Index of the first column in the span of its predecessors, or -1."""
    if np.linalg.matrix_rank(X) == X.shape[1]:
        return -1
    for j in range(1, X.shape[1] + 1):
        if np.linalg.matrix_rank(X[:, :j]) < j:
            return j - 1
    return -1


def _solve(info, rhs, diagnostics):
    try:
        return linalg.cho_solve(linalg.cho_factor(info), rhs)
    except linalg.LinAlgError:
        ridge = _EPS * max(np.trace(info), _EPS)
        if "ridge" not in diagnostics:
            diagnostics.append("ridge")
        return linalg.cho_solve(linalg.cho_factor(info + ridge * np.eye(len(info))), rhs)


def _invert(info, diagnostics):
    try:
        c = linalg.cho_factor(info)
    except linalg.LinAlgError:
        diagnostics.append("information matrix not positive definite at the optimum")
        return np.linalg.pinv(info)
    return linalg.cho_solve(c, np.eye(len(info)))


def _irls(problem, objective, moments, theta0, tol, max_iter, family):
    if not (tol > 0):
        raise InvalidParameterError("tol must be positive")
    if int(max_iter) < 1:
        raise InvalidParameterError("max_iter must be a positive integer")
    X, y, w, off = problem.design, problem.response, problem.weights, problem.offset
    col = first_dependent_column(X)
    if col >= 0:
        raise RankDeficientError(
            f"design column {col} is collinear with the preceding columns", col
        )
    diagnostics: list = []
    theta = np.asarray(theta0, dtype=float).copy()
    obj = objective(theta, problem)
    converged = False
    iterations = 0
    grad = np.full(len(theta), np.inf)
    for iterations in range(1, int(max_iter) + 1):
        eta = off + X @ theta
        mu, var = moments(eta)
        grad = X.T @ (w * (y - mu))
        info = X.T @ (X * (w * var)[:, None])
        step = _solve(info, grad, diagnostics)
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta + step
            new_obj = objective(candidate, problem)
            if np.isfinite(new_obj) and new_obj >= obj - 1e-12 * (1.0 + abs(obj)):
                break
            step = step / 2.0
        else:
            diagnostics.append("step-halving failed to improve the objective")
            break
        change = abs(new_obj - obj) / (abs(new_obj) + _EPS)
        theta, obj = candidate, new_obj
        if np.max(np.abs(theta)) > DIVERGENCE_BOUND:
            diagnostics.append(
                f"divergence: |coefficient| exceeded {DIVERGENCE_BOUND:g} "
                "(separation or an unbounded direction)"
            )
            break
        mu, var = moments(off + X @ theta)
        grad = X.T @ (w * (y - mu))
        if change < tol and np.max(np.abs(grad)) < tol * (1.0 + abs(obj)):
            converged = True
            theta, obj, grad = _polish(problem, objective, moments, theta, obj, diagnostics)
            break
    else:
        diagnostics.append(f"no convergence within {max_iter} iterations")

    if converged:
        far = np.flatnonzero(np.abs(theta[1:]) > BOUNDARY_NOTE) + 1
        if len(far):
            diagnostics.append(
                f"coefficients {far.tolist()} beyond {BOUNDARY_NOTE:g} in magnitude: "
                "estimate at the parameter boundary"
            )
    eta = off + X @ theta
    mu, var = moments(eta)
    info = X.T @ (X * (w * var)[:, None])
    cov = _invert(info, diagnostics)
    if family == "poisson":
        deviance = float(2.0 * np.sum(w * (xlogy(y, y) - xlogy(y, mu) - (y - mu))))
    else:
        deviance = float(-2.0 * obj)
    return GlmFit(
        coefficients=theta,
        converged=converged,
        iterations=iterations,
        deviance=deviance,
        objective=float(obj),
        gradient_norm=float(np.max(np.abs(grad))) if len(grad) else 0.0,
        covariance=cov,
        family=family,
        diagnostics=diagnostics,
    )


def _polish(problem, objective, moments, theta, obj, diagnostics):
    """One extra full Newton step, kept only if the objective does not drop.

    The objective test alone can stop a few 1e-8 short of the optimum; after
    quadratic convergence one more step costs little and closes that gap.
    """
    X, y, w, off = problem.design, problem.response, problem.weights, problem.offset
    mu, var = moments(off + X @ theta)
    grad = X.T @ (w * (y - mu))
    info = X.T @ (X * (w * var)[:, None])
    candidate = theta + _solve(info, grad, diagnostics)
    new_obj = objective(candidate, problem)
    mu, _ = moments(off + X @ candidate)
    new_grad = X.T @ (w * (y - mu))
    # near the optimum the objective gain is below rounding, so judge by the score
    if (
        np.isfinite(new_obj)
        and new_obj >= obj - 1e-12 * (1.0 + abs(obj))
        and np.max(np.abs(new_grad)) < np.max(np.abs(grad))
    ):
        return candidate, new_obj, new_grad
    return theta, obj, grad


def _start(problem, first):
    theta = np.zeros(problem.n_coef)
    w = problem.weights
    theta[0] = first - np.sum(w * problem.offset) / np.sum(w)
    return theta


def fit_poisson(problem: GlmProblem, tol: float = 1e-8, max_iter: int = 100) -> GlmFit:
    """Weighted Poisson log-linear fit.

    Raises
    ------
    RankDeficientError
        If the design is rank deficient; ``.column`` names the culprit.
    """
    if np.any(problem.response < 0):
        raise InvalidParameterError("Poisson responses must be nonnegative")
    w = problem.weights
    mean = float(np.sum(w * problem.response) / np.sum(w))
    theta0 = _start(problem, math.log(mean + _EPS))
    return _irls(problem, poisson_objective, _poisson_moments, theta0, tol, max_iter, "poisson")


def fit_logistic(problem: GlmProblem, tol: float = 1e-8, max_iter: int = 100) -> GlmFit:
    """Bernoulli logistic fit; responses must be 0 or 1."""
    y = problem.response
    if not np.all((y == 0) | (y == 1)):
        raise InvalidParameterError("logistic responses must be 0 or 1")
    w = problem.weights
    pi = float(np.clip(np.sum(w * y) / np.sum(w), 1e-6, 1 - 1e-6))
    theta0 = _start(problem, math.log(pi / (1.0 - pi)))
    return _irls(problem, logistic_objective, _logistic_moments, theta0, tol, max_iter, "logistic")
