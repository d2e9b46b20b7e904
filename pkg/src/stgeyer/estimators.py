"""scikit-learn style estimators for the space-time Geyer model.

``X`` is an ``(n, 3)`` array of events ``(x, y, t)``; there is no target.
After ``fit`` the estimators expose ``beta_``, ``gamma_``, ``intercept_``,
``coef_`` (log interaction strengths) and the full ``fit_result_``.

>>> est = GeyerLogisticLikelihood(r=(0.1,), q=(0.05,), s=(1,), random_state=0)
>>> est.fit(events).gamma_          # doctest: +SKIP
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .inference import IrregularParams, fit_logistic_likelihood, fit_pseudo
from .model import GeyerModel, ScaleComponent, TrendFunction, probe_statistics
from .quadrature import counting_weights, design_matrix
from .simulate import McmcConfig, make_rng, run_chain
from .validation import check_events, check_scales, check_window

__all__ = ["GeyerPseudoLikelihood", "GeyerLogisticLikelihood"]


class _GeyerEstimator(BaseEstimator):
    def _irregular(self):
        r, q, s = check_scales(self.r, self.q, self.s)
        return IrregularParams(tuple(r), tuple(q), tuple(s))

    def _store(self, result, pattern):
        self.fit_result_ = result
        self.pattern_ = pattern
        self.window_ = pattern.window
        self.intercept_ = float(result.coefficients[0])
        self.coef_ = np.asarray(result.theta_hat)
        self.beta_ = result.beta_hat
        self.gamma_ = np.asarray(result.gamma_hat)
        self.converged_ = result.converged
        self.n_features_in_ = 3
        return self

    def to_model(self) -> GeyerModel:
        """The fitted model (requires at least one interaction scale)."""
        check_is_fitted(self, "fit_result_")
        irr = self.fit_result_.irregular
        trend = TrendFunction(self.beta_) if self.trend is None else self.trend.with_beta(self.beta_)
        scales = tuple(ScaleComponent(g, r, q, s) for g, (r, q, s) in zip(self.gamma_, irr.shape))
        return GeyerModel(trend, scales, self.window_)

    def _log_trend(self, pts):
        mu = np.ones(len(pts)) if self.trend is None else self.trend.mu(pts)
        with np.errstate(divide="ignore"):
            return np.log(self.beta_ * mu)

    def predict(self, X) -> np.ndarray:
        """Fitted conditional intensity at each probe given the training pattern."""
        check_is_fitted(self, "fit_result_")
        probes = check_events(X, self.window_).points
        stats = probe_statistics(probes, self.pattern_.points, self.fit_result_.irregular.shape)
        return np.exp(self._log_trend(probes) + stats @ self.coef_)

    def score(self, X, y=None) -> float:
        """Approximate log pseudo-likelihood of ``X`` at the fitted parameters."""
        check_is_fitted(self, "fit_result_")
        pattern = check_events(X, self.window_)
        scheme = counting_weights(pattern, getattr(self, "grid", None))
        design = design_matrix(self.fit_result_.irregular.shape, scheme, pattern)
        log_lam = self._log_trend(scheme.points) + design @ self.coef_
        return float(log_lam[scheme.is_data].sum() - np.sum(scheme.weights * np.exp(log_lam)))

    def sample(self, n_steps=20_000, random_state=None) -> np.ndarray:
        """Draw one pattern from the fitted model by birth-death MCMC."""
        model = self.to_model()
        seed = 0 if random_state is None else int(random_state)
        trace = run_chain(model, McmcConfig(n_steps, n_steps, seed=seed))
        return np.array(trace.final.points)


class GeyerPseudoLikelihood(_GeyerEstimator):
    """Maximum pseudo-likelihood estimator (counting-weight quadrature).

    Parameters
    ----------
    r, q, s : sequence of float
        Per-scale spatial radius, temporal radius and saturation; held fixed.
    window : SpacetimeWindow, mapping or triple of intervals, optional
        Observation window, unit cube by default.
    trend : TrendFunction, optional
        Known surface ``mu``; its ``beta`` is ignored.
    grid : triple of int, optional
        Quadrature boxes per axis.
    """

    def __init__(
        self,
        r=(0.1, 0.11),
        q=(0.05, 0.1),
        s=(1, 2),
        window=None,
        trend=None,
        grid=None,
        dummy_per_cell=1,
        tol=1e-8,
        max_iter=100,
    ):
        self.r = r
        self.q = q
        self.s = s
        self.window = window
        self.trend = trend
        self.grid = grid
        self.dummy_per_cell = dummy_per_cell
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        pattern = check_events(X, check_window(self.window))
        result = fit_pseudo(
            pattern,
            self._irregular(),
            self.trend,
            self.grid,
            self.dummy_per_cell,
            self.tol,
            self.max_iter,
        )
        return self._store(result, pattern)


class GeyerLogisticLikelihood(_GeyerEstimator):
    """Logistic-likelihood estimator with Poisson dummy points.

    Parameters
    ----------
    r, q, s, window, trend :
        As for :class:`GeyerPseudoLikelihood`.
    rho : float, optional
        Dummy intensity; ``4 n / |W|`` by default.
    random_state : int, optional
        Seed of the dummy pattern.
    """

    def __init__(
        self,
        r=(0.1, 0.11),
        q=(0.05, 0.1),
        s=(1, 2),
        window=None,
        trend=None,
        rho=None,
        random_state=None,
        tol=1e-8,
        max_iter=100,
    ):
        self.r = r
        self.q = q
        self.s = s
        self.window = window
        self.trend = trend
        self.rho = rho
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        pattern = check_events(X, check_window(self.window))
        rng = make_rng(0 if self.random_state is None else int(self.random_state))
        result = fit_logistic_likelihood(
            pattern, self._irregular(), self.trend, self.rho, rng, self.tol, self.max_iter
        )
        return self._store(result, pattern)
