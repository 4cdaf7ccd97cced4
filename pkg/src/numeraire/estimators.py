"""Estimator-style wrappers (``fit`` / ``transform`` / ``predict``) over the functional API.

The "data" passed to ``fit`` is a market model: a ``MarketModel``, a parsed
model document (dict), a JSON string or a path to a model file.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .arbdetect import scan_model
from .growthopt import SolverOptions, log_growth, solve_model, transform_model
from .measure import FEASIBLE, MIN_WEIGHT, reweight_model, sigma_change
from .model import MarketModel, Portfolio, load_model, parse_model, validate_model


def check_model(model) -> MarketModel:
    """Coerce ``model`` into a validated ``MarketModel``."""
    if isinstance(model, MarketModel):
        return validate_model(model)
    if isinstance(model, dict):
        return parse_model(model)
    if isinstance(model, Path):
        return load_model(model)
    if isinstance(model, (str, bytes)):
        text = model.decode() if isinstance(model, bytes) else model
        if text.lstrip().startswith("{"):
            return parse_model(text)
        return load_model(text)
    raise TypeError(f"cannot interpret {type(model).__name__} as a market model")


def check_portfolio(g, model: MarketModel) -> Portfolio:
    """Coerce ``g`` (``Portfolio``, one vector or one vector per step) and check it lies in ``D``."""
    if not isinstance(g, Portfolio):
        arr = np.asarray(g, dtype=float)
        if arr.ndim <= 1 and arr.size == model.dimension:
            arr = np.tile(arr.reshape(1, -1), (model.n_steps, 1))
        g = Portfolio(arr.reshape(model.n_steps, model.dimension))
    g.validate(model)
    return g


def check_epsilon(epsilon) -> float:
    eps = float(epsilon)
    if not np.isfinite(eps) or eps <= 0:
        raise ValueError(f"epsilon must be a positive finite number, got {epsilon!r}")
    return eps


class GrowthOptimalPortfolio(TransformerMixin, BaseEstimator):
    """Per-step log-growth maximizer.

    ``fit`` stores ``portfolio_``, ``weights_`` and ``diagnostics_``. ``transform``
    returns the model with prices expressed in units of the fitted portfolio.
    """

    def __init__(self, max_iter: int = 200, grad_tol: float = 1e-8, foc_tol: float = 1e-8,
                 foc_samples: int = 1000, random_state: int = 0):
        self.max_iter = max_iter
        self.grad_tol = grad_tol
        self.foc_tol = foc_tol
        self.foc_samples = foc_samples
        self.random_state = random_state

    def _options(self) -> SolverOptions:
        return SolverOptions(max_iter=self.max_iter, grad_tol=self.grad_tol,
                             foc_tol=self.foc_tol, foc_samples=self.foc_samples,
                             foc_seed=self.random_state)

    def fit(self, model, y=None):
        model = check_model(model)
        self.portfolio_, self.diagnostics_ = solve_model(model, self._options())
        self.weights_ = np.asarray(self.portfolio_.weights)
        self.n_steps_, self.dimension_ = self.weights_.shape
        return self

    def predict(self, model=None) -> np.ndarray:
        check_is_fitted(self, "portfolio_")
        if model is not None:
            self._check_shape(check_model(model))
        return self.weights_.copy()

    def transform(self, model):
        check_is_fitted(self, "portfolio_")
        model = check_model(model)
        self._check_shape(model)
        return transform_model(model, self.portfolio_)

    def score(self, model, y=None) -> float:
        """Clock-weighted log-growth rate of the fitted portfolio."""
        check_is_fitted(self, "portfolio_")
        model = check_model(model)
        self._check_shape(model)
        return float(sum(dA * log_growth(tr, self.weights_[m]) for m, dA, _, tr in model.steps()))

    def _check_shape(self, model: MarketModel) -> None:
        if (model.n_steps, model.dimension) != (self.n_steps_, self.dimension_):
            raise ValueError("model shape does not match the fitted portfolio")


class ArbitrageDetector(BaseEstimator):
    """Per-step immediate-arbitrage scan; ``predict`` flags offending steps."""

    def fit(self, model, y=None):
        self.report_ = scan_model(check_model(model))
        self.verdict_ = self.report_.verdict
        return self

    def predict(self, model=None) -> np.ndarray:
        if model is not None:
            self.fit(model)
        check_is_fitted(self, "report_")
        return np.array([s.verdict != "clean" for s in self.report_.steps], dtype=bool)

    def certificates(self) -> dict[int, np.ndarray]:
        check_is_fitted(self, "report_")
        return {s.step: s.certificate for s in self.report_.steps if s.certificate is not None}


class SigmaMartingaleMeasure(TransformerMixin, BaseEstimator):
    """Jump-intensity reweighting that makes prices in units of ``g`` a sigma-martingale.

    When ``fit`` gets no portfolio the growth-optimal one is used.
    """

    def __init__(self, epsilon: float = 0.5, min_weight: float = MIN_WEIGHT):
        self.epsilon = epsilon
        self.min_weight = min_weight

    def fit(self, model, y=None, portfolio=None):
        model = check_model(model)
        eps = check_epsilon(self.epsilon)
        if portfolio is None:
            portfolio, _ = solve_model(model)
        self.portfolio_ = check_portfolio(portfolio, model)
        self.report_ = sigma_change(model, self.portfolio_, eps, self.min_weight)
        self.densities_ = [np.asarray(s.weights) for s in self.report_.steps]
        self.status_ = self.report_.status
        return self

    def transform(self, model):
        check_is_fitted(self, "report_")
        if self.status_ != FEASIBLE:
            raise ValueError(f"measure change is {self.status_} at steps {self.report_.failing_steps}")
        return reweight_model(check_model(model), self.report_)
