"""Least-squares and quantile regression used by the error models.

Both fits share one dataset type whose predictor matrix already contains the
intercept column.  The least-squares fit carries a residual scale so Gaussian
predictive quantiles can be read off directly; the quantile fit minimises the
pinball loss, one probability at a time, via the standard linear-programming
split of the residual into positive and negative parts.  Quantile curves
fitted independently per probability may cross; crossings are counted
downstream, never repaired here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.optimize import linprog
from scipy.special import ndtri


class RankDeficiencyError(ValueError):
    """Predictor matrix has linearly dependent columns."""


class QuantileFitError(ValueError):
    """The pinball-loss linear program could not be solved."""


@dataclass(frozen=True)
class RegressionDataset:
    """Predictors (n, k) with the intercept column included, response (n,).

    Needs at least two more rows than columns so the residual degrees of
    freedom n - k stay positive with room to spare.
    """

    predictors: np.ndarray
    response: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.predictors, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"need X (n, k) and y (n,), got {x.shape} and {y.shape}")
        if x.shape[0] < x.shape[1] + 2:
            raise ValueError(f"need at least k + 2 = {x.shape[1] + 2} rows, got {x.shape[0]}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise ValueError("dataset contains non-finite values")
        object.__setattr__(self, "predictors", x)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def k(self) -> int:
        return self.predictors.shape[1]


def design_matrix(*columns: np.ndarray) -> np.ndarray:
    """Stack predictor columns behind an intercept column."""
    cols = [np.asarray(c, dtype=float) for c in columns]
    n = cols[0].shape[0]
    return np.column_stack([np.ones(n)] + cols)


@dataclass(frozen=True)
class LinearFit:
    """Least-squares coefficients plus the residual standard deviation."""

    coefficients: np.ndarray
    sigma: float


def fit_ols(data: RegressionDataset) -> LinearFit:
    """Ordinary least squares with sigma = sqrt(SSE / (n - k))."""
    x, y = data.predictors, data.response
    beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < data.k:
        raise RankDeficiencyError(
            f"predictor matrix rank {rank} < {data.k} columns; drop the dependent column"
        )
    residuals = y - x @ beta
    sse = float(residuals @ residuals)
    sigma = float(np.sqrt(sse / (data.n - data.k)))
    return LinearFit(coefficients=beta, sigma=sigma)


def predict_ols_quantile(fit: LinearFit, predictors: np.ndarray, probability: float) -> np.ndarray:
    """Gaussian predictive quantile(s): x'beta + sigma * z_p.

    ``predictors`` is one row (k,) or a matrix (n, k); output matches.
    """
    if not 0.0 < probability < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {probability}")
    x = np.asarray(predictors, dtype=float)
    return x @ fit.coefficients + fit.sigma * ndtri(probability)


def pinball_loss(probability: float, observed, predicted):
    """Pinball (check) loss, elementwise: p*(y - yhat) if y >= yhat else (1-p)*(yhat - y)."""
    if not 0.0 < probability < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {probability}")
    y = np.asarray(observed, dtype=float)
    q = np.asarray(predicted, dtype=float)
    diff = y - q
    out = np.where(diff >= 0.0, probability * diff, (probability - 1.0) * diff)
    return out if out.ndim else float(out)


def average_pinball_loss(probability: float, observed, predicted) -> float:
    return float(np.mean(pinball_loss(probability, observed, predicted)))


def _fit_quantile_primal(x: np.ndarray, y: np.ndarray, probability: float) -> np.ndarray:
    """Direct split formulation: min p*sum(u) + (1-p)*sum(v), X beta + u - v = y."""
    n, k = x.shape
    cost = np.concatenate([np.zeros(k), np.full(n, probability), np.full(n, 1.0 - probability)])
    eye = scipy.sparse.eye(n, format="csc")
    a_eq = scipy.sparse.hstack([scipy.sparse.csc_matrix(x), eye, -eye], format="csc")
    bounds = [(None, None)] * k + [(0.0, None)] * (2 * n)
    result = linprog(cost, A_eq=a_eq, b_eq=y, bounds=bounds, method="highs")
    if not result.success:
        raise QuantileFitError(f"linear program failed at p={probability}: {result.message}")
    return np.asarray(result.x[:k], dtype=float)


def fit_quantile(data: RegressionDataset, probability: float) -> np.ndarray:
    """Coefficients minimising the total pinball loss at ``probability``.

    The reference problem is the linear program

        min p*sum(u) + (1-p)*sum(v)   s.t.   X beta + u - v = y,  u, v >= 0.

    For speed it is solved in its dual form (n box-bounded variables against
    only k equality rows) and the coefficients are read off the equality
    multipliers; strong duality gives a certificate, and on any mismatch the
    primal formulation is solved directly instead.
    """
    if not 0.0 < probability < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {probability}")
    x, y = data.predictors, data.response
    # dual: max y'd  s.t.  X'd = 0,  p - 1 <= d_i <= p
    result = linprog(
        -y,
        A_eq=x.T,
        b_eq=np.zeros(data.k),
        bounds=[(probability - 1.0, probability)] * data.n,
        method="highs",
    )
    if result.success and result.eqlin is not None:
        beta = -np.asarray(result.eqlin.marginals, dtype=float)
        dual_objective = -float(result.fun)
        achieved = float(np.sum(pinball_loss(probability, y, x @ beta)))
        scale = max(1.0, abs(dual_objective))
        if math.isfinite(achieved) and abs(achieved - dual_objective) <= 1e-7 * scale:
            return beta
    return _fit_quantile_primal(x, y, probability)


@dataclass(frozen=True)
class QuantileFit:
    """Per-probability coefficient vectors and achieved average pinball losses."""

    coefficients: dict[float, np.ndarray]
    losses: dict[float, float]

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(self.coefficients)


def fit_quantile_set(data: RegressionDataset, probabilities) -> QuantileFit:
    """Fit each probability independently (curves may cross, by design)."""
    coefficients: dict[float, np.ndarray] = {}
    losses: dict[float, float] = {}
    for p in probabilities:
        beta = fit_quantile(data, p)
        coefficients[float(p)] = beta
        losses[float(p)] = average_pinball_loss(p, data.response, data.predictors @ beta)
    return QuantileFit(coefficients=coefficients, losses=losses)
