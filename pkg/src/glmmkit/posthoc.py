"""Post-hoc analysis on the training data.

Ordinary least squares with R-squared, conversion of posterior slope draws
to (approximate) partial-correlation draws, and exceedance probabilities on
the squared scale.  The partial-correlation constant per predictor is

    sd(x_k) / sd(y) * sqrt((1 - R2 of x_k on the others) /
                           (1 - R2 of y on the others))

computed once from the data and applied to every posterior slope draw; with
a single predictor both R-squared terms vanish and the constant reduces to
sd(x)/sd(y).  The plug-in mixes fixed OLS R-squared values with posterior
draws, so transformed draws can fall slightly outside [-1, 1]; they are
reported with a warning, never clamped.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import GlmmkitError


@dataclass
class OlsFit:
    coefficients: np.ndarray
    rsquared: float
    residuals: np.ndarray


def ols_fit(X, y):
    """Least squares via SVD with R-squared (intercept assumed present)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise GlmmkitError("ols_fit needs a 2-D X and matching 1-D y")
    if X.shape[0] <= X.shape[1]:
        raise GlmmkitError("ols_fit needs more rows than columns")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise GlmmkitError(f"X is rank deficient (rank {rank} < {X.shape[1]})")
    residuals = y - X @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(np.sum(residuals ** 2))
    rsquared = 1.0 - ssr / sst if sst > 0 else 0.0
    return OlsFit(coefficients=coef, rsquared=rsquared, residuals=residuals)


@dataclass
class PartialCorrDraws:
    predictors: list
    constants: dict  # predictor -> multiplier applied to its slope draws
    draws: dict  # predictor -> (chains, draws) array on the correlation scale

    def squared(self):
        return {name: d ** 2 for name, d in self.draws.items()}


def _with_intercept(columns):
    return np.column_stack([np.ones(columns.shape[0]), columns])


def partial_corr_transform(slope_draws, data, predictors, response):
    """Convert slope draws to partial-correlation draws.

    ``slope_draws`` maps predictor name to a (chains, draws) array;
    ``data`` is a DataTable holding the numeric predictor and response
    columns the statistics are computed from.
    """
    if not predictors:
        raise GlmmkitError("need at least one predictor")
    y = data[response].values
    sd_y = float(np.std(y, ddof=1))
    if sd_y <= 0:
        raise GlmmkitError(f"response {response!r} has zero variance")
    cols = {name: data[name].values for name in predictors}

    constants = {}
    for name in predictors:
        others = [cols[p] for p in predictors if p != name]
        if others:
            X_other = _with_intercept(np.column_stack(others))
            r2_x = ols_fit(X_other, cols[name]).rsquared
            r2_y = ols_fit(X_other, y).rsquared
        else:
            r2_x = 0.0
            r2_y = 0.0
        if r2_y >= 1.0:
            raise GlmmkitError(
                f"R-squared of {response!r} on the other predictors is 1; the "
                "partial correlation constant is undefined"
            )
        sd_x = float(np.std(cols[name], ddof=1))
        constants[name] = sd_x / sd_y * np.sqrt((1.0 - r2_x) / (1.0 - r2_y))

    draws = {}
    for name in predictors:
        transformed = np.asarray(slope_draws[name], dtype=np.float64) * constants[name]
        worst = float(np.max(np.abs(transformed))) if transformed.size else 0.0
        if worst > 1.5:
            raise GlmmkitError(
                f"partial-correlation draws for {name!r} reach {worst:.3f}; the "
                "OLS plug-in approximation has broken down"
            )
        if worst > 1.0:
            warnings.warn(
                f"partial-correlation draws for {name!r} exceed 1 in magnitude "
                f"(max {worst:.3f}); the transform is an OLS plug-in approximation",
                stacklevel=2,
            )
        draws[name] = transformed
    return PartialCorrDraws(predictors=list(predictors), constants=constants,
                            draws=draws)


def exceedance_probability(draws_a, draws_b):
    """Fraction of joint draws where a^2 strictly exceeds b^2."""
    a = np.asarray(draws_a, dtype=np.float64).ravel()
    b = np.asarray(draws_b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise GlmmkitError("draw arrays must have equal length")
    return float(np.mean(a * a > b * b))
