"""Automatic weakly-informative priors and user overrides.

Slope coefficients get zero-centered Normal priors scaled by the response
and predictor spread; the intercept prior is derived from the implied
ordinary-least-squares relation with an inflated variance term; auxiliary
parameters use fixed heavy-tailed defaults; group-level standard deviations
copy the prior scale of the matching population-level effect.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import PriorError

GAUSSIAN_LIKE = ("gaussian", "t")
SLOPE_SCALE = 2.5

_DIST_PARAMS = {
    "Normal": ("mu", "sigma"),
    "HalfNormal": ("sigma",),
    "HalfStudentT": ("nu", "sigma"),
    "HalfCauchy": ("beta",),
    "Gamma": ("alpha", "beta"),
    "Uniform": ("lower", "upper"),
}

_POSITIVE_PARAMS = ("sigma", "beta", "alpha", "nu")
_HALF_DISTS = ("HalfNormal", "HalfStudentT", "HalfCauchy", "Gamma", "Uniform")


@dataclass(frozen=True)
class Prior:
    """A named distribution with numeric parameters."""

    dist: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dist not in _DIST_PARAMS:
            raise PriorError(
                f"unknown distribution {self.dist!r}; available: "
                + ", ".join(_DIST_PARAMS)
            )
        expected = _DIST_PARAMS[self.dist]
        if set(self.params) != set(expected):
            raise PriorError(
                f"{self.dist} needs parameters {expected}, got {tuple(self.params)}"
            )
        for name in expected:
            value = float(self.params[name])
            if not math.isfinite(value):
                raise PriorError(f"{self.dist} parameter {name} must be finite")
            if name in _POSITIVE_PARAMS and value <= 0:
                raise PriorError(f"{self.dist} parameter {name} must be positive")
        if self.dist == "Uniform" and self.params["lower"] >= self.params["upper"]:
            raise PriorError("Uniform needs lower < upper")

    def __str__(self):
        inner = ", ".join(
            f"{k}: {_format_value(self.params[k])}" for k in _DIST_PARAMS[self.dist]
        )
        return f"{self.dist}({inner})"

    @property
    def is_positive_support(self):
        if self.dist == "Uniform":
            return self.params["lower"] >= 0
        return self.dist in _HALF_DISTS

    def sd(self):
        """Standard deviation where defined (used by the group-SD rule)."""
        p = self.params
        if self.dist == "Normal":
            return float(p["sigma"])
        if self.dist == "HalfNormal":
            return float(p["sigma"]) * math.sqrt(1.0 - 2.0 / math.pi)
        if self.dist == "Gamma":
            return math.sqrt(p["alpha"]) / p["beta"]
        if self.dist == "Uniform":
            return (p["upper"] - p["lower"]) / math.sqrt(12.0)
        return None

    def typical_value(self):
        """A central point for sampler initialization."""
        p = self.params
        if self.dist == "Normal":
            return float(p["mu"])
        if self.dist == "HalfNormal":
            return float(p["sigma"]) * math.sqrt(2.0 / math.pi)
        if self.dist == "HalfStudentT":
            nu, sigma = p["nu"], p["sigma"]
            if nu > 1:
                return float(
                    sigma * 2.0 * math.sqrt(nu / math.pi)
                    * math.exp(special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2))
                    / (nu - 1)
                )
            return float(sigma)
        if self.dist == "HalfCauchy":
            return float(p["beta"])  # mean undefined; scale stands in
        if self.dist == "Gamma":
            return float(p["alpha"] / p["beta"])
        if self.dist == "Uniform":
            return float(0.5 * (p["lower"] + p["upper"]))
        raise PriorError(f"no typical value for {self.dist}")

    def logpdf(self, x):
        p = self.params
        if self.dist == "Normal":
            z = (x - p["mu"]) / p["sigma"]
            return -0.5 * z * z - math.log(p["sigma"]) - 0.5 * math.log(2 * math.pi)
        if x < 0 and self.dist in ("HalfNormal", "HalfStudentT", "HalfCauchy"):
            return -np.inf
        if self.dist == "HalfNormal":
            z = x / p["sigma"]
            return (
                math.log(2.0) - 0.5 * z * z - math.log(p["sigma"])
                - 0.5 * math.log(2 * math.pi)
            )
        if self.dist == "HalfStudentT":
            nu, sigma = p["nu"], p["sigma"]
            z = x / sigma
            return float(
                math.log(2.0)
                + special.gammaln((nu + 1) / 2)
                - special.gammaln(nu / 2)
                - 0.5 * math.log(nu * math.pi)
                - math.log(sigma)
                - (nu + 1) / 2 * math.log1p(z * z / nu)
            )
        if self.dist == "HalfCauchy":
            b = p["beta"]
            return math.log(2.0 / (math.pi * b * (1.0 + (x / b) ** 2)))
        if self.dist == "Gamma":
            a, b = p["alpha"], p["beta"]
            if x <= 0:
                return -np.inf
            return float(a * math.log(b) - special.gammaln(a) + (a - 1) * math.log(x) - b * x)
        if self.dist == "Uniform":
            lo, hi = p["lower"], p["upper"]
            return -math.log(hi - lo) if lo <= x <= hi else -np.inf
        raise PriorError(f"no density for {self.dist}")

    def dlogpdf(self, x):
        p = self.params
        if self.dist == "Normal":
            return -(x - p["mu"]) / p["sigma"] ** 2
        if self.dist == "HalfNormal":
            return -x / p["sigma"] ** 2
        if self.dist == "HalfStudentT":
            nu, sigma = p["nu"], p["sigma"]
            return -(nu + 1) * x / (nu * sigma * sigma + x * x)
        if self.dist == "HalfCauchy":
            b = p["beta"]
            return -2.0 * x / (b * b + x * x)
        if self.dist == "Gamma":
            return (p["alpha"] - 1) / x - p["beta"]
        if self.dist == "Uniform":
            return 0.0
        raise PriorError(f"no density for {self.dist}")

    def sample(self, rng, n):
        p = self.params
        if self.dist == "Normal":
            return rng.normal(p["mu"], p["sigma"], size=n)
        if self.dist == "HalfNormal":
            return np.abs(rng.normal(0.0, p["sigma"], size=n))
        if self.dist == "HalfStudentT":
            return np.abs(p["sigma"] * rng.standard_t(p["nu"], size=n))
        if self.dist == "HalfCauchy":
            return np.abs(p["beta"] * rng.standard_cauchy(size=n))
        if self.dist == "Gamma":
            return rng.gamma(p["alpha"], 1.0 / p["beta"], size=n)
        if self.dist == "Uniform":
            return rng.uniform(p["lower"], p["upper"], size=n)
        raise PriorError(f"cannot sample from {self.dist}")

    def to_dict(self):
        return {"dist": self.dist, **self.params}

    @classmethod
    def from_dict(cls, payload):
        if not isinstance(payload, dict) or "dist" not in payload:
            raise PriorError(f"malformed prior specification: {payload!r}")
        params = {k: v for k, v in payload.items() if k not in ("dist", "provenance")}
        if "params" in payload and isinstance(payload["params"], dict):
            params = dict(payload["params"])
        return cls(dist=payload["dist"], params=params)


def _format_value(value):
    """4-decimal display: ints print bare, floats keep at least one decimal."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    text = f"{float(value):.4f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


@dataclass
class PriorSet:
    """One prior per sampled parameter, with provenance flags."""

    intercept: Prior | None
    common: dict  # X column name -> Prior (intercept column excluded)
    group_sd: dict  # "<expr>|<factor>" -> Prior
    auxiliary: dict  # auxiliary name -> Prior
    provenance: dict = field(default_factory=dict)  # entry name -> default|user

    def all_entries(self):
        out = {}
        if self.intercept is not None:
            out["Intercept"] = self.intercept
        out.update(self.common)
        out.update(self.group_sd)
        out.update(self.auxiliary)
        return out

    def copy(self):
        return PriorSet(
            intercept=self.intercept,
            common=dict(self.common),
            group_sd=dict(self.group_sd),
            auxiliary=dict(self.auxiliary),
            provenance=dict(self.provenance),
        )


# ---------------------------------------------------------------------------
# Default construction
# ---------------------------------------------------------------------------


def response_scale(y_stats, family):
    """sd(Y) for gaussian-like families, 1 otherwise."""
    return float(y_stats.sd) if family.name in GAUSSIAN_LIKE else 1.0


def default_slope_prior(y_stats, x_sd, family):
    """Normal(0, 2.5 * sd(Y) / sd(X_k)) with sd(Y) -> 1 off the gaussian/t scale."""
    x_sd = float(x_sd)
    if x_sd <= 0:
        raise PriorError(
            "predictor has zero variance; remove it from the model (its slope "
            "prior scale is undefined)"
        )
    sd_y = response_scale(y_stats, family)
    return Prior("Normal", {"mu": 0.0, "sigma": SLOPE_SCALE * sd_y / x_sd})


def default_intercept_prior(y_stats, column_means, slope_priors, family, link):
    """Normal prior for the centered intercept.

    The mean is the (link-transformed) mean response; the variance is the
    response variance plus the propagated slope-prior variances weighted by
    the squared pre-centering column means.
    """
    if family.name in GAUSSIAN_LIKE:
        mean = float(y_stats.mean)
        var_y = float(y_stats.var)
    else:
        clipped = np.clip(y_stats.mean, 1e-12, 1.0 - 1e-12) \
            if link.name in ("logit", "probit", "cloglog") else max(y_stats.mean, 1e-12)
        mean = float(np.asarray(link.forward(clipped)))
        var_y = 1.0
    total = var_y
    for x_bar, prior in zip(column_means, slope_priors):
        sd = prior.sd()
        if sd is None:
            raise PriorError(
                f"slope prior {prior} has no defined variance; cannot derive the "
                "intercept prior"
            )
        total += float(x_bar) ** 2 * sd ** 2
    return Prior("Normal", {"mu": mean, "sigma": math.sqrt(total)})


def default_auxiliary_priors(family, y_stats):
    """Default priors for the family's auxiliary parameters."""
    out = {}
    for name, _ in family.auxiliary:
        if name == "sigma":
            out["sigma"] = Prior("HalfStudentT", {"nu": 4, "sigma": float(y_stats.sd)})
        elif name == "nu":
            out["nu"] = Prior("Gamma", {"alpha": 2, "beta": 0.1})
        else:  # kappa, alpha, lambda
            out[name] = Prior("HalfCauchy", {"beta": 1})
    return out


def default_group_sd_prior(common_prior_sd):
    """HalfNormal with scale equal to the matching common-effect prior sd."""
    if common_prior_sd is None or common_prior_sd <= 0:
        raise PriorError("cannot derive a group SD prior from a zero prior scale")
    return Prior("HalfNormal", {"sigma": float(common_prior_sd)})


# ---------------------------------------------------------------------------
# Overrides
# ---------------------------------------------------------------------------


def _as_prior(value):
    if isinstance(value, Prior):
        return value
    if isinstance(value, dict):
        return Prior.from_dict(value)
    raise PriorError(f"cannot interpret prior specification {value!r}")


def apply_overrides(defaults, overrides, term_columns):
    """Apply user priors over the defaults.

    ``overrides`` has up to three channels: ``"common"`` (every common
    effect including the intercept), ``"group_specific"`` (every group SD),
    and ``"terms"`` mapping term names to priors.  Per-term entries win over
    class-level ones.  ``term_columns`` maps a term name to the prior entries
    it owns.
    """
    if not overrides:
        return defaults
    result = defaults.copy()
    known = set(overrides) - {"common", "group_specific", "terms"}
    if known:
        raise PriorError(
            f"unknown prior override channel(s): {sorted(known)}; expected "
            "'common', 'group_specific' and/or 'terms'"
        )

    def _set(entry, prior):
        if entry == "Intercept":
            result.intercept = prior
        elif entry in result.common:
            result.common[entry] = prior
        elif entry in result.group_sd:
            if not prior.is_positive_support:
                raise PriorError(
                    f"group SD prior for {entry!r} must have non-negative support, "
                    f"got {prior}"
                )
            result.group_sd[entry] = prior
        elif entry in result.auxiliary:
            result.auxiliary[entry] = prior
        else:
            raise PriorError(f"no model parameter matches override target {entry!r}")
        result.provenance[entry] = "user"

    if "common" in overrides:
        prior = _as_prior(overrides["common"])
        if result.intercept is not None:
            _set("Intercept", prior)
        for col in result.common:
            _set(col, prior)
    if "group_specific" in overrides:
        prior = _as_prior(overrides["group_specific"])
        for entry in result.group_sd:
            _set(entry, prior)
    for name, value in (overrides.get("terms") or {}).items():
        prior = _as_prior(value)
        if name not in term_columns:
            raise PriorError(
                f"unknown term {name!r} in prior overrides; known terms: "
                + ", ".join(sorted(term_columns))
            )
        for entry in term_columns[name]:
            _set(entry, prior)
    return result


# ---------------------------------------------------------------------------
# Densities over parameter vectors and prior simulation
# ---------------------------------------------------------------------------


def log_prior(priors, values):
    """Sum of log densities and its gradient for aligned prior/value lists."""
    total = 0.0
    grad = np.zeros(len(values))
    for i, (prior, value) in enumerate(zip(priors, values)):
        lp = prior.logpdf(float(value))
        if not np.isfinite(lp):
            return -np.inf, grad
        total += lp
        grad[i] = prior.dlogpdf(float(value))
    return total, grad


def sample_priors(prior_set, group_layout, n, seed=None):
    """Simulate ``n`` joint draws from the priors.

    ``group_layout`` maps each group coefficient name to its SD entry name;
    coefficient draws are Normal(0, sd_draw) with the SD drawn first.
    Returns an ordered dict of name -> draws.
    """
    if n < 1:
        raise PriorError("need at least one prior draw")
    rng = np.random.default_rng(seed)
    out = {}
    if prior_set.intercept is not None:
        out["Intercept"] = prior_set.intercept.sample(rng, n)
    for name, prior in prior_set.common.items():
        out[name] = prior.sample(rng, n)
    sd_draws = {}
    for name, prior in prior_set.group_sd.items():
        sd_draws[name] = prior.sample(rng, n)
        out[name + "_sigma"] = sd_draws[name]
    for coef_name, sd_name in group_layout.items():
        out[coef_name] = rng.normal(0.0, 1.0, size=n) * sd_draws[sd_name]
    for name, prior in prior_set.auxiliary.items():
        out[name] = prior.sample(rng, n)
    return out
