"""Response families and link functions.

Each family is parameterized by its mean; auxiliary parameters (sigma, nu,
alpha, kappa, lambda) are handled separately.  Log-likelihoods come with
analytic derivatives with respect to the mean and each auxiliary parameter,
which the sampler composes into posterior gradients.
"""

import numpy as np
from scipy import special

from .errors import FamilyError

MU_EPS = 1e-12
LOG_2PI = float(np.log(2.0 * np.pi))


def _clip_unit(mu):
    """Clamp a probability-scale mean into [1e-12, 1 - 1e-12]."""
    return np.clip(mu, MU_EPS, 1.0 - MU_EPS)


# ---------------------------------------------------------------------------
# Links
# ---------------------------------------------------------------------------


class Link:
    """A link g with inverse g^-1 and the derivative d mu / d eta."""

    def __init__(self, name, forward, inverse, dmu_deta, forward_domain):
        self.name = name
        self._forward = forward
        self._inverse = inverse
        self._dmu_deta = dmu_deta
        self._forward_domain = forward_domain  # 'real' | 'positive' | 'unit'

    def __call__(self, mu):
        return self.forward(mu)

    def forward(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if self._forward_domain == "positive" and np.any(mu <= 0):
            raise FamilyError(f"link {self.name!r} needs a positive mean")
        if self._forward_domain == "unit" and (np.any(mu <= 0) or np.any(mu >= 1)):
            raise FamilyError(f"link {self.name!r} needs a mean in (0, 1)")
        return self._forward(mu)

    def inverse(self, eta):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return self._inverse(np.asarray(eta, dtype=np.float64))

    def dmu_deta(self, eta):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return self._dmu_deta(np.asarray(eta, dtype=np.float64))


def _probit_pdf(eta):
    return np.exp(-0.5 * eta * eta) / np.sqrt(2.0 * np.pi)


LINKS = {
    "identity": Link(
        "identity",
        lambda mu: mu,
        lambda eta: eta,
        lambda eta: np.ones_like(eta),
        "real",
    ),
    "log": Link("log", np.log, np.exp, np.exp, "positive"),
    "logit": Link(
        "logit",
        special.logit,
        special.expit,
        lambda eta: special.expit(eta) * (1.0 - special.expit(eta)),
        "unit",
    ),
    "probit": Link("probit", special.ndtri, special.ndtr, _probit_pdf, "unit"),
    "cloglog": Link(
        "cloglog",
        lambda mu: np.log(-np.log1p(-mu)),
        lambda eta: -np.expm1(-np.exp(eta)),
        lambda eta: np.exp(eta - np.exp(eta)),
        "unit",
    ),
    "inverse": Link(
        "inverse",
        lambda mu: 1.0 / mu,
        lambda eta: 1.0 / eta,
        lambda eta: -1.0 / (eta * eta),
        "positive",
    ),
    "inverse_squared": Link(
        "inverse_squared",
        lambda mu: 1.0 / (mu * mu),
        lambda eta: 1.0 / np.sqrt(eta),
        lambda eta: -0.5 * eta ** (-1.5),
        "positive",
    ),
}


def get_link(name):
    try:
        return LINKS[name]
    except KeyError:
        raise FamilyError(
            f"unknown link {name!r}; available: {', '.join(sorted(LINKS))}"
        ) from None


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


class Family:
    def __init__(self, name, display_name, links, auxiliary, mu_domain, response_kind):
        self.name = name
        self.display_name = display_name
        self.default_link = links[0]
        self.allowed_links = list(links)
        self.auxiliary = list(auxiliary)  # (name, positive) pairs
        self.mu_domain = mu_domain  # 'real' | 'positive' | 'unit'
        self.response_kind = response_kind

    @property
    def auxiliary_names(self):
        return [name for name, _ in self.auxiliary]

    def mu_valid(self, mu):
        if self.mu_domain == "positive":
            return bool(np.all(mu > 0) and np.all(np.isfinite(mu)))
        if self.mu_domain == "unit":
            return bool(np.all(mu > 0) and np.all(mu < 1))
        return bool(np.all(np.isfinite(mu)))


FAMILIES = {
    "bernoulli": Family(
        "bernoulli", "Bernoulli", ["logit", "probit", "cloglog", "identity"],
        [], "unit", "binary",
    ),
    "beta": Family(
        "beta", "Beta", ["logit", "probit", "cloglog", "identity"],
        [("kappa", True)], "unit", "unit",
    ),
    "binomial": Family(
        "binomial", "Binomial", ["logit", "probit", "cloglog", "identity"],
        [], "unit", "proportion",
    ),
    "gamma": Family(
        "gamma", "Gamma", ["inverse", "identity", "log"],
        [("alpha", True)], "positive", "positive",
    ),
    "gaussian": Family(
        "gaussian", "Gaussian", ["identity", "log", "inverse"],
        [("sigma", True)], "real", "numeric",
    ),
    "negativebinomial": Family(
        "negativebinomial", "NegativeBinomial", ["log", "identity", "cloglog"],
        [("alpha", True)], "positive", "count",
    ),
    "poisson": Family(
        "poisson", "Poisson", ["log", "identity"],
        [], "positive", "count",
    ),
    "t": Family(
        "t", "StudentT", ["identity", "log", "inverse"],
        [("sigma", True), ("nu", True)], "real", "numeric",
    ),
    "wald": Family(
        "wald", "Wald", ["inverse_squared", "inverse", "identity", "log"],
        [("lambda", True)], "positive", "positive",
    ),
}


def get_family(name):
    try:
        return FAMILIES[name]
    except KeyError:
        raise FamilyError(
            f"unknown family {name!r}; available: {', '.join(sorted(FAMILIES))}"
        ) from None


def validate_response(family, y, trials=None):
    """Check response values against the family support.  Raises FamilyError."""
    y = np.asarray(y, dtype=np.float64)
    kind = family.response_kind
    if kind == "binary":
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise FamilyError("bernoulli needs a 0/1 response")
    elif kind == "proportion":
        if trials is None:
            raise FamilyError("binomial needs a prop(successes, trials) response")
        t = np.asarray(trials, dtype=np.float64)
        if np.any(y < 0) or np.any(t < y) or np.any(t < 1):
            raise FamilyError("binomial needs 0 <= successes <= trials")
        if np.any(y != np.round(y)) or np.any(t != np.round(t)):
            raise FamilyError("binomial successes and trials must be integers")
    elif kind == "count":
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise FamilyError(f"{family.name} needs non-negative integer counts")
    elif kind == "positive":
        if np.any(y <= 0):
            raise FamilyError(f"{family.name} needs a strictly positive response")
    elif kind == "unit":
        if np.any(y <= 0) or np.any(y >= 1):
            raise FamilyError("beta needs a response strictly inside (0, 1)")
    if not np.all(np.isfinite(y)):
        raise FamilyError("response contains non-finite values")


# Per-observation log densities.  `aux` maps auxiliary names to scalars.


def _ll_gaussian(y, mu, aux, trials):
    sigma = aux["sigma"]
    z = (y - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * LOG_2PI


def _ll_t(y, mu, aux, trials):
    sigma, nu = aux["sigma"], aux["nu"]
    z = (y - mu) / sigma
    return (
        special.gammaln((nu + 1.0) / 2.0)
        - special.gammaln(nu / 2.0)
        - 0.5 * np.log(nu * np.pi)
        - np.log(sigma)
        - (nu + 1.0) / 2.0 * np.log1p(z * z / nu)
    )


def _ll_bernoulli(y, mu, aux, trials):
    p = _clip_unit(mu)
    return special.xlogy(y, p) + special.xlog1py(1.0 - y, -p)


def _ll_binomial(y, mu, aux, trials):
    p = _clip_unit(mu)
    comb = special.gammaln(trials + 1) - special.gammaln(y + 1) - special.gammaln(trials - y + 1)
    return comb + special.xlogy(y, p) + special.xlog1py(trials - y, -p)


def _ll_poisson(y, mu, aux, trials):
    return special.xlogy(y, mu) - mu - special.gammaln(y + 1.0)


def _ll_negativebinomial(y, mu, aux, trials):
    alpha = aux["alpha"]
    comb = special.gammaln(y + alpha) - special.gammaln(alpha) - special.gammaln(y + 1.0)
    return comb + alpha * np.log(alpha / (alpha + mu)) + special.xlogy(y, mu / (alpha + mu))


def _ll_gamma(y, mu, aux, trials):
    alpha = aux["alpha"]
    rate = alpha / mu
    return alpha * np.log(rate) - special.gammaln(alpha) + special.xlogy(alpha - 1.0, y) - rate * y


def _ll_beta(y, mu, aux, trials):
    kappa = aux["kappa"]
    p = _clip_unit(mu)
    a = p * kappa
    b = (1.0 - p) * kappa
    return (
        special.gammaln(kappa)
        - special.gammaln(a)
        - special.gammaln(b)
        + special.xlogy(a - 1.0, y)
        + special.xlog1py(b - 1.0, -y)
    )


def _ll_wald(y, mu, aux, trials):
    lam = aux["lambda"]
    return 0.5 * np.log(lam / (2.0 * np.pi * y ** 3)) - lam * (y - mu) ** 2 / (2.0 * mu ** 2 * y)


_LOGLIK = {
    "gaussian": _ll_gaussian,
    "t": _ll_t,
    "bernoulli": _ll_bernoulli,
    "binomial": _ll_binomial,
    "poisson": _ll_poisson,
    "negativebinomial": _ll_negativebinomial,
    "gamma": _ll_gamma,
    "beta": _ll_beta,
    "wald": _ll_wald,
}


def log_likelihood(family, y, mu, aux=None, trials=None):
    """Summed log density/mass of ``y`` given the mean vector and auxiliaries.

    Returns ``-inf`` when the mean leaves the family's domain, which the
    sampler treats as a rejected state.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if not family.mu_valid(mu):
        return -np.inf
    aux = aux or {}
    for name, positive in family.auxiliary:
        if positive and aux[name] <= 0:
            return -np.inf
    values = _LOGLIK[family.name](np.asarray(y, dtype=np.float64), mu, aux, trials)
    total = float(np.sum(values))
    return total if np.isfinite(total) else -np.inf


# Analytic derivatives of the per-observation log density.


def _dmu_gaussian(y, mu, aux, trials):
    return (y - mu) / aux["sigma"] ** 2


def _dmu_t(y, mu, aux, trials):
    sigma, nu = aux["sigma"], aux["nu"]
    r = y - mu
    return (nu + 1.0) * r / (nu * sigma * sigma + r * r)


def _dmu_bernoulli(y, mu, aux, trials):
    p = _clip_unit(mu)
    return y / p - (1.0 - y) / (1.0 - p)


def _dmu_binomial(y, mu, aux, trials):
    p = _clip_unit(mu)
    return y / p - (trials - y) / (1.0 - p)


def _dmu_poisson(y, mu, aux, trials):
    return y / mu - 1.0


def _dmu_negativebinomial(y, mu, aux, trials):
    alpha = aux["alpha"]
    return y / mu - (alpha + y) / (alpha + mu)


def _dmu_gamma(y, mu, aux, trials):
    alpha = aux["alpha"]
    return alpha * (y - mu) / (mu * mu)


def _dmu_beta(y, mu, aux, trials):
    kappa = aux["kappa"]
    p = _clip_unit(mu)
    return kappa * (
        special.digamma((1.0 - p) * kappa)
        - special.digamma(p * kappa)
        + np.log(y)
        - np.log1p(-y)
    )


def _dmu_wald(y, mu, aux, trials):
    return aux["lambda"] * (y - mu) / mu ** 3


_DLOGLIK_DMU = {
    "gaussian": _dmu_gaussian,
    "t": _dmu_t,
    "bernoulli": _dmu_bernoulli,
    "binomial": _dmu_binomial,
    "poisson": _dmu_poisson,
    "negativebinomial": _dmu_negativebinomial,
    "gamma": _dmu_gamma,
    "beta": _dmu_beta,
    "wald": _dmu_wald,
}


def dloglik_dmu(family, y, mu, aux=None, trials=None):
    """Per-observation derivative of the log density w.r.t. the mean."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    return _DLOGLIK_DMU[family.name](y, mu, aux or {}, trials)


def dloglik_daux(family, y, mu, aux, trials=None):
    """Per-observation derivatives w.r.t. each auxiliary parameter."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    out = {}
    if family.name == "gaussian":
        sigma = aux["sigma"]
        r = y - mu
        out["sigma"] = r * r / sigma ** 3 - 1.0 / sigma
    elif family.name == "t":
        sigma, nu = aux["sigma"], aux["nu"]
        r = y - mu
        denom = nu * sigma * sigma + r * r
        out["sigma"] = -1.0 / sigma + (nu + 1.0) * r * r / (sigma * denom)
        z2 = (r / sigma) ** 2
        out["nu"] = (
            0.5 * (special.digamma((nu + 1.0) / 2.0) - special.digamma(nu / 2.0))
            - 0.5 / nu
            - 0.5 * np.log1p(z2 / nu)
            + (nu + 1.0) * z2 / (2.0 * nu * (nu + z2))
        )
    elif family.name == "negativebinomial":
        alpha = aux["alpha"]
        out["alpha"] = (
            special.digamma(y + alpha)
            - special.digamma(alpha)
            + np.log(alpha)
            + 1.0
            - np.log(alpha + mu)
            - (alpha + y) / (alpha + mu)
        )
    elif family.name == "gamma":
        alpha = aux["alpha"]
        out["alpha"] = (
            np.log(alpha) + 1.0 - np.log(mu) - special.digamma(alpha) + np.log(y) - y / mu
        )
    elif family.name == "beta":
        kappa = aux["kappa"]
        p = _clip_unit(mu)
        out["kappa"] = (
            special.digamma(kappa)
            - p * special.digamma(p * kappa)
            - (1.0 - p) * special.digamma((1.0 - p) * kappa)
            + p * np.log(y)
            + (1.0 - p) * np.log1p(-y)
        )
    elif family.name == "wald":
        lam = aux["lambda"]
        out["lambda"] = 0.5 / lam - (y - mu) ** 2 / (2.0 * mu ** 2 * y)
    return out


def sample_response(family, rng, mu, aux=None, trials=None):
    """Simulate responses from the family at the given mean and auxiliaries."""
    aux = aux or {}
    mu = np.asarray(mu, dtype=np.float64)
    name = family.name
    if name == "gaussian":
        return rng.normal(mu, aux["sigma"])
    if name == "t":
        return mu + aux["sigma"] * rng.standard_t(aux["nu"], size=mu.shape)
    if name == "bernoulli":
        return rng.binomial(1, _clip_unit(mu)).astype(np.float64)
    if name == "binomial":
        return rng.binomial(np.asarray(trials, dtype=np.int64), _clip_unit(mu)).astype(np.float64)
    if name == "poisson":
        return rng.poisson(mu).astype(np.float64)
    if name == "negativebinomial":
        alpha = aux["alpha"]
        return rng.negative_binomial(alpha, alpha / (alpha + mu)).astype(np.float64)
    if name == "gamma":
        alpha = aux["alpha"]
        return rng.gamma(alpha, mu / alpha)
    if name == "beta":
        kappa = aux["kappa"]
        p = _clip_unit(mu)
        return rng.beta(p * kappa, (1.0 - p) * kappa)
    if name == "wald":
        return rng.wald(mu, aux["lambda"])
    raise FamilyError(f"cannot simulate from family {name!r}")
