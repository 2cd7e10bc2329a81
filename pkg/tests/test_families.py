import numpy as np
import pytest
from scipy import stats as sps

from glmmkit import (
    FAMILIES,
    FamilyError,
    dloglik_daux,
    dloglik_dmu,
    get_family,
    get_link,
    log_likelihood,
)
from glmmkit.families import validate_response

# family -> (default link, allowed links) exactly as the registry must expose
REGISTRY_EXPECTED = {
    "bernoulli": ("logit", ["logit", "probit", "cloglog", "identity"]),
    "beta": ("logit", ["logit", "probit", "cloglog", "identity"]),
    "binomial": ("logit", ["logit", "probit", "cloglog", "identity"]),
    "gamma": ("inverse", ["inverse", "identity", "log"]),
    "gaussian": ("identity", ["identity", "log", "inverse"]),
    "negativebinomial": ("log", ["log", "identity", "cloglog"]),
    "poisson": ("log", ["log", "identity"]),
    "t": ("identity", ["identity", "log", "inverse"]),
    "wald": ("inverse_squared", ["inverse_squared", "inverse", "identity", "log"]),
}

AUX_EXPECTED = {
    "bernoulli": [],
    "beta": ["kappa"],
    "binomial": [],
    "gamma": ["alpha"],
    "gaussian": ["sigma"],
    "negativebinomial": ["alpha"],
    "poisson": [],
    "t": ["sigma", "nu"],
    "wald": ["lambda"],
}


class TestRegistry:
    @pytest.mark.parametrize("name", sorted(REGISTRY_EXPECTED))
    def test_links_match_table(self, name):
        family = get_family(name)
        default, allowed = REGISTRY_EXPECTED[name]
        assert family.default_link == default
        assert family.allowed_links == allowed
        assert family.default_link in family.allowed_links

    @pytest.mark.parametrize("name", sorted(AUX_EXPECTED))
    def test_auxiliaries(self, name):
        family = get_family(name)
        assert family.auxiliary_names == AUX_EXPECTED[name]
        assert all(flag for _, flag in family.auxiliary)

    def test_registry_is_exactly_nine(self):
        assert sorted(FAMILIES) == sorted(REGISTRY_EXPECTED)

    def test_unknown_family(self):
        with pytest.raises(FamilyError, match="weibull"):
            get_family("weibull")

    def test_unknown_link(self):
        with pytest.raises(FamilyError):
            get_link("sqrt")


class TestLinks:
    def test_logit_inverse_at_zero(self):
        assert get_link("logit").inverse(0.0) == 0.5

    def test_cloglog_inverse_at_zero(self):
        np.testing.assert_allclose(
            get_link("cloglog").inverse(0.0), 1.0 - np.exp(-1.0), rtol=1e-15
        )

    def test_inverse_squared(self):
        np.testing.assert_allclose(get_link("inverse_squared").inverse(4.0), 0.5)

    def test_probit_matches_normal_cdf(self):
        link = get_link("probit")
        eta = np.linspace(-6, 6, 41)
        np.testing.assert_allclose(link.inverse(eta), sps.norm.cdf(eta), atol=1e-12)

    @pytest.mark.parametrize("name", sorted(set(
        link for _, links in REGISTRY_EXPECTED.values() for link in links
    )))
    def test_round_trip(self, name):
        link = get_link(name)
        rng = np.random.default_rng(99)
        if name in ("logit", "probit", "cloglog"):
            mu = rng.uniform(0.01, 0.99, size=1000)
        elif name in ("log", "inverse", "inverse_squared"):
            mu = rng.uniform(0.05, 20.0, size=1000)
        else:
            mu = rng.normal(size=1000)
        np.testing.assert_allclose(link.forward(link.inverse(link.forward(mu))),
                                   link.forward(mu), atol=1e-10, rtol=1e-10)

    @pytest.mark.parametrize("name", sorted(set(
        link for _, links in REGISTRY_EXPECTED.values() for link in links
    )))
    def test_dmu_deta_matches_finite_differences(self, name):
        link = get_link(name)
        rng = np.random.default_rng(5)
        eta = rng.uniform(0.2, 2.0, size=50) if name in ("inverse", "inverse_squared") \
            else rng.uniform(-2.0, 2.0, size=50)
        h = 1e-6
        fd = (link.inverse(eta + h) - link.inverse(eta - h)) / (2 * h)
        np.testing.assert_allclose(link.dmu_deta(eta), fd, rtol=1e-6, atol=1e-9)

    def test_forward_domain_errors(self):
        with pytest.raises(FamilyError):
            get_link("logit").forward(1.5)
        with pytest.raises(FamilyError):
            get_link("log").forward(-1.0)


def _test_points(name, rng, n=6):
    """Valid (y, mu, aux, trials) tuples for one family."""
    trials = None
    if name == "gaussian":
        y = rng.normal(size=n)
        mu = rng.normal(size=n)
        aux = {"sigma": 1.3}
    elif name == "t":
        y = rng.normal(size=n)
        mu = rng.normal(size=n)
        aux = {"sigma": 0.9, "nu": 5.0}
    elif name == "bernoulli":
        y = rng.integers(0, 2, size=n).astype(float)
        mu = rng.uniform(0.1, 0.9, size=n)
        aux = {}
    elif name == "binomial":
        trials = rng.integers(2, 20, size=n).astype(float)
        y = np.floor(trials * rng.uniform(0.2, 0.8, size=n))
        mu = rng.uniform(0.1, 0.9, size=n)
        aux = {}
    elif name == "poisson":
        y = rng.poisson(3.0, size=n).astype(float)
        mu = rng.uniform(0.5, 6.0, size=n)
        aux = {}
    elif name == "negativebinomial":
        y = rng.poisson(3.0, size=n).astype(float)
        mu = rng.uniform(0.5, 6.0, size=n)
        aux = {"alpha": 2.5}
    elif name == "gamma":
        y = rng.gamma(2.0, 1.5, size=n)
        mu = rng.uniform(0.5, 5.0, size=n)
        aux = {"alpha": 1.8}
    elif name == "beta":
        y = rng.uniform(0.05, 0.95, size=n)
        mu = rng.uniform(0.15, 0.85, size=n)
        aux = {"kappa": 4.0}
    elif name == "wald":
        y = rng.wald(2.0, 3.0, size=n)
        mu = rng.uniform(0.5, 4.0, size=n)
        aux = {"lambda": 2.0}
    else:
        raise AssertionError(name)
    return y, mu, aux, trials


SCIPY_ORACLE = {
    "gaussian": lambda y, mu, aux, t: sps.norm.logpdf(y, mu, aux["sigma"]),
    "t": lambda y, mu, aux, t: sps.t.logpdf(y, aux["nu"], mu, aux["sigma"]),
    "bernoulli": lambda y, mu, aux, t: sps.bernoulli.logpmf(y.astype(int), mu),
    "binomial": lambda y, mu, aux, t: sps.binom.logpmf(y.astype(int), t.astype(int), mu),
    "poisson": lambda y, mu, aux, t: sps.poisson.logpmf(y.astype(int), mu),
    "negativebinomial": lambda y, mu, aux, t: sps.nbinom.logpmf(
        y.astype(int), aux["alpha"], aux["alpha"] / (aux["alpha"] + mu)),
    "gamma": lambda y, mu, aux, t: sps.gamma.logpdf(
        y, aux["alpha"], scale=mu / aux["alpha"]),
    "beta": lambda y, mu, aux, t: sps.beta.logpdf(
        y, mu * aux["kappa"], (1 - mu) * aux["kappa"]),
    "wald": lambda y, mu, aux, t: sps.invgauss.logpdf(
        y, mu / aux["lambda"], scale=aux["lambda"]),
}


class TestLogLikelihood:
    def test_bernoulli_half(self):
        fam = get_family("bernoulli")
        np.testing.assert_allclose(
            log_likelihood(fam, np.array([1.0]), np.array([0.5])), np.log(0.5)
        )

    def test_poisson_zero_at_mean_one(self):
        fam = get_family("poisson")
        np.testing.assert_allclose(
            log_likelihood(fam, np.array([0.0]), np.array([1.0])), -1.0
        )

    def test_gaussian_standard_point(self):
        fam = get_family("gaussian")
        value = log_likelihood(fam, np.array([0.0]), np.array([0.0]), {"sigma": 1.0})
        np.testing.assert_allclose(value, -0.5 * np.log(2 * np.pi))

    @pytest.mark.parametrize("name", sorted(SCIPY_ORACLE))
    def test_matches_scipy(self, name):
        rng = np.random.default_rng(hash(name) % 2 ** 31)
        fam = get_family(name)
        y, mu, aux, trials = _test_points(name, rng)
        ours = log_likelihood(fam, y, mu, aux, trials)
        oracle = float(np.sum(SCIPY_ORACLE[name](y, mu, aux, trials)))
        np.testing.assert_allclose(ours, oracle, rtol=1e-10)

    def test_out_of_domain_mean_is_minus_inf(self):
        fam = get_family("poisson")
        assert log_likelihood(fam, np.array([1.0]), np.array([-0.5])) == -np.inf

    @pytest.mark.parametrize("name,total", [("poisson", 60), ("negativebinomial", 200)])
    def test_discrete_mass_sums_to_one(self, name, total):
        fam = get_family(name)
        aux = {"alpha": 2.0} if name == "negativebinomial" else {}
        support = np.arange(total, dtype=float)
        mu = np.full_like(support, 3.5)
        logs = np.array([
            log_likelihood(fam, support[i:i + 1], mu[i:i + 1], aux)
            for i in range(total)
        ])
        assert np.exp(logs[-1]) < 1e-12  # truncation point is negligible
        np.testing.assert_allclose(np.exp(logs).sum(), 1.0, atol=1e-8)

    def test_bernoulli_binomial_mass_exact(self):
        bern = get_family("bernoulli")
        masses = [np.exp(log_likelihood(bern, np.array([v]), np.array([0.3])))
                  for v in (0.0, 1.0)]
        np.testing.assert_allclose(sum(masses), 1.0, rtol=1e-14)
        binom = get_family("binomial")
        trials = np.array([7.0])
        masses = [np.exp(log_likelihood(binom, np.array([float(k)]), np.array([0.4]),
                                        trials=trials)) for k in range(8)]
        np.testing.assert_allclose(sum(masses), 1.0, rtol=1e-12)


class TestDerivatives:
    def test_gaussian_dmu_simple(self):
        fam = get_family("gaussian")
        out = dloglik_dmu(fam, np.array([1.0]), np.array([0.0]), {"sigma": 1.0})
        np.testing.assert_allclose(out, [1.0])

    def test_bernoulli_dmu_simple(self):
        fam = get_family("bernoulli")
        out = dloglik_dmu(fam, np.array([1.0]), np.array([0.5]))
        np.testing.assert_allclose(out, [2.0])

    @pytest.mark.parametrize("name", sorted(SCIPY_ORACLE))
    def test_dmu_matches_finite_differences(self, name):
        rng = np.random.default_rng(hash(name) % 2 ** 31 + 1)
        fam = get_family(name)
        for _ in range(20):
            y, mu, aux, trials = _test_points(name, rng, n=1)
            h = 1e-6 * max(1.0, abs(mu[0]))
            up = log_likelihood(fam, y, mu + h, aux, trials)
            down = log_likelihood(fam, y, mu - h, aux, trials)
            fd = (up - down) / (2 * h)
            ours = dloglik_dmu(fam, y, mu, aux, trials)[0]
            np.testing.assert_allclose(ours, fd, rtol=1e-6, atol=1e-8)

    @pytest.mark.parametrize("name", ["gaussian", "t", "negativebinomial", "gamma",
                                      "beta", "wald"])
    def test_daux_matches_finite_differences(self, name):
        rng = np.random.default_rng(hash(name) % 2 ** 31 + 2)
        fam = get_family(name)
        for _ in range(20):
            y, mu, aux, trials = _test_points(name, rng, n=1)
            grads = dloglik_daux(fam, y, mu, aux, trials)
            for aux_name in aux:
                h = 1e-6 * max(1.0, abs(aux[aux_name]))
                up = dict(aux, **{aux_name: aux[aux_name] + h})
                down = dict(aux, **{aux_name: aux[aux_name] - h})
                fd = (log_likelihood(fam, y, mu, up, trials)
                      - log_likelihood(fam, y, mu, down, trials)) / (2 * h)
                np.testing.assert_allclose(grads[aux_name][0], fd, rtol=1e-6,
                                           atol=1e-8)


class TestValidateResponse:
    def test_bernoulli_needs_01(self):
        with pytest.raises(FamilyError):
            validate_response(get_family("bernoulli"), np.array([0.0, 2.0]))

    def test_binomial_bounds(self):
        with pytest.raises(FamilyError):
            validate_response(get_family("binomial"), np.array([5.0]),
                              trials=np.array([3.0]))

    def test_beta_open_interval(self):
        with pytest.raises(FamilyError):
            validate_response(get_family("beta"), np.array([0.0, 0.5]))

    def test_gamma_positive(self):
        with pytest.raises(FamilyError):
            validate_response(get_family("gamma"), np.array([-1.0]))

    def test_count_integers(self):
        with pytest.raises(FamilyError):
            validate_response(get_family("poisson"), np.array([1.5]))
