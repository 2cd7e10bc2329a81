"""In-sample and out-of-sample prediction.

``predict_mean`` pushes every posterior draw through the linear predictor
and inverse link on the requested design, giving the posterior of the mean
with shape (n_chains, n_draws, n_obs).  ``predict_pps`` additionally
simulates responses from the family at each draw.  New data is encoded
against the training level sets and transform statistics; unseen grouping
levels are an error.
"""

import numpy as np

from .design import build_for_prediction
from .errors import FitError
from .families import sample_response
from .sampler import PosteriorDraws


def _prediction_design(model, new_data):
    if new_data is None:
        dm = model.design
        return dm.uncentered_X(), dm.Z, dm.response.trials
    dm = build_for_prediction(model.terms, new_data, model.transform_state,
                              model.design)
    return dm.X, dm.Z, dm.response.trials


def _coef_matrix(draws, names):
    idx = [draws.index(name) for name in names]
    flat = draws.values.reshape(-1, draws.values.shape[2])
    return flat[:, idx] if idx else np.empty((flat.shape[0], 0))


def _mean_for(model, draws, X, Z):
    beta = _coef_matrix(draws, model.design.x_names)
    eta = beta @ X.T if beta.shape[1] else np.zeros((beta.shape[0], X.shape[0]))
    if model.design.z_names:
        u = _coef_matrix(draws, model.design.z_names)
        eta = eta + u @ Z.T
    mu = model.link.inverse(eta)
    return mu.reshape(draws.n_chains, draws.n_draws, X.shape[0])


def predict_mean(model, draws, new_data=None):
    """Posterior draws of the mean, shape (n_chains, n_draws, n_obs)."""
    X, Z, _ = _prediction_design(model, new_data)
    return _mean_for(model, draws, X, Z)


def _subsample(draws, ndraws, rng):
    if ndraws is None or ndraws >= draws.n_draws:
        return draws
    keep = np.sort(rng.choice(draws.n_draws, size=ndraws, replace=False))
    return PosteriorDraws(
        values=draws.values[:, keep, :],
        param_names=draws.param_names,
        stats={},
        metadata=dict(draws.metadata, subsampled=ndraws),
    )


def predict_pps(model, draws, new_data=None, ndraws=None, seed=None):
    """Posterior predictive draws, shape (n_chains, n_draws_used, n_obs).

    ``ndraws`` subsamples that many draws per chain before simulating.
    """
    if ndraws is not None and ndraws < 1:
        raise FitError("ndraws must be a positive count")
    rng = np.random.default_rng(seed)
    used = _subsample(draws, ndraws, rng)
    X, Z, trials = _prediction_design(model, new_data)
    if model.family.name == "binomial" and trials is None:
        raise FitError(
            "posterior predictive simulation for a binomial model needs the "
            "trials column in the prediction data"
        )
    mu = _mean_for(model, used, X, Z)

    aux_cols = {
        name: used.get(f"{model.design.response.name}_{name}")
        for name in model.layout.aux_names
    }
    out = np.empty_like(mu)
    n_chains, n_draws, _ = mu.shape
    for c in range(n_chains):
        for d in range(n_draws):
            aux = {name: float(col[c, d]) for name, col in aux_cols.items()}
            mu_cd = np.clip(mu[c, d], *_mu_bounds(model.family)) \
                if model.family.mu_domain != "real" else mu[c, d]
            out[c, d] = sample_response(model.family, rng, mu_cd, aux, trials)
    return out


def _mu_bounds(family):
    if family.mu_domain == "unit":
        return 1e-12, 1.0 - 1e-12
    return 1e-12, np.inf
