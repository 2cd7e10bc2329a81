"""Posterior assembly and adaptive dynamic Hamiltonian Monte Carlo.

The unconstrained parameter vector is [common coefficients (centered scale),
log group SDs, standardized group coefficients, log auxiliaries].  Group
coefficients are sampled non-centered (u = sd * u_std with u_std standard
normal) to avoid hierarchical funnels; log transforms carry their Jacobian
terms in the density.

Sampling uses multinomial NUTS with the no-U-turn doubling criterion capped
at depth 10, dual-averaging step-size adaptation (gamma=0.05, t0=10,
kappa=0.75) targeting the requested acceptance statistic, and a diagonal
mass matrix estimated in expanding windows during tuning (75 initial
step-size-only iterations, variance windows of 25/50/100/... draws, and a
final 50 step-size-only iterations).  Chains run independently from
deterministic per-chain seeds and tuning draws are discarded.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError
from .families import dloglik_daux, dloglik_dmu, log_likelihood

MAX_TREE_DEPTH = 10
DIVERGENCE_ENERGY = 1000.0
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PosteriorDraws:
    """Reported-scale draws (chains x draws x parameters) plus sampler stats."""

    values: np.ndarray
    param_names: list
    stats: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def n_chains(self):
        return self.values.shape[0]

    @property
    def n_draws(self):
        return self.values.shape[1]

    def index(self, name):
        try:
            return self.param_names.index(name)
        except ValueError:
            raise FitError(f"unknown parameter {name!r}") from None

    def get(self, name):
        """Draws of one parameter as a (chains, draws) matrix."""
        return self.values[:, :, self.index(name)]


class _Posterior:
    """Precomputed pieces of the joint log density and its gradient."""

    def __init__(self, model):
        dm = model.design
        self.X = np.ascontiguousarray(dm.X)
        self.Xt = self.X.T.copy()
        self.Z = np.ascontiguousarray(dm.Z)
        self.Zt = self.Z.T.copy()
        self.y = dm.response.values
        self.trials = dm.response.trials
        self.family = model.family
        self.link = model.link
        self.layout = model.layout
        self.beta_priors = model.beta_priors()
        self.sd_priors = model.sd_priors()
        self.aux_priors = model.aux_priors()
        self.aux_names = list(model.layout.aux_names)
        self.sd_idx = model.layout.sd_index_of_u
        self.n_params = model.layout.n_params
        self.n_sd = model.layout.n_group_sd

    def _unpack(self, theta):
        L = self.layout
        return (theta[L.beta_slice], theta[L.sd_slice],
                theta[L.u_slice], theta[L.aux_slice])

    def _mu_eta(self, beta, sds, u_std):
        eta = self.X @ beta if self.X.shape[1] else np.zeros(self.X.shape[0])
        if u_std.size:
            eta = eta + self.Z @ (sds[self.sd_idx] * u_std)
        return self.link.inverse(eta), eta

    def log_likelihood(self, theta):
        beta, log_sd, u_std, log_aux = self._unpack(theta)
        mu, _ = self._mu_eta(beta, np.exp(log_sd), u_std)
        aux = dict(zip(self.aux_names, np.exp(log_aux)))
        if self.y is None or self.y.size == 0:
            return 0.0
        return log_likelihood(self.family, self.y, mu, aux, self.trials)

    def value_and_grad(self, theta):
        beta, log_sd, u_std, log_aux = self._unpack(theta)
        with np.errstate(over="ignore"):
            sds = np.exp(log_sd)
            aux_vals = np.exp(log_aux)
        aux = dict(zip(self.aux_names, aux_vals))
        grad = np.zeros(self.n_params)
        if not (np.all(np.isfinite(sds)) and np.all(np.isfinite(aux_vals))):
            return -np.inf, grad

        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            mu, eta = self._mu_eta(beta, sds, u_std)
            have_data = self.y is not None and self.y.size > 0
            ll = (log_likelihood(self.family, self.y, mu, aux, self.trials)
                  if have_data else 0.0)
        if not np.isfinite(ll):
            return -np.inf, grad

        L = self.layout
        if have_data:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                dl_deta = (dloglik_dmu(self.family, self.y, mu, aux, self.trials)
                           * self.link.dmu_deta(eta))
            if not np.all(np.isfinite(dl_deta)):
                return -np.inf, np.zeros(self.n_params)
            grad[L.beta_slice] = self.Xt @ dl_deta
            if u_std.size:
                zt = self.Zt @ dl_deta
                grad[L.u_slice] = zt * sds[self.sd_idx]
                grad[L.sd_slice] = np.bincount(
                    self.sd_idx, weights=zt * u_std, minlength=self.n_sd
                ) * sds
            if self.aux_names:
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    daux = dloglik_daux(self.family, self.y, mu, aux, self.trials)
                for i, name in enumerate(self.aux_names):
                    grad[L.aux_slice][i] = float(np.sum(daux[name])) * aux_vals[i]

        total = ll
        for i, prior in enumerate(self.beta_priors):
            lp = prior.logpdf(beta[i])
            if not np.isfinite(lp):
                return -np.inf, grad
            total += lp
            grad[L.beta_slice.start + i] += prior.dlogpdf(beta[i])
        for m, prior in enumerate(self.sd_priors):
            lp = prior.logpdf(sds[m])
            if not np.isfinite(lp):
                return -np.inf, grad
            total += lp + log_sd[m]  # positivity-transform Jacobian
            grad[L.sd_slice.start + m] += prior.dlogpdf(sds[m]) * sds[m] + 1.0
        if u_std.size:
            total += float(-0.5 * np.dot(u_std, u_std) - 0.5 * u_std.size * LOG_2PI)
            grad[L.u_slice] += -u_std
        for i, prior in enumerate(self.aux_priors):
            lp = prior.logpdf(aux_vals[i])
            if not np.isfinite(lp):
                return -np.inf, grad
            total += lp + log_aux[i]
            grad[L.aux_slice.start + i] += prior.dlogpdf(aux_vals[i]) * aux_vals[i] + 1.0

        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            return -np.inf, np.zeros(self.n_params)
        return float(total), grad


def log_posterior(model, theta):
    """Joint log density (likelihood, priors, transform Jacobians)."""
    value, _ = _Posterior(model).value_and_grad(np.asarray(theta, dtype=np.float64))
    return value


def grad_log_posterior(model, theta):
    """Analytic gradient of :func:`log_posterior`."""
    _, grad = _Posterior(model).value_and_grad(np.asarray(theta, dtype=np.float64))
    return grad


def log_likelihood_part(model, theta):
    """Just the data term of the joint density (useful for checks)."""
    return _Posterior(model).log_likelihood(np.asarray(theta, dtype=np.float64))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _init_center(model):
    layout = model.layout
    center = np.zeros(layout.n_params)
    for i, prior in enumerate(model.beta_priors()):
        center[layout.beta_slice.start + i] = prior.typical_value()
    for m, prior in enumerate(model.sd_priors()):
        center[layout.sd_slice.start + m] = np.log(max(prior.typical_value(), 1e-3))
    for i, prior in enumerate(model.aux_priors()):
        center[layout.aux_slice.start + i] = np.log(max(prior.typical_value(), 1e-3))
    return center


def initialize(model, rng, posterior=None):
    """Jittered start: prior centers (on the unconstrained scale) plus
    uniform(-1, 1) noise, retried until the posterior is finite."""
    post = posterior if posterior is not None else _Posterior(model)
    center = _init_center(model)
    for _ in range(100):
        theta = center + rng.uniform(-1.0, 1.0, size=center.size)
        value, grad = post.value_and_grad(theta)
        if np.isfinite(value) and np.all(np.isfinite(grad)):
            return theta
    raise FitError("non-finite initial energy after 100 retries")


# ---------------------------------------------------------------------------
# NUTS transition
# ---------------------------------------------------------------------------


class _State:
    __slots__ = ("theta", "r", "grad", "logp")

    def __init__(self, theta, r, grad, logp):
        self.theta = theta
        self.r = r
        self.grad = grad
        self.logp = logp


class _Tree:
    __slots__ = ("near", "far", "cand_theta", "cand_logp", "cand_h", "lsw",
                 "rho", "alpha", "n_alpha", "ok", "diverged", "n_leapfrog")

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)


def _kinetic(r, inv_mass):
    return 0.5 * float(np.dot(inv_mass * r, r))


def _leapfrog(post, state, eps, inv_mass):
    r_half = state.r + 0.5 * eps * state.grad
    theta = state.theta + eps * inv_mass * r_half
    logp, grad = post.value_and_grad(theta)
    r_new = r_half + 0.5 * eps * grad
    return _State(theta, r_new, grad, logp)


def _no_uturn(rho, near, far, inv_mass):
    return (np.dot(rho, inv_mass * near.r) > 0.0
            and np.dot(rho, inv_mass * far.r) > 0.0)


def _build_tree(post, state, depth, direction, eps, inv_mass, h0, rng):
    if depth == 0:
        new = _leapfrog(post, state, direction * eps, inv_mass)
        if np.isfinite(new.logp):
            h = -new.logp + _kinetic(new.r, inv_mass)
        else:
            h = np.inf
        diverged = (not np.isfinite(h)) or (h - h0) > DIVERGENCE_ENERGY
        dh = h0 - h
        alpha = float(np.exp(min(0.0, dh))) if np.isfinite(dh) else 0.0
        return _Tree(
            near=new, far=new, cand_theta=new.theta, cand_logp=new.logp,
            cand_h=h, lsw=(-np.inf if diverged else dh), rho=new.r.copy(),
            alpha=alpha, n_alpha=1, ok=not diverged, diverged=diverged,
            n_leapfrog=1,
        )

    first = _build_tree(post, state, depth - 1, direction, eps, inv_mass, h0, rng)
    if not first.ok:
        return first
    second = _build_tree(post, first.far, depth - 1, direction, eps, inv_mass, h0, rng)

    first.alpha += second.alpha
    first.n_alpha += second.n_alpha
    first.n_leapfrog += second.n_leapfrog
    first.diverged = first.diverged or second.diverged
    if not second.ok:
        first.ok = False
        return first

    total = np.logaddexp(first.lsw, second.lsw)
    if np.log(rng.uniform()) < second.lsw - total:
        first.cand_theta = second.cand_theta
        first.cand_logp = second.cand_logp
        first.cand_h = second.cand_h
    first.lsw = total
    first.rho = first.rho + second.rho
    first.far = second.far
    first.ok = _no_uturn(first.rho, first.near, first.far, inv_mass)
    return first


def nuts_transition(post, state, rng, eps, inv_mass, max_depth=MAX_TREE_DEPTH):
    """One multinomial-NUTS draw.  Returns (new_state, stats)."""
    mass_sd = 1.0 / np.sqrt(inv_mass)
    r0 = mass_sd * rng.normal(size=state.theta.size)
    start = _State(state.theta, r0, state.grad, state.logp)
    h0 = -start.logp + _kinetic(r0, inv_mass)

    minus = start
    plus = start
    rho = r0.copy()
    lsw = 0.0
    cand_theta, cand_logp, cand_h = start.theta, start.logp, h0
    alpha_sum, n_alpha, n_leapfrog = 0.0, 0, 0
    diverged = False
    depth = 0

    for depth in range(max_depth):
        direction = 1 if rng.uniform() < 0.5 else -1
        edge = plus if direction == 1 else minus
        tree = _build_tree(post, edge, depth, direction, eps, inv_mass, h0, rng)
        alpha_sum += tree.alpha
        n_alpha += tree.n_alpha
        n_leapfrog += tree.n_leapfrog
        diverged = diverged or tree.diverged
        if not tree.ok:
            break
        if np.log(rng.uniform()) < tree.lsw - lsw:  # biased toward the new half
            cand_theta, cand_logp, cand_h = tree.cand_theta, tree.cand_logp, tree.cand_h
        lsw = np.logaddexp(lsw, tree.lsw)
        rho = rho + tree.rho
        if direction == 1:
            plus = tree.far
        else:
            minus = tree.far
        if not _no_uturn(rho, minus, plus, inv_mass):
            depth += 1
            break
    else:
        depth = max_depth

    logp, grad = post.value_and_grad(cand_theta)
    new_state = _State(cand_theta, None, grad, logp)
    stats = {
        "divergent": diverged,
        "tree_depth": depth,
        "energy": float(cand_h),
        "accept_stat": alpha_sum / max(n_alpha, 1),
        "n_leapfrog": n_leapfrog,
    }
    return new_state, stats


# ---------------------------------------------------------------------------
# Adaptation
# ---------------------------------------------------------------------------


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    GAMMA = 0.05
    T0 = 10.0
    KAPPA = 0.75

    def __init__(self, eps0, target):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept):
        self.count += 1
        t = self.count
        frac = 1.0 / (t + self.T0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept)
        self.log_eps = self.mu - np.sqrt(t) / self.GAMMA * self.h_bar
        w = t ** (-self.KAPPA)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return np.exp(self.log_eps)

    @property
    def adapted_eps(self):
        return float(np.exp(self.log_eps_bar))


class _Welford:
    def __init__(self, dim):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def variance(self):
        if self.count < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.count - 1)
        # shrink toward unit scale; short windows are noisy
        w = self.count / (self.count + 5.0)
        return w * var + (1.0 - w) * 1e-3


def _find_reasonable_epsilon(post, state, inv_mass, rng):
    eps = 1.0
    mass_sd = 1.0 / np.sqrt(inv_mass)
    r0 = mass_sd * rng.normal(size=state.theta.size)
    h0 = -state.logp + _kinetic(r0, inv_mass)
    probe = _State(state.theta, r0, state.grad, state.logp)

    def log_accept(eps_try):
        new = _leapfrog(post, probe, eps_try, inv_mass)
        if not np.isfinite(new.logp):
            return -np.inf
        return h0 - (-new.logp + _kinetic(new.r, inv_mass))

    la = log_accept(eps)
    direction = 1.0 if la > np.log(0.5) else -1.0
    for _ in range(100):
        if direction * la <= direction * np.log(0.5):
            break
        eps *= 2.0 ** direction
        if not (1e-10 < eps < 1e7):
            break
        la = log_accept(eps)
    return eps


def _adaptation_windows(tune, init_buffer=75, term_buffer=50, base_window=25):
    """(start, end) spans of the variance-estimation windows."""
    if tune < 20:
        return []
    if init_buffer + term_buffer + base_window > tune:
        init_buffer = max(1, int(0.15 * tune))
        term_buffer = max(1, int(0.1 * tune))
        base_window = tune - init_buffer - term_buffer
        if base_window <= 0:
            return []
    windows = []
    start = init_buffer
    size = base_window
    last = tune - term_buffer
    while True:
        end = start + size
        if end + 2 * size > last:
            windows.append((start, last))
            break
        windows.append((start, end))
        start = end
        size *= 2
    return windows


def _run_chain(post, theta0, rng, draws, tune, target_accept):
    n_dim = theta0.size
    inv_mass = np.ones(n_dim)
    logp, grad = post.value_and_grad(theta0)
    state = _State(theta0, None, grad, logp)

    windows = _adaptation_windows(tune)
    eps = _find_reasonable_epsilon(post, state, inv_mass, rng)
    averager = _DualAveraging(eps, target_accept)
    welford = _Welford(n_dim)
    window_iter = iter(windows)
    window = next(window_iter, None)

    for i in range(tune):
        state, stats = nuts_transition(post, state, rng, eps, inv_mass)
        eps = averager.update(stats["accept_stat"])
        if window is not None and window[0] <= i < window[1]:
            welford.update(state.theta)
        if window is not None and i == window[1] - 1:
            inv_mass = welford.variance()
            welford = _Welford(n_dim)
            eps = _find_reasonable_epsilon(post, state, inv_mass, rng)
            averager = _DualAveraging(eps, target_accept)
            window = next(window_iter, None)
    if tune > 0:
        eps = averager.adapted_eps

    thetas = np.empty((draws, n_dim))
    stat_rows = []
    for i in range(draws):
        state, stats = nuts_transition(post, state, rng, eps, inv_mass)
        thetas[i] = state.theta
        stat_rows.append(stats)
    return thetas, stat_rows, eps


# ---------------------------------------------------------------------------
# Public fit
# ---------------------------------------------------------------------------


def default_chains():
    cores = os.cpu_count() or 2
    return min(4, max(2, cores))


def report_draws(model, theta):
    """Map one unconstrained draw to the reported scale.

    The intercept is de-centered, positive parameters are exponentiated, and
    group coefficients are rescaled by their SDs.
    """
    layout = model.layout
    beta = theta[layout.beta_slice].copy()
    sds = np.exp(theta[layout.sd_slice])
    u = sds[layout.sd_index_of_u] * theta[layout.u_slice] if layout.n_u else np.empty(0)
    aux = np.exp(theta[layout.aux_slice])
    if model.design.centered:
        beta[0] = beta[0] - float(np.dot(beta[1:], model.design.column_means[1:]))
    return np.concatenate([beta, sds, u, aux])


def fit(model, draws=1000, tune=1000, chains=None, target_accept=0.8, seed=None):
    """Sample the posterior with multi-chain adaptive NUTS.

    Tuning iterations are discarded.  Chains are seeded independently and
    deterministically from ``seed`` and merged by chain index.
    """
    if chains is None:
        chains = default_chains()
    if draws < 1 or tune < 0 or chains < 2:
        raise FitError(
            f"invalid counts: draws={draws}, tune={tune}, chains={chains} "
            "(need draws >= 1, tune >= 0, chains >= 2)"
        )
    if not (0.0 < target_accept < 1.0):
        raise FitError(f"target_accept must be in (0, 1), got {target_accept}")

    entropy = np.random.SeedSequence(seed)
    master_seed = entropy.entropy
    children = entropy.spawn(chains)

    post = _Posterior(model)
    n_params = model.layout.n_params
    values = np.empty((chains, draws, n_params))
    stats = {
        "divergent": np.zeros((chains, draws), dtype=bool),
        "tree_depth": np.zeros((chains, draws), dtype=np.int64),
        "energy": np.zeros((chains, draws)),
        "accept_stat": np.zeros((chains, draws)),
        "n_leapfrog": np.zeros((chains, draws), dtype=np.int64),
    }
    step_sizes = []

    start_time = time.time()
    for c in range(chains):
        rng = np.random.default_rng(children[c])
        theta0 = initialize(model, rng, posterior=post)
        thetas, stat_rows, eps = _run_chain(post, theta0, rng, draws, tune,
                                            target_accept)
        step_sizes.append(eps)
        for i in range(draws):
            values[c, i] = report_draws(model, thetas[i])
            for key in stats:
                stats[key][c, i] = stat_rows[i][key]
    wall_time = time.time() - start_time

    if not np.all(np.isfinite(values)):
        raise FitError("sampler produced non-finite draws")

    metadata = {
        "seed": int(master_seed) if seed is not None else master_seed,
        "requested_seed": seed,
        "draws": draws,
        "tune": tune,
        "chains": chains,
        "target_accept": target_accept,
        "step_sizes": step_sizes,
        "divergences": int(stats["divergent"].sum()),
        "wall_time": wall_time,
    }
    return PosteriorDraws(
        values=values,
        param_names=list(model.layout.names),
        stats=stats,
        metadata=metadata,
    )
