"""Posterior summaries and convergence diagnostics.

R-hat is the rank-normalized split statistic: chains are split in half,
all draws are ranked jointly, ranks map through the normal quantile
function, and the classic between/within variance ratio is evaluated on
both the rank-normalized draws and their folded (absolute deviation from
the median) counterpart, keeping the larger value.  Effective sample sizes
use the autocorrelation-sum estimator with Geyer's initial monotone
sequence truncation; the tail variant takes the minimum over 5% and 95%
quantile-exceedance indicators.
"""

import numpy as np
from scipy import stats as sps

from .errors import GlmmkitError

SUMMARY_COLUMNS = [
    "mean", "sd", "hdi_3%", "hdi_97%",
    "mcse_mean", "mcse_sd", "ess_bulk", "ess_tail", "r_hat",
]


def _check_chains(chains, min_draws=4):
    chains = np.asarray(chains, dtype=np.float64)
    if chains.ndim != 2:
        raise GlmmkitError("expected a (chains, draws) matrix")
    if chains.shape[0] < 2:
        raise GlmmkitError("diagnostics need at least 2 chains")
    if chains.shape[1] < min_draws:
        raise GlmmkitError(f"diagnostics need at least {min_draws} draws per chain")
    return chains


def _split_chains(ary):
    half = ary.shape[1] // 2
    return np.vstack((ary[:, :half], ary[:, -half:]))


def _z_scale(ary):
    """Joint average ranks mapped through the normal quantile function."""
    size = ary.size
    rank = sps.rankdata(ary, method="average")
    z = sps.norm.ppf((rank - 0.5) / size)
    return z.reshape(ary.shape)


def _rhat_single(ary):
    n_chain, n_draw = ary.shape
    chain_mean = ary.mean(axis=1)
    chain_var = ary.var(axis=1, ddof=1)
    between = n_draw * np.var(chain_mean, ddof=1)
    within = np.mean(chain_var)
    var_hat = (n_draw - 1.0) / n_draw * within + between / n_draw
    return float(np.sqrt(var_hat / within))


def r_hat(chains):
    """Rank-normalized split R-hat (max of bulk and folded variants)."""
    ary = _check_chains(chains)
    if np.ptp(ary) == 0.0:
        return 1.0  # constant draws carry no mixing information
    split = _split_chains(ary)
    bulk = _rhat_single(_z_scale(split))
    folded = _rhat_single(_z_scale(_split_chains(np.abs(ary - np.median(ary)))))
    return max(bulk, folded)


def _autocov(x):
    n = x.size
    x = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    fft = np.fft.rfft(x, size)
    acov = np.fft.irfft(fft * np.conjugate(fft), size)[:n].real
    return acov / n


def _ess_core(ary):
    """Autocorrelation-sum ESS of a (chains, draws) array (already split)."""
    n_chain, n_draw = ary.shape
    acov = np.asarray([_autocov(ary[c]) for c in range(n_chain)])
    chain_mean = ary.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += np.var(chain_mean, ddof=1)
    if var_plus == 0.0:
        return float(ary.size)

    rho_hat = np.zeros(n_draw)
    rho_hat[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho_hat[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        rho_hat[t + 1] = rho_even
        if (rho_even + rho_odd) >= 0.0:
            rho_hat[t + 2] = rho_odd
        t += 2
    max_t = t

    # Geyer initial monotone sequence
    t = 1
    while t <= max_t - 2:
        if (rho_hat[t + 1] + rho_hat[t + 2]) > (rho_hat[t - 1] + rho_hat[t]):
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0
            rho_hat[t + 2] = rho_hat[t + 1]
        t += 2

    tau_hat = -1.0 + 2.0 * np.sum(rho_hat[:max_t]) + np.sum(rho_hat[max_t + 1:max_t + 2])
    tau_hat = max(tau_hat, 1.0 / np.log10(ary.size + 1.0))
    return float(ary.size / tau_hat)


def ess(chains, kind="bulk"):
    """Effective sample size of the bulk or the tails."""
    ary = _check_chains(chains)
    if np.ptp(ary) == 0.0:
        return float(ary.size)  # convention for constant input
    if kind == "bulk":
        return _ess_core(_z_scale(_split_chains(ary)))
    if kind == "tail":
        out = []
        for prob in (0.05, 0.95):
            quantile = np.quantile(ary, prob)
            indicator = (ary <= quantile).astype(np.float64)
            if np.ptp(indicator) == 0.0:
                out.append(float(ary.size))
            else:
                out.append(_ess_core(_z_scale(_split_chains(indicator))))
        return min(out)
    raise GlmmkitError(f"unknown ess kind {kind!r}; use 'bulk' or 'tail'")


def mcse(chains, which="mean"):
    """Monte Carlo standard error of the posterior mean or sd."""
    ary = _check_chains(chains)
    sd = float(np.std(ary, ddof=1))
    if sd == 0.0:
        return 0.0
    if which == "mean":
        return sd / np.sqrt(ess(ary, "bulk"))
    if which == "sd":
        ess_sd = min(_ess_core(_split_chains(ary)),
                     _ess_core(_split_chains(ary ** 2)))
        ess_sd = max(ess_sd, 2.0)
        factor = np.sqrt(np.exp(1.0) * (1.0 - 1.0 / ess_sd) ** (ess_sd - 1.0) - 1.0)
        return sd * factor
    raise GlmmkitError(f"unknown mcse kind {which!r}; use 'mean' or 'sd'")


def hdi(draws, prob=0.94):
    """Shortest contiguous interval containing ceil(prob * n) sorted draws."""
    draws = np.asarray(draws, dtype=np.float64).ravel()
    if draws.size < 10:
        raise GlmmkitError("hdi needs at least 10 draws")
    if not 0.0 < prob < 1.0:
        raise GlmmkitError("hdi prob must be in (0, 1)")
    sorted_draws = np.sort(draws)
    window = int(np.ceil(prob * sorted_draws.size))
    window = min(window, sorted_draws.size)
    widths = sorted_draws[window - 1:] - sorted_draws[:sorted_draws.size - window + 1]
    best = int(np.argmin(widths))
    return float(sorted_draws[best]), float(sorted_draws[best + window - 1])


def rank_histogram_data(chains, bins=20):
    """Per-chain histograms of the jointly ranked draws.

    Uniform histograms across chains indicate good mixing.  Returns
    ``(bin_edges, counts)`` with one row of counts per chain.
    """
    ary = _check_chains(chains)
    ranks = sps.rankdata(ary, method="average").reshape(ary.shape)
    edges = np.linspace(0.5, ary.size + 0.5, bins + 1)
    counts = np.vstack([np.histogram(ranks[c], bins=edges)[0]
                        for c in range(ary.shape[0])])
    return edges, counts


class SummaryTable:
    """Rows of per-parameter summaries with fixed column order."""

    def __init__(self, rows):
        self.rows = rows  # list of (name, dict)

    def __iter__(self):
        return iter(self.rows)

    def row(self, name):
        for row_name, values in self.rows:
            if row_name == name:
                return values
        raise GlmmkitError(f"no summary row for {name!r}")

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("parameter," + ",".join(SUMMARY_COLUMNS) + "\n")
            for name, values in self.rows:
                cells = [repr(float(values[c])) for c in SUMMARY_COLUMNS]
                handle.write(name + "," + ",".join(cells) + "\n")

    def to_text(self):
        header = ["parameter"] + SUMMARY_COLUMNS
        table = [header]
        for name, values in self.rows:
            table.append([name] + [f"{values[c]:.3f}" for c in SUMMARY_COLUMNS])
        widths = [max(len(row[j]) for row in table) for j in range(len(header))]
        lines = []
        for row in table:
            lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
        return "\n".join(lines) + "\n"


def summarize(draws, prob=0.94):
    """Summary table with posterior statistics and sampling diagnostics."""
    rows = []
    for j, name in enumerate(draws.param_names):
        matrix = draws.values[:, :, j]
        flat = matrix.ravel()
        lo, hi = hdi(flat, prob)
        rows.append((name, {
            "mean": float(np.mean(flat)),
            "sd": float(np.std(flat, ddof=1)),
            "hdi_3%": lo,
            "hdi_97%": hi,
            "mcse_mean": mcse(matrix, "mean"),
            "mcse_sd": mcse(matrix, "sd"),
            "ess_bulk": ess(matrix, "bulk"),
            "ess_tail": ess(matrix, "tail"),
            "r_hat": r_hat(matrix),
        }))
    return SummaryTable(rows)
