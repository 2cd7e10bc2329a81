import numpy as np
import pytest

from glmmkit import (
    DataTable,
    GlmmkitError,
    exceedance_probability,
    ols_fit,
    partial_corr_transform,
)


def with_intercept(X):
    return np.column_stack([np.ones(X.shape[0]), X])


class TestOls:
    def test_exact_fit(self):
        rng = np.random.default_rng(1)
        X = with_intercept(rng.normal(size=(30, 2)))
        beta = np.array([1.0, -2.0, 0.5])
        y = X @ beta
        fit = ols_fit(X, y)
        np.testing.assert_allclose(fit.coefficients, beta, atol=1e-10)
        np.testing.assert_allclose(fit.rsquared, 1.0, atol=1e-10)
        np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-10)

    def test_orthogonal_response(self):
        x = np.array([-1.5, -0.5, 0.5, 1.5] * 5)
        rng = np.random.default_rng(2)
        y = rng.normal(size=x.size)
        y -= y.mean()
        y -= x * (x @ y) / (x @ x)  # project out x
        fit = ols_fit(with_intercept(x[:, None]), y)
        np.testing.assert_allclose(fit.coefficients, 0.0, atol=1e-10)
        np.testing.assert_allclose(fit.rsquared, 0.0, atol=1e-10)

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(3)
        X = with_intercept(rng.normal(size=(50, 3)))
        y = rng.normal(size=50)
        fit = ols_fit(X, y)
        oracle = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-8)

    def test_rank_deficiency_error(self):
        x = np.linspace(0, 1, 20)
        X = np.column_stack([np.ones(20), x, 2 * x])
        with pytest.raises(GlmmkitError, match="rank"):
            ols_fit(X, x)

    def test_needs_more_rows_than_columns(self):
        with pytest.raises(GlmmkitError):
            ols_fit(np.ones((3, 3)), np.ones(3))


def residualize(v, others):
    X = with_intercept(others)
    coef = np.linalg.lstsq(X, v, rcond=None)[0]
    return v - X @ coef


class TestPartialCorr:
    def test_single_predictor_constant_is_sd_ratio(self):
        rng = np.random.default_rng(4)
        x = rng.normal(scale=3.0, size=100)
        y = rng.normal(scale=0.7, size=100)
        data = DataTable.from_dict({"x": x, "y": y})
        draws = {"x": np.full((2, 10), 0.01)}
        out = partial_corr_transform(draws, data, ["x"], "y")
        expected = np.std(x, ddof=1) / np.std(y, ddof=1)
        assert abs(out.constants["x"] - expected) < 1e-12

    def test_single_predictor_matches_pearson(self):
        rng = np.random.default_rng(5)
        n = 400
        x = rng.normal(size=n)
        y = 2.0 * x + rng.normal(scale=0.3, size=n)
        data = DataTable.from_dict({"x": x, "y": y})
        slope_hat = np.linalg.lstsq(with_intercept(x[:, None]), y, rcond=None)[0][1]
        draws = {"x": np.full((2, 50), slope_hat)}
        out = partial_corr_transform(draws, data, ["x"], "y")
        pearson = np.corrcoef(x, y)[0, 1]
        np.testing.assert_allclose(out.draws["x"][0, 0], pearson, rtol=1e-10)

    def test_zero_draws_map_to_zero(self):
        rng = np.random.default_rng(6)
        data = DataTable.from_dict({
            "x": rng.normal(size=50), "w": rng.normal(size=50),
            "y": rng.normal(size=50),
        })
        draws = {"x": np.zeros((2, 20)), "w": np.zeros((2, 20))}
        out = partial_corr_transform(draws, data, ["x", "w"], "y")
        np.testing.assert_array_equal(out.draws["x"], 0.0)
        np.testing.assert_array_equal(out.draws["w"], 0.0)

    def test_linear_in_draws(self):
        rng = np.random.default_rng(7)
        data = DataTable.from_dict({
            "x": rng.normal(size=60), "w": rng.normal(size=60),
            "y": rng.normal(size=60),
        })
        base = {"x": rng.normal(size=(2, 30)) * 0.1,
                "w": rng.normal(size=(2, 30)) * 0.1}
        tripled = {k: 3.0 * v for k, v in base.items()}
        out1 = partial_corr_transform(base, data, ["x", "w"], "y")
        out3 = partial_corr_transform(tripled, data, ["x", "w"], "y")
        np.testing.assert_allclose(out3.draws["x"], 3.0 * out1.draws["x"], rtol=1e-15)

    @pytest.mark.parametrize("n_pred", [2, 3, 4])
    def test_ols_point_estimates_match_residual_correlation(self, n_pred):
        # plugging OLS estimates through the transform must reproduce the
        # brute-force correlation of residualized predictor and response
        rng = np.random.default_rng(40 + n_pred)
        n = 300
        base = rng.normal(size=(n, n_pred))
        X = base @ rng.normal(size=(n_pred, n_pred)) * 0.5 + base
        beta = rng.normal(size=n_pred)
        y = X @ beta + rng.normal(scale=1.5, size=n)
        cols = {f"x{i + 1}": X[:, i] for i in range(n_pred)}
        data = DataTable.from_dict({**cols, "y": y})
        names = list(cols)
        ols_coefs = np.linalg.lstsq(with_intercept(X), y, rcond=None)[0][1:]
        draws = {name: np.full((1, 1), ols_coefs[i]) for i, name in enumerate(names)}
        out = partial_corr_transform(draws, data, names, "y")
        for i, name in enumerate(names):
            others = np.delete(X, i, axis=1)
            rx = residualize(X[:, i], others)
            ry = residualize(y, others)
            oracle = float(np.corrcoef(rx, ry)[0, 1])
            np.testing.assert_allclose(out.draws[name][0, 0], oracle, atol=1e-10)

    def test_warns_outside_unit_interval(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        data = DataTable.from_dict({"x": x, "y": y})
        big = 1.2 / (np.std(x, ddof=1) / np.std(y, ddof=1))
        with pytest.warns(UserWarning, match="exceed 1"):
            partial_corr_transform({"x": np.full((1, 5), big)}, data, ["x"], "y")

    def test_errors_beyond_band(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=50)
        y = rng.normal(size=50)
        data = DataTable.from_dict({"x": x, "y": y})
        huge = 5.0 / (np.std(x, ddof=1) / np.std(y, ddof=1))
        with pytest.raises(GlmmkitError, match="broken down"):
            partial_corr_transform({"x": np.full((1, 5), huge)}, data, ["x"], "y")


class TestExceedance:
    def test_identical_arrays(self):
        a = np.linspace(0, 1, 100)
        assert exceedance_probability(a, a) == 0.0

    def test_strict_dominance(self):
        assert exceedance_probability(np.ones(50), np.zeros(50)) == 1.0

    def test_symmetric_independent(self):
        rng = np.random.default_rng(10)
        a = rng.normal(size=100_000)
        b = rng.normal(size=100_000)
        assert abs(exceedance_probability(a, b) - 0.5) < 0.01

    def test_squared_scale(self):
        # -2 beats 1 on the squared scale
        assert exceedance_probability(np.array([-2.0]), np.array([1.0])) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(GlmmkitError):
            exceedance_probability(np.ones(3), np.ones(4))
