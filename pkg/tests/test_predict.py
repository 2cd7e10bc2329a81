import numpy as np
import pytest

from glmmkit import DataTable, DesignError, build_model, fit, predict_mean, predict_pps


@pytest.fixture(scope="module")
def gaussian_fit():
    rng = np.random.default_rng(100)
    n = 80
    age = rng.uniform(20, 80, size=n)
    x = rng.normal(size=n)
    y = 2.0 + 1.5 * (age - 50) / 15 - 0.5 * x + rng.normal(scale=0.4, size=n)
    data = DataTable.from_dict({"y": y, "age": age, "x": x})
    model = build_model("y ~ scale(age) + x", data)
    draws = fit(model, draws=150, tune=250, chains=2, seed=5)
    return model, draws, data


@pytest.fixture(scope="module")
def bernoulli_fit():
    rng = np.random.default_rng(200)
    n = 150
    age = rng.uniform(18, 90, size=n)
    party = rng.choice(["democrat", "independent", "republican"], size=n)
    logit = 0.4 - 0.8 * (age - 50) / 20 + (party == "democrat") * 1.5
    p = 1 / (1 + np.exp(-logit))
    vote = np.where(rng.uniform(size=n) < p, "yes", "no")
    data = DataTable.from_dict({
        "vote": list(vote), "age": age, "party": list(party),
    })
    model = build_model("vote[yes] ~ party + party:scale(age)", data,
                        family="bernoulli")
    draws = fit(model, draws=150, tune=250, chains=2, seed=6)
    return model, draws


class TestPredictMean:
    def test_shape_contract_in_sample(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        mu = predict_mean(model, draws)
        assert mu.shape == (2, 150, model.n_obs)

    def test_omitted_data_uses_training_design(self, gaussian_fit):
        model, draws, data = gaussian_fit
        np.testing.assert_allclose(
            predict_mean(model, draws),
            predict_mean(model, draws, data),
            atol=1e-12,
        )

    def test_identity_link_replays_linear_predictor(self, gaussian_fit):
        model, draws, data = gaussian_fit
        mu = predict_mean(model, draws)
        # recompute one cell by hand
        X = model.design.uncentered_X()
        beta = np.array([draws.values[1, 7, draws.index(n)]
                         for n in model.design.x_names])
        np.testing.assert_allclose(mu[1, 7], X @ beta, atol=1e-12)

    def test_deterministic(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        np.testing.assert_array_equal(predict_mean(model, draws),
                                      predict_mean(model, draws))

    def test_inverse_link_range(self, bernoulli_fit):
        model, draws = bernoulli_fit
        mu = predict_mean(model, draws)
        assert np.all(mu > 0) and np.all(mu < 1)

    def test_age_grid_shape_219(self, bernoulli_fit):
        model, draws = bernoulli_fit
        ages = np.arange(18, 91, dtype=float)
        parties = ["democrat", "republican", "independent"]
        new = DataTable.from_dict({
            "age": np.tile(ages, 3),
            "party": [p for p in parties for _ in ages],
        })
        assert new.n_rows == 219
        mu = predict_mean(model, draws, new)
        assert mu.shape == (2, 150, 219)
        assert np.all((mu > 0) & (mu < 1))

    def test_statefulness_matches_hand_standardization(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        new = DataTable.from_dict({"age": [30.0, 55.0], "x": [0.2, -1.0]})
        mu = predict_mean(model, draws, new)
        kind, mean, sd = model.transform_state.entries["scale(age)"]
        hand = np.column_stack([
            np.ones(2),
            (np.array([30.0, 55.0]) - mean) / sd,
            np.array([0.2, -1.0]),
        ])
        beta = np.stack([
            draws.values[:, :, draws.index(n)] for n in model.design.x_names
        ], axis=-1)
        expected = beta.reshape(-1, 3) @ hand.T
        np.testing.assert_allclose(mu.reshape(-1, 2), expected, atol=1e-12)

    def test_unseen_level_errors(self, bernoulli_fit):
        model, draws = bernoulli_fit
        new = DataTable.from_dict({"age": [40.0], "party": ["green"]})
        with pytest.raises(DesignError, match="green"):
            predict_mean(model, draws, new)

    def test_group_levels_reuse_training_draws(self):
        rng = np.random.default_rng(31)
        n = 90
        g = rng.choice(["A", "B", "C"], size=n)
        shift = {"A": -1.0, "B": 0.0, "C": 1.0}
        y = 2.0 + np.array([shift[v] for v in g]) + rng.normal(scale=0.3, size=n)
        data = DataTable.from_dict({"y": y, "g": list(g)})
        model = build_model("y ~ (1|g)", data)
        draws = fit(model, draws=150, tune=250, chains=2, seed=8)
        new = DataTable.from_dict({"g": ["A", "C"]})
        mu = predict_mean(model, draws, new)
        diff = (mu[:, :, 1] - mu[:, :, 0]).mean()
        assert 1.0 < diff < 3.0  # reflects the fitted group offsets

    def test_unseen_group_level_errors(self):
        rng = np.random.default_rng(32)
        data = DataTable.from_dict({
            "y": rng.normal(size=30),
            "g": list(rng.choice(["A", "B"], size=30)),
        })
        model = build_model("y ~ (1|g)", data)
        draws = fit(model, draws=50, tune=80, chains=2, seed=9)
        with pytest.raises(DesignError, match="Z"):
            predict_mean(model, draws, DataTable.from_dict({"g": ["Z"]}))


class TestPredictPps:
    def test_bernoulli_support(self, bernoulli_fit):
        model, draws = bernoulli_fit
        pps = predict_pps(model, draws, seed=1)
        assert set(np.unique(pps)) <= {0.0, 1.0}

    def test_shape_with_ndraws(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        pps = predict_pps(model, draws, ndraws=40, seed=2)
        assert pps.shape == (2, 40, model.n_obs)

    def test_seed_determinism(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        a = predict_pps(model, draws, ndraws=30, seed=3)
        b = predict_pps(model, draws, ndraws=30, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_near_degenerate_noise_collapses_to_mean(self):
        rng = np.random.default_rng(33)
        n = 120
        x = rng.normal(size=n)
        y = 1.0 + 2.0 * x + rng.normal(scale=1e-4, size=n)
        data = DataTable.from_dict({"y": y, "x": x})
        model = build_model("y ~ x", data)
        draws = fit(model, draws=100, tune=300, chains=2, seed=10,
                    target_accept=0.9)
        mu = predict_mean(model, draws)
        pps = predict_pps(model, draws, seed=11)
        assert np.max(np.abs(pps - mu)) < 1e-3

    def test_tower_property(self, gaussian_fit):
        model, draws, _ = gaussian_fit
        mu = predict_mean(model, draws)
        pps = predict_pps(model, draws, seed=12)
        mu_bar = mu.mean(axis=(0, 1))
        pps_bar = pps.mean(axis=(0, 1))
        sigma = draws.get("y_sigma").mean()
        mc_se = 3 * sigma / np.sqrt(mu.shape[0] * mu.shape[1])
        assert np.all(np.abs(pps_bar - mu_bar) < mc_se + 3 * mu.std(axis=(0, 1)).max()
                      / np.sqrt(mu.shape[0] * mu.shape[1]))
