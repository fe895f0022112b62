"""Diagnostics: metrics, thinning, R-hat family, MCSE, summaries, draws."""

import numpy as np
import pytest
from scipy.special import ndtri
from scipy.stats import rankdata

from bayesmc import (
    Dataset,
    DimensionError,
    InvalidParameterError,
    ModelSpec,
    SamplerConfig,
    UndefinedDiagnosticError,
    accuracy,
    build_model,
    mcse_batch_means,
    model_draws,
    param_names,
    posterior_summary,
    rhat_classic,
    rmse,
    run_multi_chain,
    split_rhat,
    thin,
)
from bayesmc.diagnostics import rank_normalize
from bayesmc.errors import DataError

REG_SPEC = ModelSpec(family="linear", task="regression", input_num=1,
                     learning_rate=0.1)


def small_regression_dataset(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(40, 1))
    y = 1.5 * x[:, 0] - 0.2 + rng.normal(0.0, 0.1, size=40)
    return Dataset(name="toy", task="regression",
                   x_train=x[:30], y_train=y[:30],
                   x_test=x[30:], y_test=y[30:],
                   feature_mins=np.zeros(1), feature_maxs=np.ones(1))


@pytest.fixture(scope="module")
def regression_chainset():
    data = small_regression_dataset()
    config = SamplerConfig(n_samples=60, burn_in_fraction=0.5,
                           step_theta=0.1, step_eta=0.05, seed=3)
    return data, run_multi_chain(REG_SPEC, data, config, n_chains=2)


class TestMetrics:
    def test_rmse_oracle(self):
        assert rmse([1.0, 2.0], [0.0, 0.0]) == pytest.approx(np.sqrt(2.5))
        assert rmse([3.0, -1.0], [3.0, -1.0]) == 0.0

    def test_rmse_errors(self):
        with pytest.raises(DimensionError):
            rmse([1.0], [1.0, 2.0])
        with pytest.raises(DimensionError):
            rmse([], [])

    def test_accuracy_oracle(self):
        assert accuracy([0, 1, 2, 0], [0, 1, 1, 1]) == 50.0
        assert accuracy([1, 1], [1, 1]) == 100.0

    def test_accuracy_errors(self):
        with pytest.raises(DimensionError):
            accuracy([1], [1, 2])
        with pytest.raises(DimensionError):
            accuracy([], [])


class TestThin:
    def test_keeps_strided_rows(self):
        np.testing.assert_array_equal(thin(np.arange(10), 3), [0, 3, 6, 9])
        np.testing.assert_array_equal(thin(np.arange(5), 1), np.arange(5))

    def test_two_dimensional_rows(self):
        x = np.arange(12).reshape(6, 2)
        np.testing.assert_array_equal(thin(x, 2), x[[0, 2, 4]])

    def test_invalid_factor(self):
        for factor in (0, -1, 2.5):
            with pytest.raises(InvalidParameterError):
                thin(np.arange(4), factor)


class TestRankNormalize:
    def test_matches_blom_formula(self):
        x = np.array([3.0, -1.0, 2.0, 2.0, 10.0])
        expected = ndtri((rankdata(x, method="average") - 0.375)
                         / (x.size + 0.25))
        np.testing.assert_allclose(rank_normalize(x), expected, rtol=1e-13)

    def test_preserves_shape_and_order(self):
        x = np.random.default_rng(0).normal(size=(3, 7))
        z = rank_normalize(x)
        assert z.shape == (3, 7)
        flat_x, flat_z = x.ravel(), z.ravel()
        order = np.argsort(flat_x)
        assert np.all(np.diff(flat_z[order]) > 0)

    def test_ties_share_scores(self):
        z = rank_normalize(np.array([1.0, 5.0, 1.0, 2.0]))
        assert z[0] == z[2]


class TestRhatClassic:
    def test_two_by_two_oracle(self):
        # W = 0.5, B = 1.0, n = 2 -> sqrt((0.25 + 0.5)/0.5) = sqrt(1.5).
        assert rhat_classic([[0.0, 1.0], [1.0, 2.0]]) == pytest.approx(
            np.sqrt(1.5), abs=1e-15)

    def test_iid_chains_near_one(self):
        x = np.random.default_rng(5).normal(size=(4, 2000))
        assert 0.99 < rhat_classic(x) < 1.05

    def test_zero_within_variance_is_inf(self):
        assert rhat_classic([[1.0, 1.0], [2.0, 2.0]]) == np.inf

    def test_identical_everything_undefined(self):
        with pytest.raises(UndefinedDiagnosticError):
            rhat_classic([[1.0, 1.0], [1.0, 1.0]])

    def test_shape_validation(self):
        with pytest.raises(DimensionError):
            rhat_classic([1.0, 2.0, 3.0])
        with pytest.raises(InvalidParameterError):
            rhat_classic([[1.0, 2.0]])
        with pytest.raises(InvalidParameterError):
            rhat_classic([[1.0], [2.0]])


class TestSplitRhat:
    def test_iid_chains_in_unit_band(self):
        x = np.random.default_rng(99).normal(size=(4, 1000))
        assert 0.99 < split_rhat(x) < 1.05

    def test_separated_means_flagged(self):
        rng = np.random.default_rng(8)
        x = np.vstack([rng.normal(0.0, 1.0, size=1000),
                       rng.normal(5.0, 1.0, size=1000)])
        assert split_rhat(x) > 1.5

    def test_affine_invariance(self):
        x = np.random.default_rng(21).normal(size=(4, 500))
        assert abs(split_rhat(3.0 * x + 7.0) - split_rhat(x)) <= 1e-10

    def test_single_chain_vector_accepted(self):
        x = np.random.default_rng(2).normal(size=1000)
        assert 0.99 < split_rhat(x) < 1.1

    def test_odd_length_drops_middle_sample(self):
        # n=5 keeps [:2] and [3:], so the middle value never participates.
        assert split_rhat([0.0, 1.0, 1000.0, 2.0, 3.0]) == split_rhat(
            [0.0, 1.0, 2.0, 3.0])

    def test_constant_chains_undefined(self):
        with pytest.raises(UndefinedDiagnosticError):
            split_rhat(np.ones((2, 10)))

    def test_too_short_to_split(self):
        with pytest.raises(InvalidParameterError):
            split_rhat(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))

    def test_chainset_requires_parameter_index(self, regression_chainset):
        _, chainset = regression_chainset
        with pytest.raises(InvalidParameterError):
            split_rhat(chainset)
        value = split_rhat(chainset, parameter_index=0)
        assert np.isfinite(value) and value > 0


class TestMcseBatchMeans:
    def test_iid_scaling(self):
        x = np.random.default_rng(3).normal(size=5000)
        est = mcse_batch_means(x, n_batches=50)
        ref = 1.0 / np.sqrt(5000)
        assert 0.5 * ref < est < 1.5 * ref

    def test_leading_remainder_trimmed_oracle(self):
        # arange(7), 2 batches of 3: drops the first value, means (2, 5).
        assert mcse_batch_means(np.arange(7), n_batches=2) == pytest.approx(
            1.5, abs=1e-15)

    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            mcse_batch_means(np.arange(100), n_batches=1)
        with pytest.raises(InvalidParameterError):
            mcse_batch_means(np.arange(10), n_batches=50)


class TestPosteriorSummary:
    def test_array_path_matches_numpy(self):
        rng = np.random.default_rng(11)
        chains = [rng.normal(size=(200, 2)) for _ in range(3)]
        rows = posterior_summary(chains)
        assert [r.name for r in rows] == ["p0", "p1"]
        pooled = np.concatenate([c[:, 0] for c in chains])
        assert rows[0].mean == pytest.approx(pooled.mean(), rel=1e-12)
        assert rows[0].std == pytest.approx(pooled.std(), rel=1e-12)
        assert rows[0].q05 == pytest.approx(np.percentile(pooled, 5))
        assert rows[0].q50 == pytest.approx(np.percentile(pooled, 50))
        assert rows[0].q95 == pytest.approx(np.percentile(pooled, 95))
        assert rows[0].ci_lo == pytest.approx(np.percentile(pooled, 2.5))
        assert rows[0].ci_hi == pytest.approx(np.percentile(pooled, 97.5))
        assert 0.9 < rows[0].rhat < 1.1

    def test_as_row_keys(self):
        rows = posterior_summary([np.zeros((10, 1)) + np.arange(10)[:, None],
                                  np.ones((10, 1)) + np.arange(10)[:, None]])
        assert set(rows[0].as_row()) == {
            "name", "mean", "std", "q05", "q50", "q95", "rhat"}

    def test_constant_column_gets_nan_rhat(self):
        rows = posterior_summary([np.ones((20, 1)), np.ones((20, 1))])
        assert np.isnan(rows[0].rhat)
        assert rows[0].mean == 1.0

    def test_validation(self):
        with pytest.raises(DataError):
            posterior_summary([])
        with pytest.raises(DimensionError):
            posterior_summary([np.zeros((5, 2)), np.zeros((6, 2))])
        with pytest.raises(DimensionError):
            posterior_summary([np.zeros((5, 2))], names=["only-one"])

    def test_chainset_path_labels_and_tau(self, regression_chainset):
        _, chainset = regression_chainset
        rows = posterior_summary(chainset)
        assert [r.name for r in rows] == param_names(REG_SPEC)
        assert rows[-1].name == "tau"
        pooled_tau = chainset.pooled_tau()
        assert rows[-1].mean == pytest.approx(pooled_tau.mean(), rel=1e-12)


class TestModelDraws:
    def test_zero_variance_pool_is_deterministic(self):
        theta = np.array([2.0, -1.0])
        pool = np.tile(theta, (6, 1))
        x = np.array([[0.0], [0.5], [1.0]])
        band = model_draws(pool, REG_SPEC, x, num_draws=9, seed=4)
        expected = build_model(REG_SPEC).evaluate(x, theta)[:, 0]
        np.testing.assert_allclose(band.mean, expected, rtol=1e-12)
        np.testing.assert_allclose(band.lo, expected, rtol=1e-12)
        np.testing.assert_allclose(band.hi, expected, rtol=1e-12)

    def test_empirical_sequential_replays_pool_in_order(self):
        pool = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
        x = np.array([[1.0], [2.0]])
        band = model_draws(pool, REG_SPEC, x, num_draws=3, mode="empirical",
                           sequential=True)
        model = build_model(REG_SPEC)
        for s in range(3):
            np.testing.assert_array_equal(
                band.draws[s], model.evaluate(x, pool[s])[:, 0])

    def test_empirical_sequential_reproduces_stored_predictions(
            self, regression_chainset):
        data, chainset = regression_chainset
        chain = chainset.chains[0]
        single = run_multi_chain(REG_SPEC, data, chain.config, n_chains=1)
        band = model_draws(single, REG_SPEC, data.x_train,
                           num_draws=chain.n_kept, mode="empirical",
                           sequential=True)
        np.testing.assert_array_equal(band.draws, chain.pred_train)

    def test_gaussian_approx_seeded_reproducible(self):
        pool = np.random.default_rng(0).normal(size=(50, 2))
        x = np.array([[0.3]])
        a = model_draws(pool, REG_SPEC, x, num_draws=20, seed=9)
        b = model_draws(pool, REG_SPEC, x, num_draws=20, seed=9)
        np.testing.assert_array_equal(a.draws, b.draws)

    def test_classification_modal_center(self):
        spec = ModelSpec(family="linear", task="classification",
                         input_num=1, output_num=3)
        # Three rows voting class 2, one voting class 0 (bias-only logits).
        vote2 = np.array([0.0, 0.0, 0.0, -5.0, -5.0, 5.0])
        vote0 = np.array([0.0, 0.0, 0.0, 5.0, -5.0, -5.0])
        pool = np.vstack([vote2, vote2, vote2, vote0])
        band = model_draws(pool, spec, np.array([[0.5]]), num_draws=4,
                           mode="empirical", sequential=True)
        assert band.draws.dtype.kind == "i"
        assert band.mean[0] == 2

    def test_validation(self):
        pool = np.zeros((5, 2))
        x = np.array([[1.0]])
        with pytest.raises(InvalidParameterError):
            model_draws(pool, REG_SPEC, x, num_draws=0)
        with pytest.raises(InvalidParameterError):
            model_draws(pool, REG_SPEC, x, num_draws=3, mode="bogus")
        with pytest.raises(DimensionError):
            model_draws(np.zeros((5, 3)), REG_SPEC, x, num_draws=3)
