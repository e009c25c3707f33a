import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ndtr

from lsbp.model import (
    Dataset,
    DegenerateSimplexError,
    MixtureParams,
    ModelConfig,
    compute_weights,
    conditional_cdf,
    conditional_density,
    conditional_log_density,
    continuation_ratio,
    log_likelihood,
    stick_break_log_weights,
    truncation_bound,
)

from conftest import random_params

STD_NORMAL_AT_0 = 1.0 / np.sqrt(2.0 * np.pi)


def params_for(H, P=1, R=1, alpha=None, beta=None, sigma2=None):
    return MixtureParams(
        alpha=np.zeros((H - 1, R)) if alpha is None else np.asarray(alpha, float),
        beta=np.zeros((H, P)) if beta is None else np.asarray(beta, float),
        sigma2=np.ones(H) if sigma2 is None else np.asarray(sigma2, float),
    )


class TestComputeWeights:
    def test_zero_logits_halve_the_stick(self):
        w = compute_weights(np.array([1.0]), np.zeros((2, 1)))
        np.testing.assert_allclose(w.nu, [0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose(w.pi, [0.5, 0.25, 0.25], atol=1e-15)

    def test_log_three_logit(self):
        # logistic(log 3) = 3/4
        w = compute_weights(np.array([1.0]), np.array([[np.log(3.0)]]))
        np.testing.assert_allclose(w.pi, [0.75, 0.25], atol=1e-12)

    def test_single_component(self):
        w = compute_weights(np.array([1.0, -2.0]), np.zeros((0, 2)))
        np.testing.assert_allclose(w.pi, [1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            compute_weights(np.array([1.0, 2.0]), np.zeros((2, 3)))

    @given(
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=0, max_value=2 ** 31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_simplex_property(self, H, R, seed):
        rng = np.random.default_rng(seed)
        psi = rng.normal(scale=2.0, size=R)
        alpha = rng.normal(scale=3.0, size=(H - 1, R))
        w = compute_weights(psi, alpha)
        assert np.all(w.pi >= 0)
        assert abs(w.pi.sum() - 1.0) < 1e-12

    @given(
        st.integers(min_value=2, max_value=8),
        st.integers(min_value=0, max_value=2 ** 31 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_with_continuation_ratio(self, H, seed):
        rng = np.random.default_rng(seed)
        psi = rng.normal(size=2)
        alpha = rng.normal(scale=1.5, size=(H - 1, 2))
        w = compute_weights(psi, alpha)
        nu_full = continuation_ratio(w.pi)
        np.testing.assert_allclose(nu_full[:-1], w.nu, atol=1e-12)
        assert abs(nu_full[-1] - 1.0) < 1e-12


class TestContinuationRatio:
    def test_textbook_inverse(self):
        np.testing.assert_allclose(
            continuation_ratio([0.5, 0.25, 0.25]), [0.5, 0.5, 1.0], atol=1e-15
        )

    def test_single(self):
        np.testing.assert_allclose(continuation_ratio([1.0]), [1.0])

    def test_two_component(self):
        np.testing.assert_allclose(
            continuation_ratio([0.75, 0.25]), [0.75, 1.0], atol=1e-15
        )

    def test_degenerate_survivor(self):
        with pytest.raises(DegenerateSimplexError):
            continuation_ratio([1.0, 0.0, 0.0])

    def test_rejects_non_simplex(self):
        with pytest.raises(ValueError):
            continuation_ratio([0.7, 0.7])


class TestConditionalDensity:
    def test_standard_normal_at_zero(self):
        p = params_for(H=1)
        val = conditional_density(0.0, [1.0], [1.0], p)
        assert val == pytest.approx(STD_NORMAL_AT_0, abs=1e-7)
        assert val == pytest.approx(0.3989423, abs=1e-7)

    def test_symmetric_two_component(self):
        # equal weights, means +-1, unit variance, evaluated at 0: phi(1)
        p = params_for(H=2, alpha=[[0.0]], beta=[[1.0], [-1.0]])
        expected = np.exp(-0.5) / np.sqrt(2 * np.pi)
        assert conditional_density(0.0, [1.0], [1.0], p) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.2419707, abs=1e-7)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        config = ModelConfig.standard(H=4, P=2, R=2)
        p = random_params(config, rng)
        lam, psi = np.array([1.0, 0.3]), np.array([1.0, -0.5])
        total, err = quad(lambda y: conditional_density(y, lam, psi, p),
                          -np.inf, np.inf, limit=200)
        assert abs(total - 1.0) < 1e-6

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(5)
        config = ModelConfig.standard(H=3, P=2, R=2)
        p = random_params(config, rng)
        ys = np.linspace(-50, 50, 301)
        vals = conditional_density(ys, [1.0, 0.2], [1.0, 0.1], p)
        assert np.all(vals >= 0)
        assert np.all(np.isfinite(vals))


class TestConditionalCdf:
    def test_symmetry(self):
        p = params_for(H=1)
        assert conditional_cdf(0.0, [1.0], [1.0], p) == pytest.approx(0.5, abs=1e-12)

    def test_limits(self):
        p = params_for(H=2, alpha=[[0.3]], beta=[[0.5], [-2.0]], sigma2=[1.0, 0.25])
        assert conditional_cdf(60.0, [1.0], [1.0], p) == pytest.approx(1.0, abs=1e-12)
        assert conditional_cdf(-60.0, [1.0], [1.0], p) == pytest.approx(0.0, abs=1e-12)

    def test_two_component_hand_value(self):
        # weights (1/2, 1/2), means (0, 3), unit sd, threshold 0
        p = params_for(H=2, alpha=[[0.0]], beta=[[0.0], [3.0]])
        expected = 0.5 * 0.5 + 0.5 * float(ndtr(-3.0))
        got = conditional_cdf(0.0, [1.0], [1.0], p)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.2506750, abs=1e-7)

    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_nondecreasing(self, seed):
        rng = np.random.default_rng(seed)
        config = ModelConfig.standard(H=3, P=2, R=2)
        p = random_params(config, rng)
        ys = np.linspace(-8, 8, 200)
        vals = conditional_cdf(ys, [1.0, 0.4], [1.0, -0.2], p)
        assert np.all(np.diff(vals) >= -1e-12)


class TestLogLikelihood:
    def test_single_unit_reduces_to_log_density(self):
        p = params_for(H=2, alpha=[[0.4]], beta=[[0.2], [-1.0]], sigma2=[1.0, 0.5])
        data = Dataset(y=[0.7], Lambda=[[1.0]], Psi=[[1.0]])
        assert log_likelihood(data, p) == pytest.approx(
            conditional_log_density(0.7, [1.0], [1.0], p), abs=1e-12
        )

    def test_permutation_invariance(self, rng):
        config = ModelConfig.standard(H=3, P=2, R=2)
        p = random_params(config, rng)
        n = 40
        y = rng.normal(size=n)
        Lam = np.column_stack([np.ones(n), rng.normal(size=n)])
        Psi = np.column_stack([np.ones(n), rng.normal(size=n)])
        perm = rng.permutation(n)
        a = log_likelihood(Dataset(y=y, Lambda=Lam, Psi=Psi), p)
        b = log_likelihood(Dataset(y=y[perm], Lambda=Lam[perm], Psi=Psi[perm]), p)
        assert a == pytest.approx(b, abs=1e-9)

    def test_matches_per_unit_oracle(self, rng):
        config = ModelConfig.standard(H=4, P=2, R=3)
        p = random_params(config, rng)
        n = 25
        y = rng.normal(size=n)
        Lam = np.column_stack([np.ones(n), rng.normal(size=n)])
        Psi = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        data = Dataset(y=y, Lambda=Lam, Psi=Psi)
        oracle = sum(
            conditional_log_density(y[i], Lam[i], Psi[i], p) for i in range(n)
        )
        assert log_likelihood(data, p) == pytest.approx(oracle, abs=1e-12)


class TestTruncationBound:
    def test_hand_arithmetic(self):
        assert truncation_bound([0.5], 5) == pytest.approx(4 * 0.5 ** 4, abs=1e-15)
        assert truncation_bound([0.5], 5) == pytest.approx(0.25)
        assert truncation_bound([0.5, 0.5], 5) == pytest.approx(0.5)

    def test_decreasing_in_H_and_mu(self):
        mus = np.array([0.2, 0.4, 0.7])
        vals = [truncation_bound(mus, H) for H in range(2, 12)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        lo = truncation_bound([0.3], 6)
        hi = truncation_bound([0.31], 6)
        assert hi < lo

    def test_vanishes_for_large_H(self):
        assert truncation_bound([0.4, 0.6], 200) < 1e-20

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            truncation_bound([0.0, 0.5], 5)
        with pytest.raises(ValueError):
            truncation_bound([1.0], 5)
        with pytest.raises(ValueError):
            truncation_bound([0.5], 1)


class TestConfigAndParams:
    def test_spd_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(H=2, mu_beta=[0.0], Sigma_beta=[[-1.0]],
                        mu_alpha=[0.0], Sigma_alpha=[[1.0]])
        with pytest.raises(ValueError):
            ModelConfig(H=0, mu_beta=[0.0], Sigma_beta=[[1.0]],
                        mu_alpha=[0.0], Sigma_alpha=[[1.0]])
        with pytest.raises(ValueError):
            ModelConfig.standard(H=2, P=1, R=1, a_sigma=0.0)

    def test_params_validation(self):
        config = ModelConfig.standard(H=2, P=1, R=1)
        good = MixtureParams(alpha=np.zeros((1, 1)), beta=np.zeros((2, 1)),
                             sigma2=[1.0, 2.0])
        good.validate(config)
        with pytest.raises(ValueError):
            MixtureParams(alpha=np.zeros((1, 1)), beta=np.zeros((2, 1)),
                          sigma2=[1.0, -2.0]).validate(config)

    def test_dataset_row_mismatch(self):
        with pytest.raises(ValueError):
            Dataset(y=[1.0, 2.0], Lambda=[[1.0]], Psi=[[1.0], [1.0]])

    def test_log_weights_extreme_logits_stay_finite(self):
        log_pi = stick_break_log_weights(np.array([800.0, -800.0]))
        assert np.all(np.isfinite(log_pi) | (log_pi < 0))
        np.testing.assert_allclose(np.exp(log_pi).sum(), 1.0, atol=1e-12)
