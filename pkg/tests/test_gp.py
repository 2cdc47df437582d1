"""GP core: kernel, exact posterior, MAP objective, fitting, rescaling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import gamma as gamma_dist

from safebo.gp import (
    GammaPrior,
    GammaPriorConfig,
    GpModel,
    KernelConfig,
    NoiseConfig,
    fit_hyperparameters,
    kernel_eval,
    kernel_matrix,
    minmax_rescale,
)

# Frozen before the build by direct arithmetic evaluation of the closed form.
MATERN52_AT_R1 = 0.5239941088318203
# Frozen before the build by a dense-solve oracle (form K, add sd^2 I, solve).
ORACLE_3OBS_MEAN = -0.23405216424795064
ORACLE_3OBS_VAR = 0.28265469185499614


def dense_posterior_oracle(cfg, noise_std, train_x, train_y, query):
    """Naive GP posterior: build K, add noise, solve with a generic solver."""
    k_xx = np.array([[kernel_eval(cfg, a, b) for b in train_x] for a in train_x])
    k_xx += noise_std**2 * np.eye(len(train_x))
    k_s = np.array([kernel_eval(cfg, query, a) for a in train_x])
    mean = k_s @ np.linalg.solve(k_xx, train_y)
    var = kernel_eval(cfg, query, query) - k_s @ np.linalg.solve(k_xx, k_s)
    return mean, var


class TestKernel:
    def test_zero_distance_returns_outputscale(self):
        cfg = KernelConfig.isotropic(0.2, 1.0, 1)
        theta = np.array([0.37])
        assert kernel_eval(cfg, theta, theta) == 1.0
        cfg2 = KernelConfig.isotropic(0.5, 2.5, 3)
        p = np.array([0.1, 0.2, 0.3])
        assert kernel_eval(cfg2, p, p) == 2.5

    def test_unit_distance_matches_closed_form(self):
        cfg = KernelConfig.isotropic(1.0, 1.0, 1)
        v = kernel_eval(cfg, np.array([0.0]), np.array([1.0]))
        assert v == pytest.approx(MATERN52_AT_R1, abs=1e-15)

    @given(
        st.lists(st.floats(-5, 5), min_size=2, max_size=2),
        st.lists(st.floats(-5, 5), min_size=2, max_size=2),
    )
    def test_symmetry(self, a, b):
        cfg = KernelConfig.isotropic(0.3, 1.7, 2)
        x, y = np.array(a), np.array(b)
        assert kernel_eval(cfg, x, y) == kernel_eval(cfg, y, x)

    def test_anisotropic_scaling(self):
        # Each coordinate difference is divided by its own lengthscale.
        cfg = KernelConfig(lengthscales=(0.1, 1.0), outputscale=1.0)
        iso = KernelConfig.isotropic(1.0, 1.0, 1)
        v = kernel_eval(cfg, np.array([0.0, 0.0]), np.array([0.1, 0.0]))
        assert v == pytest.approx(kernel_eval(iso, np.array([0.0]), np.array([1.0])), rel=1e-12)

    def test_dimension_mismatch_raises(self):
        cfg = KernelConfig.isotropic(0.2, 1.0, 2)
        with pytest.raises(ValueError):
            kernel_eval(cfg, np.array([0.1]), np.array([0.1]))

    def test_gram_matrices_positive_semidefinite(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(2, 31))
            pts = rng.uniform(size=(n, d))
            cfg = KernelConfig.isotropic(rng.uniform(0.05, 1.0), rng.uniform(0.1, 3.0), d)
            k = kernel_matrix(cfg, pts)
            assert np.min(np.linalg.eigvalsh(k)) >= -1e-8


class TestPosterior:
    def test_empty_data_is_prior(self):
        model = GpModel(KernelConfig.isotropic(0.2, 1.3, 1), NoiseConfig(0.1))
        mean, var = model.posterior(np.array([[0.1], [0.9]]))
        assert np.all(mean == 0.0)
        assert np.all(var == 1.3)

    def test_near_interpolation_with_tiny_noise(self):
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1),
            NoiseConfig(1e-9),
            np.array([[0.4]]),
            np.array([1.0]),
        )
        mean, _ = model.posterior_at(np.array([0.4]))
        assert mean == pytest.approx(1.0, abs=1e-6)

    def test_three_observation_frozen_oracle(self):
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1),
            NoiseConfig(0.03),
            np.array([[0.1], [0.5], [0.9]]),
            np.array([0.2, -0.3, 0.5]),
        )
        mean, var = model.posterior_at(np.array([0.4]))
        assert mean == pytest.approx(ORACLE_3OBS_MEAN, abs=1e-8)
        assert var == pytest.approx(ORACLE_3OBS_VAR, abs=1e-8)

    def test_matches_dense_solve_oracle_on_random_data(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(1, 21))
            cfg = KernelConfig.isotropic(rng.uniform(0.1, 0.5), rng.uniform(0.3, 2.0), d)
            noise = NoiseConfig(rng.uniform(0.05, 0.3))
            x = rng.uniform(size=(n, d))
            y = rng.normal(size=n)
            model = GpModel(cfg, noise, x, y)
            q = rng.uniform(size=d)
            mean, var = model.posterior_at(q)
            om, ov = dense_posterior_oracle(cfg, noise.noise_std, x, y, q)
            assert mean == pytest.approx(om, abs=1e-8)
            assert var == pytest.approx(ov, abs=1e-8)

    def test_variance_bounded_by_prior(self):
        rng = np.random.default_rng(3)
        model = GpModel(
            KernelConfig.isotropic(0.15, 0.7, 2),
            NoiseConfig(0.05),
            rng.uniform(size=(12, 2)),
            rng.normal(size=12),
        )
        _, var = model.posterior(rng.uniform(size=(50, 2)))
        assert np.all(var >= 0.0)
        assert np.all(var <= 0.7 + 1e-9)

    def test_variance_nonincreasing_in_data(self):
        rng = np.random.default_rng(5)
        queries = rng.uniform(size=(40, 1))
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1),
            NoiseConfig(0.1),
            rng.uniform(size=(5, 1)),
            rng.normal(size=5),
        )
        _, var_before = model.posterior(queries)
        bigger = model.update(rng.uniform(size=1), float(rng.normal()))
        _, var_after = bigger.posterior(queries)
        assert np.all(var_after <= var_before + 1e-9)


class TestUpdate:
    def test_existing_data_unchanged(self):
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.1), np.array([[0.2]]), np.array([0.5])
        )
        model2 = model.update(np.array([0.8]), 1.0)
        assert model.n == 1 and model2.n == 2
        assert model2.train_x[0, 0] == 0.2 and model2.train_y[0] == 0.5

    def test_update_near_zero_observation(self):
        model = GpModel(KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.05))
        model = model.update(np.array([0.5]), 0.0)
        mean, _ = model.posterior_at(np.array([0.5]))
        assert abs(mean) <= 0.05**2  # shrunk toward the prior mean by the noise

    def test_repeated_observation_strictly_shrinks_variance(self):
        model = GpModel(KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.1))
        once = model.update(np.array([0.5]), 0.3)
        twice = once.update(np.array([0.5]), 0.3)
        _, v1 = once.posterior_at(np.array([0.5]))
        _, v2 = twice.posterior_at(np.array([0.5]))
        assert v2 < v1

    def test_sequential_equals_batch(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(2, 21))
            cfg = KernelConfig.isotropic(0.25, 1.0, d)
            noise = NoiseConfig(0.08)
            x = rng.uniform(size=(n, d))
            y = rng.normal(size=n)
            seq = GpModel(cfg, noise)
            for xi, yi in zip(x, y):
                seq = seq.update(xi, yi)
            batch = GpModel(cfg, noise, x, y)
            q = rng.uniform(size=(15, d))
            ms, vs = seq.posterior(q)
            mb, vb = batch.posterior(q)
            np.testing.assert_allclose(ms, mb, atol=1e-10)
            np.testing.assert_allclose(vs, vb, atol=1e-10)

    def test_nonfinite_observation_rejected(self):
        model = GpModel(KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.1))
        with pytest.raises(ValueError):
            model.update(np.array([0.5]), float("nan"))


class TestLogMarginalLikelihood:
    def test_single_zero_observation_standard_normal(self):
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1), NoiseConfig(0.0), np.array([[0.3]]), np.array([0.0])
        )
        value, _ = model.log_marginal_likelihood()
        assert value == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-9)

    def test_gradient_matches_central_finite_differences(self):
        rng = np.random.default_rng(17)
        checked = 0
        for _ in range(25):
            d = int(rng.integers(1, 4))
            n = int(rng.integers(4, 11))
            with_priors = bool(rng.integers(2))
            priors = (
                GammaPriorConfig(GammaPrior(3.0, 10.0), GammaPrior(3.0, 2.0))
                if with_priors
                else None
            )
            x = rng.uniform(size=(n, d))
            y = rng.normal(size=n)
            ls = rng.uniform(0.15, 0.5, size=d)
            sf2 = rng.uniform(0.5, 2.0)
            sd = rng.uniform(0.05, 0.3)

            def objective(log_ls, log_sf2, log_sd2):
                m = GpModel(
                    KernelConfig(tuple(np.exp(log_ls)), math.exp(log_sf2)),
                    NoiseConfig(math.sqrt(math.exp(log_sd2))),
                    x,
                    y,
                    priors=priors,
                )
                return m.log_marginal_likelihood()

            log_params = np.concatenate([np.log(ls), [math.log(sf2), math.log(sd**2)]])
            _, grad = objective(log_params[:d], log_params[d], log_params[d + 1])

            h = 1e-5
            for j in range(d + 2):
                up, dn = log_params.copy(), log_params.copy()
                up[j] += h
                dn[j] -= h
                f_up, _ = objective(up[:d], up[d], up[d + 1])
                f_dn, _ = objective(dn[:d], dn[d], dn[d + 1])
                fd = (f_up - f_dn) / (2 * h)
                assert abs(grad[j] - fd) <= 1e-4 * max(abs(fd), 1e-6), (
                    f"component {j}: analytic {grad[j]} vs fd {fd}"
                )
                checked += 1
        assert checked >= 20

    def test_gamma_prior_shifts_objective_by_log_density(self):
        x = np.array([[0.2], [0.7]])
        y = np.array([0.4, -0.1])
        kernel = KernelConfig.isotropic(0.3, 1.2, 1)
        plain = GpModel(kernel, NoiseConfig(0.1), x, y)
        priors = GammaPriorConfig(GammaPrior(3.0, 10.0), GammaPrior(3.0, 2.0))
        with_prior = GpModel(kernel, NoiseConfig(0.1), x, y, priors=priors)
        v0, _ = plain.log_marginal_likelihood()
        v1, _ = with_prior.log_marginal_likelihood()
        expected_shift = gamma_dist.logpdf(0.3, 3.0, scale=1 / 10.0) + gamma_dist.logpdf(
            1.2, 3.0, scale=1 / 2.0
        )
        assert v1 - v0 == pytest.approx(expected_shift, abs=1e-10)


class TestFitHyperparameters:
    def test_recovers_lengthscale_within_factor_two(self):
        # Noise-free sample from a known Matern-5/2 GP via Gram Cholesky.
        rng = np.random.default_rng(23)
        x = np.arange(20, dtype=float).reshape(-1, 1) / 19.0
        true_cfg = KernelConfig.isotropic(0.2, 1.0, 1)
        k = kernel_matrix(true_cfg, x) + 1e-10 * np.eye(20)
        y = np.linalg.cholesky(k) @ rng.normal(size=20)
        model = GpModel(KernelConfig.isotropic(0.5, 0.5, 1), NoiseConfig(1e-3), x, y)
        result = fit_hyperparameters(model, rng=np.random.default_rng(0))
        fitted = result.kernel.lengthscales[0]
        assert 0.1 <= fitted <= 0.4
        assert not result.warning

    def test_degenerate_identical_observations(self):
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1),
            NoiseConfig(0.1),
            np.array([[0.5], [0.5]]),
            np.array([0.3, 0.3]),
        )
        result = fit_hyperparameters(model, rng=np.random.default_rng(1))
        assert all(np.isfinite(l) and l > 0 for l in result.kernel.lengthscales)
        assert np.isfinite(result.kernel.outputscale) and result.kernel.outputscale > 0

    def test_map_value_never_decreases(self):
        rng = np.random.default_rng(29)
        priors = GammaPriorConfig(GammaPrior(3.0, 10.0), GammaPrior(3.0, 2.0))
        for _ in range(5):
            n = int(rng.integers(3, 12))
            x = rng.uniform(size=(n, 1))
            y = rng.normal(size=n)
            model = GpModel(
                KernelConfig.isotropic(rng.uniform(0.05, 1.0), rng.uniform(0.2, 2.0), 1),
                NoiseConfig(0.1),
                x,
                y,
                priors=priors,
            )
            before, _ = model.log_marginal_likelihood()
            result = fit_hyperparameters(model, rng=rng)
            assert result.map_value >= before - 1e-12

    def test_sigma_d_is_never_touched(self):
        rng = np.random.default_rng(31)
        model = GpModel(
            KernelConfig.isotropic(0.2, 1.0, 1),
            NoiseConfig(0.123),
            rng.uniform(size=(6, 1)),
            rng.normal(size=6),
        )
        result = fit_hyperparameters(model, rng=rng)
        refit = model.with_kernel(result.kernel)
        assert refit.noise.noise_std == 0.123


class TestMinMaxRescale:
    def test_affine_examples(self):
        scaled, _ = minmax_rescale([2.0, 4.0, 6.0])
        np.testing.assert_allclose(scaled, [0.0, 0.5, 1.0])
        scaled, _ = minmax_rescale([-1.0, 0.0, 3.0])
        np.testing.assert_allclose(scaled, [0.0, 0.25, 1.0])

    def test_degenerate_maps_to_half(self):
        scaled, t = minmax_rescale([5.0])
        np.testing.assert_allclose(scaled, [0.5])
        assert t.invert(np.array([0.5]))[0] == 5.0
        scaled, _ = minmax_rescale([2.0, 2.0, 2.0])
        np.testing.assert_allclose(scaled, [0.5, 0.5, 0.5])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            minmax_rescale([1.0, float("inf")])

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=20))
    @settings(max_examples=50)
    def test_range_and_roundtrip(self, values):
        scaled, t = minmax_rescale(values)
        assert np.all(scaled >= 0.0) and np.all(scaled <= 1.0)
        if max(values) > min(values):
            back = t.invert(scaled)
            np.testing.assert_allclose(back, values, atol=1e-9 * max(1.0, max(map(abs, values))))
