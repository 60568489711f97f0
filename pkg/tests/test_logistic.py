"""Solver-level checks: gradients, monotone descent, determinism."""

import numpy as np
import pytest

from offbandit.errors import FitError
from offbandit.logistic import (
    binary_objective_and_grad,
    fit_binary_logistic,
    fit_multinomial_logistic,
    multinomial_objective_and_grad,
    sigmoid,
    softmax,
)


def random_instance(rng, n=30, n_feat=4, weighted=True, fractional=False):
    X = rng.normal(0, 1, (n, n_feat))
    y = rng.random(n) if fractional else (rng.random(n) < 0.5).astype(float)
    w = rng.uniform(0.1, 2.0, n) if weighted else np.ones(n)
    lam = float(rng.uniform(0.1, 2.0))
    return X, y, w, lam


def central_difference(fun, params, eps=1e-6):
    grad = np.zeros_like(params)
    for i in range(params.size):
        up = params.copy(); up[i] += eps
        dn = params.copy(); dn[i] -= eps
        grad[i] = (fun(up) - fun(dn)) / (2 * eps)
    return grad


class TestLinkFunctions:
    def test_sigmoid_symmetry(self):
        rng = np.random.default_rng(0)
        z = rng.uniform(-30, 30, 1000)
        np.testing.assert_allclose(sigmoid(z) + sigmoid(-z), 1.0, atol=1e-12)

    def test_sigmoid_saturates_exactly(self):
        assert sigmoid(np.array([-1e9]))[0] == 0.0
        assert sigmoid(np.array([1e9]))[0] == 1.0

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        probs = softmax(rng.normal(0, 5, (500, 7)))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert (probs > 0).all()

    def test_softmax_shift_invariance(self):
        rng = np.random.default_rng(2)
        scores = rng.normal(0, 2, (50, 4))
        shifted = scores + rng.normal(0, 3, (50, 1))
        np.testing.assert_allclose(softmax(scores), softmax(shifted), atol=1e-12)


class TestBinaryGradient:
    def test_matches_central_differences(self):
        """Analytic gradient vs central differences on random weighted instances."""
        rng = np.random.default_rng(7)
        for _ in range(20):
            X, y, w, lam = random_instance(rng, fractional=False)
            params = rng.normal(0, 0.5, X.shape[1] + 1)
            _, grad = binary_objective_and_grad(params, X, y, w, lam)
            fd = central_difference(
                lambda p: binary_objective_and_grad(p, X, y, w, lam)[0], params
            )
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)

    def test_multinomial_matches_central_differences(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n, n_feat, n_arms = 25, 3, 4
            X = rng.normal(0, 1, (n, n_feat))
            actions = rng.integers(0, n_arms, n)
            ridge = float(rng.uniform(0.1, 2.0))
            params = rng.normal(0, 0.5, n_arms * (n_feat + 1))
            _, grad = multinomial_objective_and_grad(params, X, actions, n_arms, ridge)
            fd = central_difference(
                lambda p: multinomial_objective_and_grad(p, X, actions, n_arms, ridge)[0],
                params,
            )
            np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-7)


class TestBinaryFit:
    def test_objective_monotone_non_increasing(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            X, y, w, lam = random_instance(rng, n=80)
            _, _, info = fit_binary_logistic(X, y, lam, sample_weight=w)
            objectives = np.array(info["objectives"])
            assert (np.diff(objectives) <= 1e-12).all()

    def test_converges_to_small_gradient(self):
        rng = np.random.default_rng(10)
        X, y, w, lam = random_instance(rng, n=200)
        _, _, info = fit_binary_logistic(X, y, lam, sample_weight=w)
        assert info["converged"]
        assert info["grad_norm"] < 1e-6

    def test_sample_order_invariance(self):
        rng = np.random.default_rng(11)
        X, y, w, lam = random_instance(rng, n=120)
        coef_a, int_a, _ = fit_binary_logistic(X, y, lam, sample_weight=w)
        perm = rng.permutation(len(y))
        coef_b, int_b, _ = fit_binary_logistic(X[perm], y[perm], lam, sample_weight=w[perm])
        np.testing.assert_allclose(coef_a, coef_b, atol=1e-8)
        assert int_a == pytest.approx(int_b, abs=1e-8)

    def test_repeat_fit_is_bit_identical(self):
        rng = np.random.default_rng(12)
        X, y, w, lam = random_instance(rng, n=100)
        a = fit_binary_logistic(X, y, lam, sample_weight=w)
        b = fit_binary_logistic(X, y, lam, sample_weight=w)
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]

    def test_single_class_labels_stay_finite(self):
        rng = np.random.default_rng(13)
        X = rng.normal(0, 1, (50, 3))
        coef, intercept, info = fit_binary_logistic(X, np.ones(50), 1.0)
        assert np.isfinite(coef).all() and np.isfinite(intercept)
        assert sigmoid(X @ coef + intercept).min() > 0.5

    def test_recovers_known_coefficients(self):
        rng = np.random.default_rng(14)
        X = rng.normal(0, 1, (60_000, 3))
        w_true = np.array([1.0, -0.5, 0.25])
        y = (rng.random(60_000) < sigmoid(X @ w_true + 0.3)).astype(float)
        coef, intercept, _ = fit_binary_logistic(X, y, 1e-4)
        np.testing.assert_allclose(coef, w_true, atol=0.05)
        assert intercept == pytest.approx(0.3, abs=0.05)

    def test_rejects_non_finite_features(self):
        X = np.array([[1.0], [np.inf]])
        with pytest.raises(FitError):
            fit_binary_logistic(X, np.array([0.0, 1.0]), 1.0)

    def test_rejects_negative_weights(self):
        with pytest.raises(FitError):
            fit_binary_logistic(np.ones((2, 1)), np.array([0.0, 1.0]), 1.0,
                                sample_weight=np.array([1.0, -1.0]))

    def test_rejects_negative_ridge(self):
        with pytest.raises(FitError):
            fit_binary_logistic(np.ones((2, 1)), np.array([0.0, 1.0]), -1.0)


class TestMultinomialFit:
    def test_gradient_small_at_solution(self):
        rng = np.random.default_rng(15)
        X = rng.normal(0, 1, (500, 4))
        actions = rng.integers(0, 3, 500)
        coef, intercept = fit_multinomial_logistic(X, actions, 3, ridge=0.5)
        params = np.column_stack([coef, intercept]).ravel()
        _, grad = multinomial_objective_and_grad(params, X, actions, 3, 0.5)
        assert np.abs(grad).max() < 1e-5

    def test_deterministic(self):
        rng = np.random.default_rng(16)
        X = rng.normal(0, 1, (300, 4))
        actions = rng.integers(0, 4, 300)
        a = fit_multinomial_logistic(X, actions, 4, 1.0)
        b = fit_multinomial_logistic(X, actions, 4, 1.0)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
