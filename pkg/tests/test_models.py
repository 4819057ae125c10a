"""Model tests: analytic gradients vs central finite differences, frozen
loss values, initialization ranges."""

import math

import numpy as np
import pytest

from dpflsim import models
from dpflsim.errors import DomainError


def numeric_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def grads_agree(analytic, numeric, rel=1e-5):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return np.linalg.norm(analytic - numeric) <= rel * scale


def random_instance(kind, rng):
    u = int(rng.integers(2, 6))
    k = int(rng.integers(2, 5))
    b = int(rng.integers(1, 9))
    X = rng.standard_normal((b, u))
    if kind == "linear":
        model = models.LinearRegression(u)
        y = rng.standard_normal(b)
    else:
        y = rng.integers(0, k, size=b)
        if kind == "logistic":
            model = models.LogisticRegression(u, k)
        else:
            model = models.TanhMlp(u, int(rng.integers(2, 7)), k)
    params = rng.standard_normal(model.dim) * 0.7
    return model, params, X, y


class TestGradients:
    @pytest.mark.parametrize("kind", ["linear", "logistic", "mlp"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(42)
        for _ in range(25):
            model, params, X, y = random_instance(kind, rng)
            _, g = model.loss_and_grad(params, X, y)
            gn = numeric_gradient(lambda p: model.loss_and_grad(p, X, y)[0], params)
            assert grads_agree(g, gn)

    def test_module_level_dispatch(self):
        rng = np.random.default_rng(0)
        model, params, X, y = random_instance("logistic", rng)
        a = models.loss_and_grad(model, params, (X, y))
        b = model.loss_and_grad(params, X, y)
        assert a[0] == b[0] and np.array_equal(a[1], b[1])


class TestFrozenLosses:
    def test_logistic_zero_params_gives_log_k(self):
        for k in (2, 3, 5):
            model = models.LogisticRegression(4, k)
            X = np.random.default_rng(1).standard_normal((8, 4))
            y = np.arange(8) % k
            loss, _ = model.loss_and_grad(np.zeros(model.dim), X, y)
            assert abs(loss - math.log(k)) <= 1e-15 * math.log(k)

    def test_linear_perfect_fit_is_zero(self):
        rng = np.random.default_rng(2)
        model = models.LinearRegression(3)
        w = rng.standard_normal(3)
        b = 0.4
        X = rng.standard_normal((16, 3))
        y = X @ w + b
        params = np.concatenate([w, [b]])
        loss, grad = model.loss_and_grad(params, X, y)
        assert loss <= 1e-28
        assert np.linalg.norm(grad) <= 1e-13

    def test_empty_batch_rejected(self):
        model = models.LogisticRegression(3, 2)
        with pytest.raises(DomainError):
            model.loss_and_grad(np.zeros(model.dim), np.zeros((0, 3)), np.zeros(0, dtype=int))


class TestInitialization:
    def test_mlp_uniform_range(self):
        model = models.TanhMlp(9, 16, 4)
        rng = np.random.default_rng(3)
        params = model.init_params(rng)
        w1, b1, w2, b2 = model.unpack(params)
        bound1, bound2 = 1 / math.sqrt(9), 1 / math.sqrt(16)
        for arr, bound in ((w1, bound1), (b1, bound1), (w2, bound2), (b2, bound2)):
            assert np.all(np.abs(arr) <= bound)
            assert np.ptp(arr) > 0  # actually random, not constant

    def test_zero_init_for_convex_models(self):
        rng = np.random.default_rng(4)
        assert np.all(models.LogisticRegression(3, 2).init_params(rng) == 0)
        assert np.all(models.LinearRegression(3).init_params(rng) == 0)

    def test_param_dimensions(self):
        assert models.LinearRegression(3).dim == 4
        assert models.LogisticRegression(3, 4).dim == 16
        assert models.TanhMlp(3, 5, 2).dim == 3 * 5 + 5 + 5 * 2 + 2


class TestPredictEvaluate:
    def test_logistic_predicts_argmax(self):
        model = models.LogisticRegression(2, 2)
        # weights separating on first coordinate
        params = np.array([[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).ravel()
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        assert list(model.predict(params, X)) == [1, 0]

    def test_evaluate_accuracy(self):
        model = models.LogisticRegression(2, 2)
        params = np.array([[-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).ravel()
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]])
        y = np.array([1, 0, 0])
        loss, acc = models.evaluate(model, params, X, y)
        assert acc == pytest.approx(2 / 3)
        assert loss > 0

    def test_regression_accuracy_is_nan(self):
        model = models.LinearRegression(2)
        X = np.ones((3, 2))
        y = np.ones(3)
        _, acc = models.evaluate(model, np.zeros(3), X, y)
        assert math.isnan(acc)


class TestFactory:
    def test_make_model_kinds(self):
        assert isinstance(models.make_model("linear", 3), models.LinearRegression)
        assert isinstance(models.make_model("logistic", 3, n_classes=2), models.LogisticRegression)
        assert isinstance(models.make_model("mlp", 3, n_classes=2, hidden=4), models.TanhMlp)

    def test_unknown_kind_rejected(self):
        with pytest.raises(DomainError):
            models.make_model("transformer", 3)
