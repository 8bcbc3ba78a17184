import numpy as np
import pytest

from bftvss import training


@pytest.fixture(scope="module")
def task():
    w_true = training.make_true_weights(8, 1)
    data = training.make_dataset(8, 100, w_true, 2, flip_rate=0.02)
    return w_true, data


class TestDataGeneration:
    def test_deterministic(self, task):
        w_true, data = task
        again = training.make_dataset(8, 100, w_true, 2, flip_rate=0.02)
        assert np.array_equal(data.x, again.x)
        assert np.array_equal(data.y, again.y)

    def test_true_weights_unit_norm(self):
        assert np.linalg.norm(training.make_true_weights(16, 5)) == pytest.approx(1.0)

    def test_labels_binary(self, task):
        _, data = task
        assert set(np.unique(data.y)) <= {0.0, 1.0}

    def test_flip_rate_zero_is_separable(self):
        w_true = training.make_true_weights(8, 1)
        data = training.make_dataset(8, 500, w_true, 3, flip_rate=0.0)
        assert training.accuracy(w_true, data) == 1.0


class TestGradient:
    def test_matches_finite_differences(self, task):
        _, data = task
        rng = np.random.default_rng(0)
        w = rng.normal(size=8)
        grad = training.gradient(w, data)
        eps = 1e-6
        for k in range(8):
            bump = np.zeros(8)
            bump[k] = eps
            numeric = (training.loss(w + bump, data)
                       - training.loss(w - bump, data)) / (2 * eps)
            assert grad[k] == pytest.approx(numeric, abs=1e-6)

    def test_local_train_reduces_loss(self, task):
        _, data = task
        w = training.initial_weights(8, 7)
        before = training.loss(w, data)
        after = training.loss(training.local_train(w, data, 0.5), data)
        assert after < before

    def test_sigmoid_saturates_without_overflow(self):
        w = np.full(8, 1e6)
        data = training.make_dataset(8, 10, training.make_true_weights(8, 1), 4)
        assert np.isfinite(training.loss(w, data))


class TestAccuracy:
    def test_perfect_and_inverted(self, task):
        w_true, data = task
        clean = training.make_dataset(8, 200, w_true, 9, flip_rate=0.0)
        assert training.accuracy(w_true, clean) == 1.0
        assert training.accuracy(-w_true, clean) == 0.0

    def test_training_converges_toward_ceiling(self):
        w_true = training.make_true_weights(8, 1)
        data = training.make_dataset(8, 400, w_true, 2, flip_rate=0.02)
        w = training.initial_weights(8, 3)
        for _ in range(50):
            w = training.local_train(w, data, 0.5)
        assert training.accuracy(w, data) >= 0.95
