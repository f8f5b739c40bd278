import numpy as np
import pytest

from cfkd.checkpoint import save_checkpoint
from cfkd.classifier import ImageClassifier, train_classifier
from cfkd.distill import TrainConfig
from cfkd.errors import ConfigurationError, InputError

from conftest import TINY_SHAPE, make_linear_classifier, point_image


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def test_gradient_matches_analytic_linear_softmax():
    # d log p_c / dx = W_c - sum_k p_k W_k for logits z = W x + b
    W = np.array([[1.0, -2.0], [0.5, 0.75]])
    b = np.array([0.1, -0.3])
    clf = make_linear_classifier(W, b)
    x = point_image(0.2, 0.7)
    p = softmax(W @ np.array([0.2, 0.7]) + b)
    for target in (0, 1):
        expected = W[target] - p @ W
        got = clf.input_gradient(x, target).reshape(2)
        assert np.allclose(got, expected, atol=1e-12)


def test_gradient_matches_finite_differences(tiny_classifier, tiny_poisoned):
    x = tiny_poisoned.split_arrays("train")[0][0]
    target = 1
    grad = tiny_classifier.input_gradient(x, target)
    assert grad.shape == x.shape

    def log_p(img):
        return float(np.log(tiny_classifier.predict_proba(img)[target]))

    h = 1e-4
    rng = np.random.default_rng(0)
    flat = grad.reshape(-1)
    for coord in rng.choice(flat.size, size=8, replace=False):
        idx = np.unravel_index(coord, x.shape)
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        fd = (log_p(up) - log_p(down)) / (2 * h)
        assert abs(fd - flat[coord]) <= 1e-6 + 1e-3 * abs(flat[coord])


def test_predict_proba_shapes_and_sums(tiny_classifier, tiny_poisoned):
    X, _ = tiny_poisoned.split_arrays("validation")
    probs = tiny_classifier.predict_proba(X)
    assert probs.shape == (X.shape[0], 2)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.min() >= 0.0
    single = tiny_classifier.predict_proba(X[0])
    assert single.shape == (2,)
    # batched torch kernels may differ from single-sample ones in the last ulp
    assert np.allclose(single, probs[0], atol=1e-12)
    assert isinstance(tiny_classifier.predict(X[0]), int)


def test_fit_is_deterministic(tiny_poisoned):
    cfg = TrainConfig(conv_channels=(4, 8), epochs=1, seed=3)
    a = train_classifier(tiny_poisoned, "train", cfg)
    b = train_classifier(tiny_poisoned, "train", cfg)
    X, _ = tiny_poisoned.split_arrays("validation")
    assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    for pa, pb in zip(a.module_.parameters(), b.module_.parameters()):
        assert np.array_equal(pa.detach().numpy(), pb.detach().numpy())


def test_fit_epochs_zero_keeps_init(tiny_poisoned):
    X, y = tiny_poisoned.split_arrays("train")
    trained = ImageClassifier(
        input_shape=TINY_SHAPE, conv_channels=(4, 8), epochs=0, seed=5
    ).fit(X, y)
    fresh = ImageClassifier(input_shape=TINY_SHAPE, conv_channels=(4, 8), seed=5)
    assert np.array_equal(trained.predict_proba(X), fresh.predict_proba(X))


def test_fit_input_errors(tiny_poisoned):
    X, y = tiny_poisoned.split_arrays("train")
    clf = ImageClassifier(input_shape=TINY_SHAPE, conv_channels=(4, 8), epochs=1)
    with pytest.raises(ConfigurationError, match="single class"):
        clf.fit(X[:4], np.ones(4, dtype=np.int64))
    with pytest.raises(ConfigurationError, match="empty"):
        clf.fit(np.zeros((0, *TINY_SHAPE)), np.zeros(0, dtype=np.int64))
    with pytest.raises(InputError):
        clf.fit(X[:4], np.array([0, 1, 2, 0]))


def test_cnn_shape_constraint():
    clf = ImageClassifier(input_shape=(6, 6, 3), epochs=1)
    with pytest.raises(ConfigurationError, match="divisible by 4"):
        clf.fit(np.zeros((4, 6, 6, 3)), np.array([0, 1, 0, 1]))


def test_input_gradient_target_validation(tiny_classifier, tiny_poisoned):
    x = tiny_poisoned.split_arrays("train")[0][0]
    with pytest.raises(InputError):
        tiny_classifier.input_gradient(x, 2)


def test_save_load_bit_exact(tiny_classifier, tiny_poisoned, tmp_path):
    path = tmp_path / "clf.ckpt"
    tiny_classifier.save(path)
    back = ImageClassifier.load(path)
    X, _ = tiny_poisoned.split_arrays("validation")
    assert np.array_equal(back.predict_proba(X), tiny_classifier.predict_proba(X))
    named = dict(back.module_.named_parameters())
    for name, p in tiny_classifier.module_.named_parameters():
        assert np.array_equal(named[name].detach().numpy(), p.detach().numpy())
    assert back.get_params()["conv_channels"] == (4, 8)


def test_load_rejects_wrong_kind(tmp_path):
    path = tmp_path / "other.ckpt"
    save_checkpoint(path, "flow", {"architecture": {}}, {"w": np.zeros(3)})
    with pytest.raises(InputError, match="not a classifier"):
        ImageClassifier.load(path)


def test_clone_fitted_is_independent(tiny_classifier, tiny_poisoned):
    import torch

    X, _ = tiny_poisoned.split_arrays("validation")
    before = tiny_classifier.predict_proba(X)
    clone = tiny_classifier.clone_fitted()
    with torch.no_grad():
        next(clone.module_.parameters()).mul_(0.0)
    assert np.array_equal(tiny_classifier.predict_proba(X), before)
    assert not np.array_equal(clone.predict_proba(X), before)


def test_fine_tune_warm_start(tiny_classifier, tiny_poisoned):
    cfg = TrainConfig(epochs=0, fine_tune=True, seed=9)
    tuned = train_classifier(tiny_poisoned, "train", cfg, init=tiny_classifier)
    X, _ = tiny_poisoned.split_arrays("validation")
    assert np.array_equal(tuned.predict_proba(X), tiny_classifier.predict_proba(X))
    # without fine_tune the init is ignored and training restarts
    cold_cfg = TrainConfig(conv_channels=(4, 8), epochs=0, fine_tune=False, seed=9)
    cold = train_classifier(tiny_poisoned, "train", cold_cfg, init=tiny_classifier)
    assert not np.array_equal(cold.predict_proba(X), tiny_classifier.predict_proba(X))


def test_accuracy_matches_manual(tiny_classifier, tiny_poisoned):
    X, y = tiny_poisoned.split_arrays("validation")
    acc = tiny_classifier.accuracy(X, y)
    assert acc == float((tiny_classifier.predict(X) == y).mean())
    with pytest.raises(InputError):
        tiny_classifier.accuracy(np.zeros((0, *TINY_SHAPE)), np.zeros(0, dtype=int))
