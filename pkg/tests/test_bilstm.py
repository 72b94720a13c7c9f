import math

import numpy as np
import pytest
from sklearn.base import clone

from eegbilstm.bilstm import (BiLstmClassifier, TrainConfig, backward, forward, init_model,
                              loss, loss_and_grad, predict, predict_proba_batch,
                              read_checkpoint, softmax, train, write_checkpoint)
from eegbilstm.errors import EmptyDataset, ShapeMismatch

from .oracles import gradient_check, random_model, scalar_forward


@pytest.fixture
def small_model():
    return init_model(3, 4, ["a", "b"], seed=11)


def test_init_shapes_and_biases():
    m = init_model(61, 20, ["M", "V"], seed=0)
    assert m.fwd.W.shape == (80, 61) and m.fwd.U.shape == (80, 20) and m.fc_w.shape == (2, 40)
    lim = 1 / math.sqrt(20)
    assert np.all(np.abs(m.fwd.W) <= lim) and np.all(np.abs(m.bwd.U) <= lim)
    np.testing.assert_array_equal(m.fwd.b[20:40], 1.0)
    assert np.all(m.fwd.b[:20] == 0) and np.all(m.fwd.b[40:] == 0)
    assert np.all(m.fc_b == 0)


def test_zero_model_is_uniform(small_model, rng):
    zero = small_model.zeros_like()
    for K in (2,):
        p = forward(zero, rng.standard_normal((5, 3)))
        np.testing.assert_array_equal(p, np.full(K, 1.0 / K))
    four = init_model(3, 4, list("abcd")).zeros_like()
    np.testing.assert_allclose(forward(four, rng.standard_normal((2, 3))), 0.25, atol=0)


def test_softmax_symmetry():
    np.testing.assert_array_equal(softmax(np.array([0.0, 0.0])), [0.5, 0.5])


def test_forward_matches_scalar_oracle(small_model):
    rng = np.random.default_rng(5)
    model = random_model(small_model, rng)
    seq = rng.standard_normal((5, 3))
    np.testing.assert_allclose(forward(model, seq), scalar_forward(model, seq),
                               rtol=0, atol=1e-12)


def test_forward_is_distribution(rng):
    model = random_model(init_model(6, 5, list("xyz")), rng, scale=1.0)
    P = predict_proba_batch(model, rng.standard_normal((20, 7, 6)))
    assert np.all((P > 0) & (P < 1))
    assert np.all(np.abs(P.sum(axis=1) - 1.0) <= 1e-12)


def test_shape_mismatch(small_model, rng):
    with pytest.raises(ShapeMismatch):
        forward(small_model, rng.standard_normal((5, 4)))
    with pytest.raises(ShapeMismatch):
        forward(small_model, rng.standard_normal(3))


@pytest.mark.parametrize("probs, label, expected", [
    ([1.0, 1e-300], 0, 0.0),
    ([0.25] * 4, 2, math.log(4)),
    ([0.9, 0.1], 1, -math.log(0.1)),
])
def test_loss_values(probs, label, expected):
    assert loss(probs, label) == pytest.approx(expected, abs=1e-12)


def test_loss_floor():
    assert loss([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))


def test_fc_bias_gradient_at_uniform(small_model, rng):
    g = backward(small_model.zeros_like(), rng.standard_normal((5, 3)), 1)
    np.testing.assert_array_equal(g.fc_b, [0.5, -0.5])


def test_gradient_matches_finite_differences(small_model):
    rng = np.random.default_rng(99)
    for _ in range(5):
        model = random_model(small_model, rng)
        seq = rng.standard_normal((5, 3))
        assert gradient_check(model, seq, int(rng.integers(2))) <= 1e-4


def test_gradient_columns_as_steps():
    rng = np.random.default_rng(3)
    model = random_model(init_model(4, 3, ["a", "b"], columns_as_steps=True), rng)
    seq = rng.standard_normal((4, 4))
    assert gradient_check(model, seq, 0) <= 1e-4
    plain = model.with_arrays(model.arrays())
    plain.columns_as_steps = False
    np.testing.assert_array_equal(forward(model, seq), forward(plain, seq.T))


def test_recurrent_weights_unused_for_one_step(small_model, rng):
    model = random_model(small_model, rng)
    g = backward(model, rng.standard_normal((1, 3)), 0)
    assert np.all(g.fwd.U == 0.0) and np.all(g.bwd.U == 0.0)
    assert np.any(g.fwd.W != 0.0)


def test_batch_gradient_is_mean_of_items(small_model, rng):
    model = random_model(small_model, rng)
    X = rng.standard_normal((4, 5, 3))
    y = np.array([0, 1, 1, 0])
    _, g = loss_and_grad(model, X, y)
    parts = [backward(model, X[i], y[i]).arrays() for i in range(4)]
    for k, a in enumerate(g.arrays()):
        np.testing.assert_allclose(a, sum(p[k] for p in parts) / 4, rtol=1e-12, atol=1e-15)


def _blobs(rng, n=64, steps=4, feats=3):
    y = rng.integers(0, 2, n)
    X = rng.standard_normal((n, steps, feats)) * 0.3
    X[:, :, 0] += np.where(y == 1, 1.5, -1.5)[:, None]
    return X, y


def test_zero_learning_rate_keeps_parameters(small_model, rng):
    X, y = _blobs(rng)
    trained, trace = train(small_model, X, y, TrainConfig(epochs=2, learning_rate=0.0))
    for a, b in zip(trained.arrays(), small_model.arrays()):
        np.testing.assert_array_equal(a, b)
    assert len(trace) == 2


def test_training_deterministic(small_model, rng):
    X, y = _blobs(rng)
    cfg = TrainConfig(epochs=3, learning_rate=0.01, batch_size=8, seed=4)
    a, ta = train(small_model, X, y, cfg)
    b, tb = train(small_model, X, y, cfg)
    assert ta == tb
    for u, v in zip(a.arrays(), b.arrays()):
        assert u.tobytes() == v.tobytes()
    c, _ = train(small_model, X, y, TrainConfig(3, 0.01, 8, seed=5))
    assert any(u.tobytes() != v.tobytes() for u, v in zip(a.arrays(), c.arrays()))


def test_training_reduces_loss_and_predicts(small_model, rng):
    X, y = _blobs(rng, n=128)
    model, trace = train(small_model, X, y, TrainConfig(epochs=5, learning_rate=0.02,
                                                        batch_size=16))
    assert all(b < a for a, b in zip(trace, trace[1:]))
    Xt, yt = _blobs(np.random.default_rng(1), n=40)
    assert np.mean([predict(model, s) for s in Xt] == yt) >= 0.95


def test_train_empty(small_model):
    with pytest.raises(EmptyDataset):
        train(small_model, np.zeros((0, 2, 3)), np.zeros(0, dtype=int))


def test_predict_tie_break(small_model, rng):
    assert predict(small_model.zeros_like(), rng.standard_normal((2, 3))) == 0


def test_predict_invariant_to_bias_shift(rng):
    model = random_model(init_model(3, 4, list("abc")), rng)
    X = rng.standard_normal((30, 5, 3))
    before = predict_proba_batch(model, X).argmax(axis=1)
    shifted = model.copy()
    shifted.fc_b += 3.7
    np.testing.assert_array_equal(predict_proba_batch(shifted, X).argmax(axis=1), before)


def test_checkpoint_roundtrip(tmp_path, rng):
    model = random_model(init_model(5, 3, ["L", "B", "NL"]), rng)
    path = tmp_path / "m.eegm"
    write_checkpoint(model, path)
    back = read_checkpoint(path)
    assert back.class_vocab == ("L", "B", "NL") and (back.F, back.H, back.K) == (5, 3, 3)
    for a, b in zip(model.arrays(), back.arrays()):
        assert a.tobytes() == b.tobytes()
    raw = path.read_bytes()
    assert raw[:4] == b"EEGM"
    n_params = sum(a.size for a in model.arrays())
    assert raw[-8 * n_params:] == b"".join(a.astype("<f8").tobytes() for a in model.arrays())


def test_estimator_api(rng):
    X, y = _blobs(rng, n=96)
    labels = np.where(y == 1, "V", "M")
    clf = BiLstmClassifier(hidden_size=4, epochs=5, learning_rate=0.02, batch_size=16)
    assert clf.fit(X, labels) is clf
    assert list(clf.classes_) == ["M", "V"]
    assert clf.predict_proba(X).shape == (96, 2)
    assert clf.score(X, labels) >= 0.95
    assert len(clf.loss_curve_) == 5
    params = clf.get_params()
    assert params["hidden_size"] == 4 and params["random_state"] == 0
    other = clone(clf).fit(X, labels)
    for a, b in zip(clf.model_.arrays(), other.model_.arrays()):
        assert a.tobytes() == b.tobytes()
