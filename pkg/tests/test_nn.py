import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from son_adv import nn
from son_adv.errors import ArchitectureError, DataError, DivergenceError, LabelError, ShapeError

from conftest import random_model, toy_points


# hand-built 2-2-2 network; every expected value below is plain scalar arithmetic
W1 = [[1.0, -1.0], [0.5, 2.0]]
B1 = [0.1, -0.2]
W2 = [[1.0, -2.0], [0.5, 1.0]]
B2 = [0.0, 0.3]
X = [0.3, 0.7]


def hand_model():
    return nn.MlpModel([2, 2, 2], [np.array(W1), np.array(W2)], [np.array(B1), np.array(B2)])


def hand_forward():
    z1 = [X[0] * W1[0][j] + X[1] * W1[1][j] + B1[j] for j in range(2)]
    h = [max(v, 0.0) for v in z1]
    z2 = [h[0] * W2[0][k] + h[1] * W2[1][k] + B2[k] for k in range(2)]
    e = [math.exp(v) for v in z2]
    p = [v / sum(e) for v in e]
    return z1, h, z2, p


def test_hand_forward_values():
    *_, p = hand_forward()
    assert nn.forward(hand_model(), X) == pytest.approx(p, abs=1e-12)


def test_hand_loss_value():
    *_, p = hand_forward()
    assert nn.loss(hand_model(), X, 1) == pytest.approx(-math.log(p[1]), abs=1e-12)


def test_hand_input_gradient():
    z1, _, _, p = hand_forward()
    label = 1
    dz2 = [p[k] - (1.0 if k == label else 0.0) for k in range(2)]
    dh = [sum(dz2[k] * W2[j][k] for k in range(2)) for j in range(2)]
    dz1 = [dh[j] if z1[j] > 0 else 0.0 for j in range(2)]
    dx = [sum(dz1[j] * W1[i][j] for j in range(2)) for i in range(2)]
    assert nn.input_gradient(hand_model(), X, label) == pytest.approx(dx, abs=1e-10)


def test_init_shapes_default_architecture():
    m = nn.init_model([26, 256, 256, 256, 2], 0.4, seed=7)
    assert [w.shape for w in m.weights] == [(26, 256), (256, 256), (256, 256), (256, 2)]
    assert [b.shape for b in m.biases] == [(256,), (256,), (256,), (2,)]
    assert len(m.layer_dims) - 2 == 3
    assert m.dropout_rate == 0.4


def test_init_deterministic():
    a = nn.init_model([2, 3, 2], 0.0, seed=1)
    b = nn.init_model([2, 3, 2], 0.0, seed=1)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


@pytest.mark.parametrize("dims", [[26, 2], [2, 0, 2], [3, 4, 1], []])
def test_init_rejects_bad_architecture(dims):
    with pytest.raises(ArchitectureError):
        nn.init_model(dims, 0.0, 0)


def zero_model(dims=(4, 5, 2)):
    m = nn.init_model(list(dims), 0.0, 0)
    for w in m.weights:
        w[:] = 0.0
    return m


def test_zero_model_outputs_half():
    m = zero_model()
    assert np.array_equal(nn.forward(m, [0.2, 0.4, 0.6, 0.8]), [0.5, 0.5])
    assert nn.loss(m, [0.2, 0.4, 0.6, 0.8], 0) == pytest.approx(math.log(2), abs=1e-12)
    assert np.array_equal(nn.input_gradient(m, [0.2, 0.4, 0.6, 0.8], 1), np.zeros(4))
    assert np.array_equal(nn.class_jacobian(m, [0.2, 0.4, 0.6, 0.8]), np.zeros((2, 4)))


def test_loss_near_certain_prediction():
    m = zero_model((1, 1, 2))
    big = 20.0
    m.biases[-1][:] = [big, 0.0]
    eps = 1.0 / (1.0 + math.exp(big))  # probability of class 1
    assert nn.loss(m, [0.5], 0) == pytest.approx(eps, rel=1e-6)


def test_shape_and_label_errors():
    m = zero_model()
    with pytest.raises(ShapeError):
        nn.forward(m, [1.0, 2.0])
    with pytest.raises(LabelError):
        nn.loss(m, [0, 0, 0, 0], 2)
    with pytest.raises(ShapeError):
        nn.class_jacobian(m, np.zeros(3))
    with pytest.raises(DataError):
        nn.forward(m, [np.nan, 0, 0, 0])


@pytest.mark.parametrize("bias, expected", [([0.9, 0.1], 0), ([0.5, 0.5], 0), ([0.2, 0.8], 1)])
def test_predict_argmax_with_low_index_ties(bias, expected):
    m = zero_model((2, 2, 2))
    m.biases[-1][:] = np.log(bias)
    assert nn.predict(m, [0.3, 0.3]) == expected


def test_linear_map_jacobian_is_weight_transpose():
    # identity first layer on positive inputs leaves ReLU inactive as a gate
    w2 = np.array([[0.3, -1.2], [2.0, 0.7], [-0.4, 0.1]])
    m = nn.MlpModel([3, 3, 2], [np.eye(3), w2], [np.zeros(3), np.zeros(2)])
    assert np.array_equal(nn.class_jacobian(m, [0.2, 0.5, 0.9]), w2.T)


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_input_gradient_matches_finite_differences(seed):
    m = random_model(seed)
    x = np.random.default_rng(seed).uniform(0, 1, 6)
    label = seed % 3
    fd = central_difference(lambda v: nn.loss(m, v, label), x)
    assert np.all(rel_err(nn.input_gradient(m, x, label), fd) <= 1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_jacobian_matches_finite_differences(seed):
    m = random_model(seed)
    x = np.random.default_rng(seed).uniform(0, 1, 6)
    jac = nn.class_jacobian(m, x)
    for c in range(3):
        fd = central_difference(lambda v: nn.logits(m, v)[c], x)
        assert np.all(rel_err(jac[c], fd) <= 1e-4)


@pytest.mark.parametrize("seed", range(5))
def test_softmax_gradient_identity(seed):
    m = random_model(seed)
    x = np.random.default_rng(seed).uniform(0, 1, 6)
    p = nn.forward(m, x)
    jac = nn.class_jacobian(m, x)
    for label in range(3):
        onehot = np.eye(3)[label]
        assert np.allclose(nn.input_gradient(m, x, label), (p - onehot) @ jac, atol=1e-8, rtol=0)


def test_batch_matches_single_rows():
    m = random_model(4)
    xs = np.random.default_rng(0).uniform(0, 1, (5, 6))
    labels = np.array([0, 1, 2, 0, 1])
    grads = nn.input_gradient(m, xs, labels)
    jacs = nn.class_jacobian(m, xs)
    for i in range(5):
        assert np.allclose(grads[i], nn.input_gradient(m, xs[i], labels[i]), atol=1e-14)
        assert np.allclose(jacs[i], nn.class_jacobian(m, xs[i]), atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 50.0))
def test_softmax_normalized_and_positive(seed, scale):
    m = random_model(seed % 97)
    x = np.random.default_rng(seed).uniform(-scale, scale, (4, 6))
    p = nn.forward(m, x)
    assert np.all(p > 0)
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-9)


def brute_force_linearly_separable(x, y, n_angles=720):
    """Scan directions; separable iff some projection puts every class-1 point above every class-0 point."""
    for a in np.linspace(0, 2 * np.pi, n_angles, endpoint=False):
        proj = x @ np.array([np.cos(a), np.sin(a)])
        if proj[y == 1].min() > proj[y == 0].max():
            return True
    return False


def test_toy_set_is_separable(toy_data):
    x, y = toy_data
    assert brute_force_linearly_separable(x, y)


def test_train_toy_reaches_full_accuracy(toy_data, toy_model):
    x, y = toy_data
    assert np.mean(nn.predict(toy_model, x) == y) == 1.0


def test_train_deterministic():
    x, y = toy_points(80, seed=5)
    xv, yv = toy_points(20, seed=6)
    cfg = nn.TrainConfig(learning_rate=0.01, max_epochs=5, batch_size=8, early_stop_patience=2, seed=11)
    m0 = nn.init_model([2, 16, 16, 2], 0.4, 2)
    a, ra = nn.train(m0, (x, y), (xv, yv), cfg)
    b, rb = nn.train(m0, (x, y), (xv, yv), cfg)
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(wa, wb)
    assert ra.loss_history == rb.loss_history
    assert len(ra.loss_history) == ra.epochs_run


def test_train_leaves_input_model_untouched():
    x, y = toy_points(40)
    m0 = nn.init_model([2, 4, 2], 0.0, 0)
    before = [w.copy() for w in m0.weights]
    nn.train(m0, (x, y), (x, y), nn.TrainConfig(max_epochs=2, early_stop_patience=1))
    assert all(np.array_equal(a, b) for a, b in zip(before, m0.weights))


def test_early_stop_on_worsening_validation():
    x, y = toy_points(100)
    # validation labels flipped: as training fits, validation loss only rises
    cfg = nn.TrainConfig(learning_rate=0.01, max_epochs=50, batch_size=10, early_stop_patience=3, seed=0)
    model, report = nn.train(nn.init_model([2, 8, 2], 0.0, 0), (x, y), (x, 1 - y), cfg)
    assert report.stopped_early
    assert report.epochs_run <= cfg.max_epochs
    assert report.val_loss_history[-1] > report.val_loss_history[0]


def test_train_errors():
    m = nn.init_model([2, 4, 2], 0.0, 0)
    with pytest.raises(DataError):
        nn.train(m, (np.zeros((0, 2)), np.zeros(0, dtype=int)), (np.zeros((1, 2)), [0]))
    big = nn.init_model([2, 4, 2], 0.0, 0)
    x, y = toy_points(20)
    with pytest.raises(DivergenceError, match="epoch 1"):
        nn.train(big, (x * 1e308, y), (x, y), nn.TrainConfig(learning_rate=1e300, max_epochs=3,
                                                            early_stop_patience=1))


def test_dropout_off_at_inference(toy_data):
    m = nn.init_model([2, 32, 2], 0.5, 0)
    x, _ = toy_data
    assert np.array_equal(nn.forward(m, x), nn.forward(m, x))


def test_model_json_round_trip_exact(tmp_path):
    m = random_model(9)
    m.weights[0][0, 0] = 0.1 + 0.2  # not a short decimal
    nn.save_model(m, tmp_path / "m.json")
    back = nn.load_model(tmp_path / "m.json")
    assert back.layer_dims == m.layer_dims and back.dropout_rate == m.dropout_rate
    for a, b in zip(m.weights + m.biases, back.weights + back.biases):
        assert np.array_equal(a, b)
