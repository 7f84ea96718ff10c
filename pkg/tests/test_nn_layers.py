"""Dense, LSTM, batch norm, dropout, L2 and AdaDelta against oracles and finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strnn import nn
from strnn.nn import AdaDelta, BatchNorm, Dense, Dropout, LSTMCell, LstmState, Parameter, Tensor, check_gradients

GRAD_TOL = 1e-6


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


@pytest.mark.parametrize("activation", ["identity", "tanh", "elu"])
def test_dense_gradients(activation, rng):
    layer = Dense(4, 3, activation, rng)
    layer.b.data[:] = rng.normal(size=3)
    x = Tensor(rng.normal(size=(5, 4)) + 0.05, requires_grad=True)
    w = rng.normal(size=(5, 3))
    errs = check_gradients(lambda: (layer(x) * w).sum(), [x, layer.W, layer.b])
    assert max(errs.values()) < GRAD_TOL


def test_dense_on_3d_input_matches_2d(rng):
    layer = Dense(4, 2, "tanh", rng)
    x = rng.normal(size=(3, 5, 4))
    y3 = layer(x).data
    y2 = layer(x.reshape(-1, 4)).data.reshape(3, 5, 2)
    assert np.allclose(y3, y2, atol=1e-14)


def test_lstm_scalar_oracle():
    """One-unit LSTM evaluated by hand with the math module."""
    W = np.array([[0.3, -0.2], [0.1, 0.4], [-0.5, 0.25], [0.7, -0.6]])  # rows: i, f, o, g
    b = np.array([0.05, 1.0, -0.1, 0.2])
    cell = LSTMCell(1, 1)
    cell.W.data[:] = W
    cell.b.data[:] = b
    x, h, c = 0.8, -0.3, 0.5
    state = LstmState.from_parts(Tensor([[h]]), Tensor([[c]]))
    out = cell(Tensor([[x]]), state)

    i = _sig(W[0, 0] * x + W[0, 1] * h + b[0])
    f = _sig(W[1, 0] * x + W[1, 1] * h + b[1])
    o = _sig(W[2, 0] * x + W[2, 1] * h + b[2])
    g = math.tanh(W[3, 0] * x + W[3, 1] * h + b[3])
    c_new = f * c + i * g
    h_new = o * math.tanh(c_new)
    assert abs(out.c.data[0, 0] - c_new) < 1e-12
    assert abs(out.h.data[0, 0] - h_new) < 1e-12


def test_lstm_forget_bias_and_gate_layout(rng):
    cell = LSTMCell(3, 4, rng, forget_bias=1.0)
    assert np.all(cell.gate("forget")[1] == 1.0)
    for g in ("input", "output", "candidate"):
        assert np.all(cell.gate(g)[1] == 0.0)
    assert cell.W.shape == (16, 7)


def test_lstm_unrolled_gradients(rng):
    cell = LSTMCell(3, 4, rng)
    cell.b.data[:] = rng.normal(size=16) * 0.3
    xs = Tensor(rng.normal(size=(2, 5, 3)), requires_grad=True)
    h0 = Tensor(rng.normal(size=(2, 8)) * 0.5, requires_grad=True)

    def f():
        s = LstmState(h0)
        total = 0.0
        for t in range(5):
            s = cell(xs[:, t], s)
            total = total + (s.h * np.arange(1.0, 5.0)).sum()
        return total + nn.square(s.c).sum()

    errs = check_gradients(f, [xs, h0, cell.W, cell.b])
    assert max(errs.values()) < GRAD_TOL


def test_lstm_shape_mismatch_is_configuration_error(rng):
    cell = LSTMCell(3, 4, rng)
    with pytest.raises(nn.ConfigurationError):
        cell(Tensor(np.zeros((2, 5))), LstmState.zeros(2, 4))


def test_batch_norm_train_gradients(rng):
    bn = BatchNorm(3)
    bn.gamma.data[:] = rng.normal(size=3)
    bn.beta.data[:] = rng.normal(size=3)
    x = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    w = rng.normal(size=(6, 3))
    errs = check_gradients(lambda: (bn(x) * w).sum(), [x, bn.gamma, bn.beta])
    assert max(errs.values()) < GRAD_TOL


def test_batch_norm_eval_gradients(rng):
    bn = BatchNorm(3)
    bn.running_mean = rng.normal(size=3)
    bn.running_var = rng.uniform(0.5, 2.0, size=3)
    bn.eval()
    x = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
    w = rng.normal(size=(4, 2, 3))
    errs = check_gradients(lambda: (bn(x) * w).sum(), [x, bn.gamma, bn.beta])
    assert max(errs.values()) < GRAD_TOL


def test_batch_norm_statistics(rng):
    bn = BatchNorm(2, momentum=0.9)
    x = rng.normal(3.0, 2.0, size=(50, 2))
    y = bn(x).data
    assert np.allclose(y.mean(0), 0, atol=1e-12)
    assert np.allclose(y.var(0), x.var(0) / (x.var(0) + 1e-5), atol=1e-12)
    assert np.allclose(bn.running_mean, 0.1 * x.mean(0), atol=1e-14)
    assert np.allclose(bn.running_var, 0.9 + 0.1 * x.var(0), atol=1e-14)
    bn.eval()
    y_eval = bn(x).data
    expect = (x - bn.running_mean) / np.sqrt(bn.running_var + 1e-5)
    assert np.allclose(y_eval, expect, atol=1e-12)


def test_batch_norm_rejects_bad_momentum():
    with pytest.raises(nn.ConfigurationError):
        BatchNorm(3, momentum=1.0)


def test_dropout_train_and_eval(rng):
    d = Dropout(0.25)
    x = Tensor(np.ones((400, 50)), requires_grad=True)
    y = d(x, np.random.default_rng(0)).data
    kept = y != 0
    assert np.allclose(y[kept], 1 / 0.75)
    assert abs(kept.mean() - 0.75) < 0.01
    # the gradient uses the same mask
    g, = nn.grad((d(x, np.random.default_rng(0)) * 1.0).sum(), [x])
    assert np.array_equal(g, y)
    d.eval()
    assert np.array_equal(d(x).data, x.data)


def test_dropout_rate_validation():
    with pytest.raises(nn.ConfigurationError):
        Dropout(1.0)


def test_l2_penalty_value_and_gradient(rng):
    a, b = Parameter(rng.normal(size=(2, 3)), "W"), Parameter(rng.normal(size=4), "b")
    pen = nn.l2_penalty([a, b], 0.01)
    assert abs(float(pen.data) - 0.01 * (np.sum(a.data ** 2) + np.sum(b.data ** 2))) < 1e-14
    errs = check_gradients(lambda: nn.l2_penalty([a, b], 0.01), [a, b])
    assert max(errs.values()) < GRAD_TOL


def test_glorot_uniform_bounds(rng):
    w = nn.glorot_uniform(rng, 30, 20)
    assert w.shape == (30, 20)
    assert np.max(np.abs(w)) <= math.sqrt(6 / 50)


def _adadelta_reference(x, grads, lr, rho, eps, decay=0.0):
    eg = ed = 0.0
    for t, g in enumerate(grads):
        eg = rho * eg + (1 - rho) * g * g
        u = math.sqrt(ed + eps) / math.sqrt(eg + eps) * g
        ed = rho * ed + (1 - rho) * u * u
        x -= lr / (1 + decay * t) * u
    return x, eg, ed


@pytest.mark.parametrize("lr,rho,eps,decay",
                         [(1.0, 0.95, 1e-8, 0.0), (0.5, 0.9, 1e-6, 0.0), (1.0, 0.99, 1e-4, 0.0),
                          (0.5, 0.95, 1e-6, 0.3)])
def test_adadelta_scalar_oracle(lr, rho, eps, decay):
    grads = [0.5, -1.25, 3.0, 0.01, -0.2]
    p = Parameter(np.array([0.7]), "W")
    opt = AdaDelta([p], lr=lr, rho=rho, eps=eps, decay=decay)
    for g in grads:
        opt.step([np.array([g])])
    x, eg, ed = _adadelta_reference(0.7, grads, lr, rho, eps, decay)
    assert abs(p.data[0] - x) < 1e-12
    assert abs(opt.acc_grad[0][0] - eg) < 1e-12
    assert abs(opt.acc_delta[0][0] - ed) < 1e-12


def test_adadelta_first_step_magnitude():
    # With empty accumulators the first step is -lr * sqrt(eps / ((1-rho) g^2 + eps)) * g
    p = Parameter(np.array([0.0]))
    AdaDelta([p], eps=1e-6).step([np.array([2.0])])
    assert abs(p.data[0] + math.sqrt(1e-6 / (0.05 * 4 + 1e-6)) * 2.0) < 1e-15


def test_adadelta_decay_shrinks_steps():
    a, b = Parameter(np.array([0.0])), Parameter(np.array([0.0]))
    oa, ob = AdaDelta([a]), AdaDelta([b], decay=0.5)
    for _ in range(3):
        oa.step([np.array([1.0])])
        ob.step([np.array([1.0])])
    assert abs(b.data[0]) < abs(a.data[0])


def test_adadelta_rejects_nonfinite_gradient():
    p = Parameter(np.array([1.0]))
    with pytest.raises(nn.NonFiniteGradient):
        AdaDelta([p]).step([np.array([np.nan])])
    assert p.data[0] == 1.0


def test_adadelta_state_round_trip(rng):
    p = Parameter(rng.normal(size=3), "W")
    opt = AdaDelta([p])
    opt.step([np.ones(3)])
    state = opt.state_dict()
    q = Parameter(p.data.copy(), "W")
    other = AdaDelta([q])
    other.load_state_dict(state)
    opt.step([np.full(3, 2.0)])
    other.step([np.full(3, 2.0)])
    assert np.array_equal(p.data, q.data)


@settings(max_examples=40, deadline=None)
@given(st.floats(-10, 10).filter(lambda g: abs(g) > 1e-3), st.floats(0.5, 0.99))
def test_adadelta_moves_against_gradient(g, rho):
    p = Parameter(np.array([0.0]))
    AdaDelta([p], rho=rho).step([np.array([g])])
    assert np.sign(p.data[0]) == -np.sign(g)


def test_module_state_dict_round_trip(rng):
    a, b = Dense(3, 2, "tanh", rng), Dense(3, 2, "tanh")
    b.load_state_dict(a.state_dict())
    x = rng.normal(size=(4, 3))
    assert np.array_equal(a(x).data, b(x).data)
    with pytest.raises(Exception):
        b.load_state_dict({"W": np.zeros((5, 5)), "b": np.zeros(2)})
