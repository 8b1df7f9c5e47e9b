import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awelab import nn


def zero_gru(input_dim, hidden_dim):
    z = lambda *shape: np.zeros(shape)
    return nn.GruParams(
        W_z=z(hidden_dim, input_dim), W_r=z(hidden_dim, input_dim), W_h=z(hidden_dim, input_dim),
        U_z=z(hidden_dim, hidden_dim), U_r=z(hidden_dim, hidden_dim), U_h=z(hidden_dim, hidden_dim),
        b_z=z(hidden_dim), b_r=z(hidden_dim), b_h=z(hidden_dim),
    )


def random_gru(input_dim, hidden_dim, seed):
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-0.9, 0.9, size=shape)
    return nn.GruParams(
        W_z=u(hidden_dim, input_dim), W_r=u(hidden_dim, input_dim), W_h=u(hidden_dim, input_dim),
        U_z=u(hidden_dim, hidden_dim), U_r=u(hidden_dim, hidden_dim), U_h=u(hidden_dim, hidden_dim),
        b_z=u(hidden_dim), b_r=u(hidden_dim), b_h=u(hidden_dim),
    )


# ---------------------------------------------------------------------------
# gru_step
# ---------------------------------------------------------------------------

def test_gru_step_zero_params_zero_state_fixed_point():
    p = zero_gru(4, 3)
    h = nn.gru_step(p, np.array([1.0, -2.0, 0.5, 3.0]), np.zeros(3))
    assert np.array_equal(h, np.zeros(3))


def test_gru_step_scalar_forced_values():
    # all params zero: z = sigmoid(0) = 0.5, candidate = tanh(0) = 0,
    # h' = 0.5 * 0.8 + 0.5 * 0 = 0.4
    p = zero_gru(1, 1)
    h = nn.gru_step(p, np.array([2.0]), np.array([0.8]))
    assert h == pytest.approx([0.4], abs=1e-15)


def _scalar_gru_oracle(p, x, h_prev):
    """Per-element evaluation of the three gate equations, no matrix ops."""
    hidden, fin = p.W_z.shape

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    def affine(W, U, b, i):
        s = b[i]
        for j in range(fin):
            s += W[i, j] * x[j]
        for j in range(hidden):
            s += U[i, j] * h_prev[j]
        return s

    h = np.zeros(hidden)
    for i in range(hidden):
        z = sig(affine(p.W_z, p.U_z, p.b_z, i))
        r_vec = [sig(affine(p.W_r, p.U_r, p.b_r, k)) for k in range(hidden)]
        cand = p.b_h[i]
        for j in range(fin):
            cand += p.W_h[i, j] * x[j]
        for j in range(hidden):
            cand += p.U_h[i, j] * (r_vec[j] * h_prev[j])
        cand = math.tanh(cand)
        h[i] = (1.0 - z) * h_prev[i] + z * cand
    return h


def test_gru_step_matches_scalar_oracle():
    rng = np.random.default_rng(42)
    p = random_gru(2, 3, seed=1)
    for _ in range(5):
        x = rng.normal(size=2)
        h_prev = rng.normal(size=3)
        expected = _scalar_gru_oracle(p, x, h_prev)
        got = nn.gru_step(p, x, h_prev)
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_gru_step_shape_mismatch():
    p = zero_gru(2, 3)
    with pytest.raises(ValueError, match="shape"):
        nn.gru_step(p, np.zeros(5), np.zeros(3))
    with pytest.raises(ValueError, match="shape"):
        nn.gru_step(p, np.zeros(2), np.zeros(4))


# ---------------------------------------------------------------------------
# gru_forward
# ---------------------------------------------------------------------------

def test_gru_forward_single_step_equals_gru_step():
    p = random_gru(3, 4, seed=2)
    x = np.random.default_rng(0).normal(size=(1, 3))
    states = nn.gru_forward(p, x)
    assert states.shape == (1, 4)
    np.testing.assert_array_equal(states[0], nn.gru_step(p, x[0], np.zeros(4)))


def test_gru_forward_zero_params_all_states_zero():
    p = zero_gru(2, 3)
    xs = np.random.default_rng(1).normal(size=(6, 2))
    states = nn.gru_forward(p, xs)
    assert np.array_equal(states, np.zeros((6, 3)))


def test_gru_forward_compositionality():
    p = random_gru(3, 5, seed=3)
    xs = np.random.default_rng(2).normal(size=(9, 3))
    full = nn.gru_forward(p, xs)
    for cut in (1, 4, 8):
        head = nn.gru_forward(p, xs[:cut])
        tail = nn.gru_forward(p, xs[cut:], h0=head[-1])
        np.testing.assert_array_equal(np.vstack([head, tail]), full)


def test_gru_forward_zero_input_mode_matches_explicit_zeros():
    p = random_gru(4, 3, seed=5)
    h0 = np.random.default_rng(3).normal(size=3)
    implicit = nn.gru_forward(p, xs=None, h0=h0, steps=6)
    explicit = nn.gru_forward(p, np.zeros((6, 4)), h0=h0)
    np.testing.assert_array_equal(implicit, explicit)


def test_gru_forward_rejects_empty_sequence():
    p = zero_gru(2, 2)
    with pytest.raises(ValueError):
        nn.gru_forward(p, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        nn.gru_forward(p, xs=None, steps=0)


# ---------------------------------------------------------------------------
# mse_loss
# ---------------------------------------------------------------------------

def test_mse_identity_is_zero():
    x = np.random.default_rng(0).normal(size=(4, 3))
    loss, grad = nn.mse_loss(x.copy(), x)
    assert loss == 0.0
    assert np.array_equal(grad, np.zeros_like(x))


def test_mse_scalar_case():
    loss, grad = nn.mse_loss(np.array([[3.0]]), np.array([[1.0]]))
    assert loss == pytest.approx(4.0)
    assert grad == pytest.approx(np.array([[4.0]]))


def test_mse_sum_reduction():
    y = np.array([[3.0, 1.0]])
    x = np.array([[1.0, 1.0]])
    loss, grad = nn.mse_loss(y, x, reduction="sum")
    assert loss == pytest.approx(4.0)
    np.testing.assert_allclose(grad, [[4.0, 0.0]])


def test_mse_grad_matches_central_differences():
    rng = np.random.default_rng(9)
    y = rng.normal(size=(3, 4))
    x = rng.normal(size=(3, 4))
    for reduction in ("mean", "sum"):
        _, grad = nn.mse_loss(y, x, reduction)
        eps = 1e-6
        num = np.zeros_like(y)
        for idx in np.ndindex(*y.shape):
            yp = y.copy(); yp[idx] += eps
            ym = y.copy(); ym[idx] -= eps
            num[idx] = (nn.mse_loss(yp, x, reduction)[0] - nn.mse_loss(ym, x, reduction)[0]) / (2 * eps)
        np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mse_symmetry_and_nonnegativity(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(2, 3))
    x = rng.normal(size=(2, 3))
    ly, _ = nn.mse_loss(y, x)
    lx, _ = nn.mse_loss(x, y)
    assert ly == lx >= 0.0


def test_mse_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        nn.mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# sgd_step
# ---------------------------------------------------------------------------

def test_sgd_zero_gradients_identity():
    params = {"w": np.array([1.0, -2.0])}
    out = nn.sgd_step(params, {"w": np.zeros(2)}, lr=0.5)
    assert np.array_equal(out["w"], params["w"])


def test_sgd_scalar_arithmetic():
    out = nn.sgd_step({"w": np.array([1.0])}, {"w": np.array([0.5])}, lr=0.1, clip_norm=None)
    assert out["w"] == pytest.approx([0.95])


def test_sgd_clipping_scales_by_half():
    grads = {"a": np.array([6.0]), "b": np.array([8.0])}  # global norm 10
    params = {"a": np.array([0.0]), "b": np.array([0.0])}
    out = nn.sgd_step(params, grads, lr=1.0, clip_norm=5.0)
    assert out["a"] == pytest.approx([-3.0])
    assert out["b"] == pytest.approx([-4.0])


def test_sgd_no_clip_when_under_norm():
    grads = {"a": np.array([3.0])}
    out = nn.sgd_step({"a": np.array([0.0])}, grads, lr=1.0, clip_norm=5.0)
    assert out["a"] == pytest.approx([-3.0])


def test_sgd_non_finite_gradient_error():
    with pytest.raises(nn.NonFiniteGradientError):
        nn.sgd_step({"a": np.array([0.0])}, {"a": np.array([np.nan])}, lr=0.1)
    with pytest.raises(nn.NonFiniteGradientError):
        nn.sgd_step({"a": np.array([0.0])}, {"a": np.array([np.inf])}, lr=0.1)


def test_sgd_rejects_bad_lr_and_key_mismatch():
    with pytest.raises(ValueError):
        nn.sgd_step({"a": np.zeros(1)}, {"a": np.zeros(1)}, lr=0.0)
    with pytest.raises(ValueError):
        nn.sgd_step({"a": np.zeros(1)}, {"b": np.zeros(1)}, lr=0.1)


# ---------------------------------------------------------------------------
# learning-rate schedule
# ---------------------------------------------------------------------------

def test_lr_schedule_paper_defaults():
    sched = nn.LrSchedule()
    assert nn.lr_at(sched, 0) == 1.0
    assert nn.lr_at(sched, 499) == 1.0
    assert nn.lr_at(sched, 500) == pytest.approx(0.95)
    assert nn.lr_at(sched, 1000) == pytest.approx(0.9025)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_lr_non_increasing_and_piecewise_constant(b1, b2):
    sched = nn.LrSchedule(initial_lr=1.0, decay=0.9, period=100)
    lo, hi = sorted((b1, b2))
    assert nn.lr_at(sched, lo) >= nn.lr_at(sched, hi)
    assert nn.lr_at(sched, b1) == nn.lr_at(sched, (b1 // 100) * 100)


def test_lr_schedule_validation():
    with pytest.raises(ValueError):
        nn.LrSchedule(initial_lr=0.0)
    with pytest.raises(ValueError):
        nn.LrSchedule(decay=0.0)
    with pytest.raises(ValueError):
        nn.LrSchedule(period=0)
    with pytest.raises(ValueError):
        nn.lr_at(nn.LrSchedule(), -1)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_init_deterministic_per_seed():
    a = nn.init_params(5, 4, 5, seed=77)
    b = nn.init_params(5, 4, 5, seed=77)
    for pa, pb in zip(a, b):
        for name, arr in pa.tensors().items():
            np.testing.assert_array_equal(arr, pb.tensors()[name])
    c = nn.init_params(5, 4, 5, seed=78)
    assert not np.array_equal(a[0].W_z, c[0].W_z)


def test_init_biases_zero_and_weights_bounded():
    enc, dec, out = nn.init_params(9, 6, 9, seed=0)
    for gru in (enc, dec):
        for name, arr in gru.tensors().items():
            if name.startswith("b"):
                assert np.array_equal(arr, np.zeros_like(arr))
            else:
                fan_in = arr.shape[1]
                assert np.max(np.abs(arr)) <= 1.0 / math.sqrt(fan_in)
    assert np.array_equal(out.b_o, np.zeros(9))
    assert np.max(np.abs(out.W_o)) <= 1.0 / math.sqrt(6)


def test_param_shape_validation():
    with pytest.raises(ValueError):
        nn.GruParams(
            W_z=np.zeros((3, 2)), W_r=np.zeros((3, 2)), W_h=np.zeros((3, 2)),
            U_z=np.zeros((3, 3)), U_r=np.zeros((2, 3)), U_h=np.zeros((3, 3)),
            b_z=np.zeros(3), b_r=np.zeros(3), b_h=np.zeros(3),
        )
    with pytest.raises(ValueError):
        nn.AffineParams(W_o=np.zeros((4, 3)), b_o=np.zeros(3))
    with pytest.raises(ValueError):
        nn.init_params(0, 3, 3, seed=0)
