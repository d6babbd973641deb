import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegdg.tensor import Adam, Tape, Tensor, grad_check, ops
from eegdg.verify import primitive_cases, reversal_error


def leaf(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def naive_conv2d(x, w, b, stride, padding):
    """Direct nested-loop cross-correlation, the oracle for conv2d."""
    (sh, sw), (ph, pw) = stride, padding
    x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho, Wo = (H - kh) // sh + 1, (W - kw) // sw + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    out[n, o, i, j] = (x[n, :, i * sh:i * sh + kh, j * sw:j * sw + kw] * w[o]).sum() + b[o]
    return out


# -- forward values ----------------------------------------------------------

def test_conv2d_small_values():
    x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3)
    w = np.ones((1, 1, 1, 2))
    np.testing.assert_allclose(ops.conv2d(x, w).data.ravel(), [3.0, 5.0])


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((2, 3, 4, 5))
    w = np.zeros((3, 3, 1, 1))
    w[[0, 1, 2], [0, 1, 2]] = 1
    np.testing.assert_array_equal(ops.conv2d(x, w).data, x)


@pytest.mark.parametrize("stride,padding", [((1, 1), (0, 0)), ((1, 2), (1, 1)), ((2, 1), (0, 2))])
def test_conv2d_matches_loop_oracle(rng, stride, padding):
    x, w, b = rng.standard_normal((2, 3, 5, 7)), rng.standard_normal((4, 3, 2, 3)), rng.standard_normal(4)
    got = ops.conv2d(x, w, b, stride=stride, padding=padding).data
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, padding), atol=1e-12)


@pytest.mark.parametrize("h,k", [(7, 3), (10, 10), (5, 1)])
def test_conv2d_valid_output_size(rng, h, k):
    x = rng.standard_normal((1, 1, h, 4))
    assert ops.conv2d(x, rng.standard_normal((2, 1, k, 1))).shape == (1, 2, h - k + 1, 4)


def test_conv1d_values():
    x = np.array([1.0, 0.0, 0.0, 1.0]).reshape(1, 1, 4)
    np.testing.assert_allclose(ops.conv1d(x, np.full((1, 1, 1), 2.0)).data.ravel(), [2, 0, 0, 2])


def test_conv1d_channel_sum(rng):
    x = rng.standard_normal((2, 3, 6))
    np.testing.assert_allclose(ops.conv1d(x, np.ones((1, 3, 1))).data[:, 0], x.sum(axis=1), atol=1e-12)


def test_conv1d_matches_conv2d(rng):
    x, w, b = rng.standard_normal((2, 3, 11)), rng.standard_normal((4, 3, 3)), rng.standard_normal(4)
    a = ops.conv1d(x, w, b, stride=2, padding=1).data
    c = naive_conv2d(x[:, :, None], w[:, :, None], b, (1, 2), (0, 1))[:, :, 0]
    np.testing.assert_allclose(a, c, atol=1e-12)


def test_depthwise_identity(rng):
    x = rng.standard_normal((2, 3, 1, 8))
    w = np.ones((6, 1, 1, 1))
    out = ops.depthwise_conv2d(x, w, multiplier=2).data
    np.testing.assert_array_equal(out[:, 0::2], x)
    np.testing.assert_array_equal(out[:, 1::2], x)


def test_depthwise_matches_per_channel_conv(rng):
    x, w = rng.standard_normal((2, 2, 4, 6)), rng.standard_normal((4, 1, 4, 3))
    out = ops.depthwise_conv2d(x, w, multiplier=2, padding=(0, 1)).data
    for c in range(2):
        for m in range(2):
            ref = naive_conv2d(x[:, c:c + 1], w[c * 2 + m:c * 2 + m + 1], [0.0], (1, 1), (0, 1))
            np.testing.assert_allclose(out[:, c * 2 + m], ref[:, 0], atol=1e-12)


def test_separable_identity(rng):
    x = rng.standard_normal((2, 3, 1, 5))
    dw = np.ones((3, 1, 1, 1))
    pw = np.eye(3).reshape(3, 3, 1, 1)
    np.testing.assert_allclose(ops.separable_conv2d(x, dw, pw).data, x)


def test_separable_fewer_params_than_full_conv():
    c_in, c_out, kw = 8, 16, 16
    assert c_in * kw + c_in * c_out < c_in * c_out * kw


def test_elu_values():
    np.testing.assert_allclose(ops.elu(np.array([-1.0, 0.0, 2.0])).data, [math.exp(-1) - 1, 0.0, 2.0])
    assert round(float(ops.elu(np.array([-1.0])).data[0]), 4) == -0.6321


def test_max_pool_values():
    np.testing.assert_array_equal(ops.max_pool(np.array([[[1.0, 3.0, 2.0, 0.0]]]), 2).data.ravel(), [3, 2])


def test_pool_drops_remainder():
    x = np.arange(7.0).reshape(1, 1, 7)
    np.testing.assert_array_equal(ops.avg_pool(x, 3).data.ravel(), [1.0, 4.0])
    np.testing.assert_array_equal(ops.max_pool(x, 3).data.ravel(), [2.0, 5.0])


def test_uniform_logits_ce_is_log3():
    assert abs(float(ops.softmax_cross_entropy(np.zeros((4, 3)), np.array([0, 1, 2, 0])).data) - math.log(3)) < 1e-12


def test_soft_ce_is_weighted_hard_ce(rng):
    logits = rng.standard_normal((50, 3))
    yi, yj = rng.integers(0, 3, 50), rng.integers(0, 3, 50)
    lam = rng.uniform(size=50)
    soft = lam[:, None] * np.eye(3)[yi] + (1 - lam[:, None]) * np.eye(3)[yj]
    mixed = ops.cross_entropy_per_sample(logits, soft)
    hard = lam * ops.cross_entropy_per_sample(logits, yi) + (1 - lam) * ops.cross_entropy_per_sample(logits, yj)
    assert np.abs(mixed - hard).max() < 1e-6


def test_dropout_eval_is_identity(rng):
    x = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(ops.dropout(x, 0.5, False).data, x)


def test_dropout_is_inverted(rng):
    out = ops.dropout(np.ones((200, 200)), 0.5, True, rng).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert abs(out.mean() - 1.0) < 0.02


def test_batch_norm_eval_uses_running_stats():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = ops.batch_norm(x, np.ones(2), np.zeros(2), np.array([1.0, 2.0]), np.array([4.0, 1.0]), False).data
    np.testing.assert_allclose(out, [[0.0, 0.0], [1.0, 2.0]], atol=1e-4)


def test_batch_norm_train_updates_buffers(rng):
    x = rng.standard_normal((16, 3, 10)) + 5
    rm, rv = np.zeros(3), np.ones(3)
    out = ops.batch_norm(x, np.ones(3), np.zeros(3), rm, rv, True).data
    np.testing.assert_allclose(out.mean(axis=(0, 2)), 0, atol=1e-10)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2)), rtol=1e-10)


def test_eval_forward_is_pure(rng):
    x = rng.standard_normal((3, 2, 1, 9))
    w = rng.standard_normal((4, 2, 1, 3))
    a, b = ops.conv2d(x, w).data, ops.conv2d(x, w).data
    assert a.tobytes() == b.tobytes()


# -- backward ----------------------------------------------------------------

def test_square_gradient():
    x = leaf([3.0])
    with Tape() as tape:
        y = ops.sum(ops.mul(x, x))
        tape.backward(y)
    assert x.grad[0] == 6.0
    assert grad_check(lambda: ops.sum(ops.mul(x, x)), [x]) < 1e-8


def test_leaf_grads_are_overwritten():
    x = leaf([2.0])
    for _ in range(2):
        with Tape() as tape:
            tape.backward(ops.sum(ops.mul(x, 3.0)))
    assert x.grad[0] == 3.0


def test_backward_rejects_non_scalar():
    x = leaf([1.0, 2.0])
    with Tape() as tape:
        y = ops.mul(x, 2.0)
        with pytest.raises(ValueError, match="scalar"):
            tape.backward(y)


def test_unused_param_gets_zero_grad():
    x, z = leaf([1.0]), leaf([5.0])
    with Tape() as tape:
        tape.backward(ops.sum(x), [x, z])
    assert z.grad[0] == 0.0


def test_grad_reverse_forward_and_backward():
    x = leaf([1.0, -2.0])
    with Tape() as tape:
        y = ops.grad_reverse(x, 0.5)
        tape.backward(ops.sum(y))
    np.testing.assert_array_equal(y.data, [1.0, -2.0])
    np.testing.assert_array_equal(x.grad, [-0.5, -0.5])
    assert reversal_error() < 1e-4


@pytest.mark.parametrize("name", sorted(primitive_cases()))
def test_primitive_gradients(name):
    f, inputs = primitive_cases()[name]
    assert grad_check(f, inputs, eps=1e-5) < 1e-4


def test_softmax_ce_gradcheck_tight(rng):
    logits = leaf(rng.standard_normal((6, 3)))
    y = rng.integers(0, 3, 6)
    assert grad_check(lambda: ops.softmax_cross_entropy(logits, y), [logits], eps=1e-5) < 1e-7


def test_grad_check_rejects_bad_eps():
    x = leaf([1.0])
    with pytest.raises(ValueError):
        grad_check(lambda: ops.sum(x), [x], eps=0.0)
    with pytest.raises(ValueError):
        grad_check(lambda: ops.sum(x), [x], eps=-1e-5)


def test_corrupted_backward_is_caught():
    f, inputs = primitive_cases()["conv2d"]
    ops.DEBUG_CORRUPT.add("conv2d")
    try:
        err = grad_check(f, inputs, eps=1e-5)
    finally:
        ops.DEBUG_CORRUPT.discard("conv2d")
    assert err > 1e-2


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), b=st.integers(1, 3), c=st.integers(1, 3), o=st.integers(1, 3),
       h=st.integers(2, 4), w=st.integers(3, 7), kh=st.integers(1, 2), kw=st.integers(1, 3))
def test_conv2d_gradients_random_shapes(seed, b, c, o, h, w, kh, kw):
    r = np.random.default_rng(seed)
    x, wt, bias = leaf(r.standard_normal((b, c, h, w))), leaf(r.standard_normal((o, c, kh, kw))), leaf(r.standard_normal(o))
    proj = r.standard_normal((b, o, h - kh + 1, w - kw + 1))
    assert grad_check(lambda: ops.sum(ops.mul(ops.conv2d(x, wt, bias), proj)), [x, wt, bias]) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), b=st.integers(2, 5), c=st.integers(1, 4), n=st.integers(2, 9),
       k=st.integers(1, 3))
def test_pointwise_gradients_random_shapes(seed, b, c, n, k):
    r = np.random.default_rng(seed)
    x = leaf(r.standard_normal((b, c, n * k)))
    g, be = leaf(r.uniform(0.5, 2, c)), leaf(r.standard_normal(c))
    p1, p2 = r.standard_normal((b, c, n)), r.standard_normal((b, c, n * k))

    def f():
        pooled = ops.avg_pool(ops.elu(x), k)
        normed = ops.batch_norm(x, g, be, np.zeros(c), np.ones(c), True)
        return ops.add(ops.sum(ops.mul(pooled, p1)), ops.sum(ops.mul(normed, p2)))

    assert grad_check(f, [x, g, be]) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 6), d=st.integers(1, 6), k=st.integers(2, 5))
def test_linear_ce_gradients_random_shapes(seed, n, d, k):
    r = np.random.default_rng(seed)
    x, w, b = leaf(r.standard_normal((n, d))), leaf(r.standard_normal((k, d))), leaf(r.standard_normal(k))
    y = r.integers(0, k, n)
    assert grad_check(lambda: ops.softmax_cross_entropy(ops.linear(x, w, b), y), [x, w, b]) < 1e-4


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8), k=st.integers(2, 6), scale=st.floats(0.1, 100))
def test_softmax_rows_sum_to_one(seed, n, k, scale):
    p = ops.softmax(np.random.default_rng(seed).standard_normal((n, k)) * scale)
    assert (p >= 0).all()
    assert np.abs(p.sum(axis=1) - 1).max() < 1e-6


# -- Adam --------------------------------------------------------------------

def test_adam_zero_grad_is_noop():
    p = leaf([1.0, -1.0])
    p.grad = np.zeros(2)
    Adam([p], lr=0.1).step()
    np.testing.assert_array_equal(p.data, [1.0, -1.0])


def test_adam_first_step_is_lr_times_sign():
    p = leaf([1.0, 1.0, 1.0])
    p.grad = np.array([3.0, -0.01, 100.0])
    Adam([p], lr=0.01).step()
    np.testing.assert_allclose(p.data, [0.99, 1.01, 0.99], atol=1e-8)


def test_adam_is_deterministic(rng):
    grads = rng.standard_normal((5, 4))
    out = []
    for _ in range(2):
        p = leaf(np.ones(4))
        opt = Adam([p], lr=1e-2)
        for g in grads:
            p.grad = g
            opt.step()
        out.append(p.data.tobytes())
    assert out[0] == out[1]


def test_adam_rejects_non_finite_grad():
    p = leaf([1.0])
    p.grad = np.array([np.nan])
    with pytest.raises(FloatingPointError):
        Adam([p]).step()
