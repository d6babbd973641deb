"""Differentiable primitives.

Every op computes its forward result with numpy and hands ``record`` a closure
mapping the output gradient to one gradient per input (``None`` where an input
is not differentiable).  Dtype follows the inputs: float32 for training,
float64 for gradient checks.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor
from .tensor import record as _record

# Names of ops whose backward rule is deliberately broken; used by the
# verification suite to prove the gradient checks can fail.
DEBUG_CORRUPT: set[str] = set()

# Upper bound on im2col buffer elements per batch chunk.
_COLS_BUDGET = 1 << 24


def record(op: str, out: np.ndarray, inputs, backward) -> Tensor:
    if op not in DEBUG_CORRUPT:
        return _record(op, out, inputs, backward)
    return _record(op, out, inputs, lambda g: tuple(None if d is None else d * 1.5 + 0.1 for d in backward(g)))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return record("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return record("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        c = b
        return record("scale", a.data * a.data.dtype.type(c), (a,), lambda g: (g * c,))
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return record(
        "mul", out, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    out = a.data @ b.data
    return record("matmul", out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = np.asarray(x.data.sum(), dtype=x.dtype)
    return record("sum", out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)
    return record("mean", out, (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def pad_last(x, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    x = as_tensor(x)
    widths = [(0, 0)] * (x.ndim - 1) + [(left, right)]
    n = x.shape[-1]
    return record("pad", np.pad(x.data, widths), (x,), lambda g: (g[..., left:left + n],))


def flatten(x) -> Tensor:
    """Collapse everything but the batch axis."""
    return reshape(x, (x.shape[0], -1))


def elu(x) -> Tensor:
    x = as_tensor(x)
    # e^x - 1 >= x everywhere, so the max picks the right branch; ufuncs keep
    # the input's memory layout
    out = np.maximum(x.data, np.expm1(np.minimum(x.data, 0)))
    return record("elu", out, (x,), lambda g: (g * (np.minimum(out, 0) + 1),))


def einsum(subscripts: str, a, b) -> Tensor:
    """Two-operand einsum with explicit output, e.g. ``"och,ck->ohk"``."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out_idx = subscripts.replace(" ", "").split("->")
    ia, ib = ins.split(",")
    out = np.einsum(subscripts, a.data, b.data)

    def grad_for(target_idx, other_idx, other, target_shape, g):
        # indices of the target absent from both g and the other operand were
        # summed away by broadcasting alone, so they get a broadcast gradient
        kept = "".join(c for c in target_idx if c in out_idx or c in other_idx)
        r = np.einsum(f"{out_idx},{other_idx}->{kept}", g, other)
        if kept != target_idx:
            shape = [target_shape[target_idx.index(c)] if c in kept else 1 for c in target_idx]
            order = [kept.index(c) for c in target_idx if c in kept]
            r = np.broadcast_to(r.transpose(order).reshape(shape), target_shape).copy()
        return r

    return record(
        "einsum", out, (a, b),
        lambda g: (grad_for(ia, ib, b.data, a.shape, g), grad_for(ib, ia, a.data, b.shape, g)),
    )


def grad_reverse(x, lam: float) -> Tensor:
    """Identity on the way forward, multiplies the gradient by ``-lam`` on the way back."""
    x = as_tensor(x)
    return record("grad_reverse", x.data.copy(), (x,), lambda g: (g * (-lam),))


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` laid out (out_features, in_features)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is None:
        return record("linear", out, (x, weight), lambda g: (g @ weight.data, g.T @ x.data))
    bias = as_tensor(bias)
    out = out + bias.data
    return record(
        "linear", out, (x, weight, bias),
        lambda g: (g @ weight.data, g.T @ x.data, g.sum(axis=0)),
    )


# -- convolutions ------------------------------------------------------------

def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _batch_chunks(batch: int, per_sample: int):
    step = max(1, _COLS_BUDGET // max(per_sample, 1))
    for start in range(0, batch, step):
        yield slice(start, min(batch, start + step))


def conv2d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of ``x`` (B, C_in, H, W) with ``weight`` (C_out, C_in, K_h, K_w).

    Computed in a channels-last buffer; the result is a (B, C_out, H', W')
    view of it.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ValueError(f"conv2d: input has {C} channels but weight expects {Cw}")
    if kh > H + 2 * ph or kw > W + 2 * pw:
        raise ValueError(f"conv2d: kernel {kh}x{kw} larger than padded input {H + 2 * ph}x{W + 2 * pw}")
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    Hp, Wp = H + 2 * ph, W + 2 * pw
    xl = x.data.transpose(0, 2, 3, 1)
    if ph or pw:
        xp = np.zeros((B, Hp, Wp, C), dtype=x.dtype)
        xp[:, ph:ph + H, pw:pw + W] = xl
    else:
        xp = xl
    # weight as (O, kh*kw*C) matching the (b, Ho, Wo, kh, kw, C) window order
    w2 = weight.data.transpose(0, 2, 3, 1).reshape(O, kh * kw * C)
    per_sample = Ho * Wo * kh * kw * C

    def cols_of(chunk):
        win = sliding_window_view(xp[chunk], (kh, kw), axis=(1, 2))[:, ::sh, ::sw][:, :Ho, :Wo]
        n = win.shape[0]
        return win.transpose(0, 1, 2, 4, 5, 3).reshape(n * Ho * Wo, kh * kw * C)

    out_cl = np.empty((B, Ho, Wo, O), dtype=np.result_type(x.dtype, w2.dtype))
    for chunk in _batch_chunks(B, per_sample):
        y = cols_of(chunk) @ w2.T
        out_cl[chunk] = y.reshape(-1, Ho, Wo, O)
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out_cl += bias.data
        inputs = (x, weight, bias)
    out = out_cl.transpose(0, 3, 1, 2)

    def backward(g):
        g_cl = g.transpose(0, 2, 3, 1)
        gw2 = np.zeros_like(w2)
        gxp = np.zeros((B, Hp, Wp, C), dtype=g.dtype) if x.on_tape else None
        for chunk in _batch_chunks(B, per_sample):
            g2 = g_cl[chunk].reshape(-1, O)
            gw2 += g2.T @ cols_of(chunk)
            if gxp is None:
                continue
            dcols = (g2 @ w2).reshape(-1, Ho, Wo, kh, kw, C)
            gxc = gxp[chunk]
            for i in range(kh):
                for j in range(kw):
                    gxc[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += dcols[:, :, :, i, j]
        gw = gw2.reshape(O, kh, kw, C).transpose(0, 3, 1, 2)
        gx = None
        if gxp is not None:
            gx = gxp[:, ph:ph + H, pw:pw + W].transpose(0, 3, 1, 2)
        grads = (gx, gw)
        if bias is not None:
            grads += (g_cl.sum(axis=(0, 1, 2)),)
        return grads

    return record("conv2d", out, inputs, backward)


def conv1d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """1-D cross-correlation: ``x`` (B, C_in, L), ``weight`` (C_out, C_in, K).

    ``padding`` is an int or a (left, right) pair.  The result is returned as
    a transposed view of a (B, L', C_out) buffer; numpy handles the layout
    transparently and the next convolution reads it without a copy.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ValueError(f"conv1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    B, C, L = x.shape
    O, Cw, K = weight.shape
    if C != Cw:
        raise ValueError(f"conv1d: input has {C} channels but weight expects {Cw}")
    if isinstance(padding, (tuple, list)):
        left, right = int(padding[0]), int(padding[1])
    else:
        left = right = int(padding)
    s = int(stride)
    Lp = L + left + right
    if K > Lp:
        raise ValueError(f"conv1d: kernel {K} longer than padded input {Lp}")
    Lo = (Lp - K) // s + 1
    # channels-last padded input
    xl = x.data.transpose(0, 2, 1)
    if left or right:
        xp = np.zeros((B, Lp, C), dtype=x.dtype)
        xp[:, left:left + L] = xl
    else:
        xp = xl
    # (B, Lo, C, K) windows -> (B*Lo, C*K) column matrix
    cols = sliding_window_view(xp, K, axis=1)[:, ::s][:, :Lo].reshape(B * Lo, C * K)
    w2 = weight.data.reshape(O, C * K)
    y = cols @ w2.T
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        y += bias.data
        inputs = (x, weight, bias)
    out = y.reshape(B, Lo, O).transpose(0, 2, 1)

    def backward(g):
        g2 = g.transpose(0, 2, 1).reshape(B * Lo, O)
        gw = (g2.T @ cols).reshape(O, C, K)
        gx = None
        if x.on_tape:
            dcols = (g2 @ w2).reshape(B, Lo, C, K)
            gxp = np.zeros((B, Lp, C), dtype=dcols.dtype)
            for k in range(K):
                gxp[:, k:k + s * (Lo - 1) + 1:s] += dcols[:, :, :, k]
            gx = gxp[:, left:left + L].transpose(0, 2, 1)
        grads = (gx, gw)
        if bias is not None:
            grads += (g2.sum(axis=0),)
        return grads

    return record("conv1d", out, inputs, backward)


def depthwise_conv2d(x, weight, bias=None, multiplier: int = 1, stride=1, padding=0) -> Tensor:
    """Per-channel convolution; ``weight`` is (C_in * multiplier, 1, K_h, K_w).

    Output channel ``c * multiplier + m`` is input channel ``c`` filtered by
    its ``m``-th kernel.
    """
    if multiplier < 1:
        raise ValueError(f"depth multiplier must be >= 1, got {multiplier}")
    x, weight = as_tensor(x), as_tensor(weight)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    B, C, H, W = x.shape
    if weight.shape[0] != C * multiplier or weight.shape[1] != 1:
        raise ValueError(
            f"depthwise weight must be ({C * multiplier}, 1, kh, kw) for {C} channels x{multiplier}, "
            f"got {weight.shape}"
        )
    kh, kw = weight.shape[2:]
    if kh > H + 2 * ph or kw > W + 2 * pw:
        raise ValueError(f"depthwise_conv2d: kernel {kh}x{kw} larger than padded input")
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    wr = weight.data.reshape(C, multiplier, kh, kw)

    def tap(i, j):
        return xp[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw]

    out = np.zeros((B, C, multiplier, Ho, Wo), dtype=np.result_type(x.dtype, wr.dtype))
    for i in range(kh):
        for j in range(kw):
            out += tap(i, j)[:, :, None] * wr[None, :, :, i, j, None, None]
    out = out.reshape(B, C * multiplier, Ho, Wo)
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[None, :, None, None]
        inputs = (x, weight, bias)

    def backward(g):
        g5 = g.reshape(B, C, multiplier, Ho, Wo)
        gx = np.zeros_like(xp)
        gw = np.zeros_like(wr)
        for i in range(kh):
            for j in range(kw):
                xs = tap(i, j)
                gw[:, :, i, j] = np.einsum("bcmhw,bchw->cm", g5, xs)
                gx[:, :, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += np.einsum(
                    "bcmhw,cm->bchw", g5, wr[:, :, i, j]
                )
        gx = gx[:, :, ph:ph + H, pw:pw + W]
        grads = (gx, gw.reshape(weight.shape))
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    return record("depthwise_conv2d", out, inputs, backward)


def separable_conv2d(x, depthwise_weight, pointwise_weight, bias=None, multiplier: int = 1, padding=0) -> Tensor:
    """Depthwise convolution followed by a 1x1 pointwise convolution."""
    h = depthwise_conv2d(x, depthwise_weight, multiplier=multiplier, padding=padding)
    return conv2d(h, pointwise_weight, bias)


# -- pooling -----------------------------------------------------------------

def _pool_layout(x: np.ndarray, k: int):
    """View ``x`` as (..., n, k, [C]) windows over the last logical axis.

    3-D arrays whose memory is channels-last (B, L, C) are pooled in that
    layout so no transpose copy is made.
    """
    n = x.shape[-1] // k
    if n < 1:
        raise ValueError(f"pool kernel {k} longer than axis of length {x.shape[-1]}")
    if x.ndim == 3 and not x.flags.c_contiguous and x.transpose(0, 2, 1).flags.c_contiguous:
        xl = x.transpose(0, 2, 1)
        return xl[:, : n * k].reshape(x.shape[0], n, k, x.shape[1]), 2, True
    return x[..., : n * k].reshape(*x.shape[:-1], n, k), -1, False


def max_pool(x, k: int) -> Tensor:
    """Non-overlapping max pool along the last axis; a trailing remainder is dropped."""
    x = as_tensor(x)
    xr, axis, cl = _pool_layout(x.data, k)
    idx = np.expand_dims(xr.argmax(axis=axis), axis)
    out = np.take_along_axis(xr, idx, axis=axis).squeeze(axis)
    n = out.shape[1] if cl else out.shape[-1]
    if cl:
        out = out.transpose(0, 2, 1)

    def backward(g):
        gr = np.zeros(xr.shape, dtype=g.dtype)
        if cl:
            np.put_along_axis(gr, idx, np.expand_dims(g.transpose(0, 2, 1), axis), axis=axis)
            gx = np.zeros((x.shape[0], x.shape[2], x.shape[1]), dtype=g.dtype)
            gx[:, : n * k] = gr.reshape(x.shape[0], n * k, x.shape[1])
            return (gx.transpose(0, 2, 1),)
        np.put_along_axis(gr, idx, g[..., None], axis=-1)
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[..., : n * k] = gr.reshape(*x.shape[:-1], -1)
        return (gx,)

    return record("max_pool", out, (x,), backward)


def avg_pool(x, k: int) -> Tensor:
    """Non-overlapping average pool along the last axis; a trailing remainder is dropped."""
    x = as_tensor(x)
    xr, axis, cl = _pool_layout(x.data, k)
    out = xr.mean(axis=axis)
    n = out.shape[1] if cl else out.shape[-1]
    if cl:
        out = out.transpose(0, 2, 1)

    def backward(g):
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[..., : n * k] = np.repeat(g / k, k, axis=-1)
        return (gx,)

    return record("avg_pool", out, (x,), backward)


def pool(x, kind: str, k: int) -> Tensor:
    if kind == "max":
        return max_pool(x, k)
    if kind == "avg":
        return avg_pool(x, k)
    raise ValueError(f"unknown pool kind {kind!r}")


# -- normalisation / regularisation -----------------------------------------

def _channel_sum(a: np.ndarray) -> np.ndarray:
    """Sum over every axis except axis 1, reading the buffer in memory order."""
    c = a.shape[1]
    t = a.transpose((0,) + tuple(range(2, a.ndim)) + (1,))
    if not t.flags.c_contiguous:
        return a.sum(axis=tuple(i for i in range(a.ndim) if i != 1))
    m = t.reshape(-1, c)
    blk = 4096
    nb = len(m) // blk
    total = np.zeros(c, dtype=np.float64)
    if nb:
        ones = np.ones(blk, dtype=a.dtype)
        total += (ones @ m[:nb * blk].reshape(nb, blk, c)).sum(axis=0, dtype=np.float64)
    total += m[nb * blk:].sum(axis=0, dtype=np.float64)
    return total.astype(a.dtype)


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalise over every axis except axis 1.

    In training mode batch statistics are used and the running buffers are
    updated in place; in eval mode the running buffers are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = tuple(i for i in range(x.ndim) if i != 1)
    bshape = [1] * x.ndim
    bshape[1] = x.shape[1]
    g_ = gamma.data.reshape(bshape)
    if training:
        n = x.size // x.shape[1]
        mu = (_channel_sum(x.data) / n).reshape(bshape)
        xc = x.data - mu
        var = (_channel_sum(xc * xc) / n).reshape(bshape)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv
        running_mean *= 1 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1 - momentum
        running_var += momentum * var.reshape(-1) * (n / max(n - 1, 1))

        def backward(g):
            dxhat = g * g_
            m1 = (_channel_sum(dxhat) / n).reshape(bshape)
            m2 = (_channel_sum(dxhat * xhat) / n).reshape(bshape)
            dx = inv * (dxhat - m1 - xhat * m2)
            return dx, _channel_sum(g * xhat), _channel_sum(g)
    else:
        inv = 1.0 / np.sqrt(running_var.reshape(bshape) + eps)
        xhat = (x.data - running_mean.reshape(bshape)) * inv

        def backward(g):
            return g * g_ * inv, _channel_sum(g * xhat), _channel_sum(g)

    out = (xhat * g_ + beta.data.reshape(bshape)).astype(x.dtype, copy=False)
    return record("batch_norm", out, (x, gamma, beta), backward)


def dropout(x, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so eval mode is the identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return record("dropout", x.data * mask, (x,), lambda g: (g * mask,))


# -- losses ------------------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax of a plain array (no tape)."""
    return np.exp(log_softmax(_data(logits)))


def _check_soft_targets(t: np.ndarray, n_classes: int) -> None:
    if t.shape[1] != n_classes:
        raise ValueError(f"soft targets have {t.shape[1]} classes, logits have {n_classes}")
    if (t < 0).any():
        raise ValueError("soft targets must be nonnegative")
    err = np.abs(t.sum(axis=1) - 1.0).max()
    if err > 1e-6:
        raise ValueError(f"soft targets must sum to 1 (max deviation {err:.3g})")


def cross_entropy_per_sample(logits, targets) -> np.ndarray:
    """Cross-entropy of each row, plain numpy; ``targets`` are indices or distributions."""
    logp = log_softmax(_data(logits))
    t = np.asarray(targets)
    if t.ndim == 1:
        return -logp[np.arange(len(t)), t.astype(np.int64)]
    return -(t * logp).sum(axis=1)


def softmax_cross_entropy(logits, targets, weights=None) -> Tensor:
    """Mean cross-entropy over the batch, or ``sum(weights * ce)`` when per-sample
    weights are given.

    ``targets`` may be integer class indices (N,) or soft distributions (N, C).
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (N, C), got {logits.shape}")
    N, Cn = logits.shape
    t = np.asarray(targets)
    if t.ndim == 1:
        if t.shape[0] != N:
            raise ValueError(f"{t.shape[0]} targets for {N} logits")
        if t.dtype.kind == "f":
            raise ValueError("hard targets must be integer class indices")
        if (t < 0).any() or (t >= Cn).any():
            raise ValueError(f"class index out of range [0, {Cn})")
        onehot = np.zeros((N, Cn), dtype=logits.dtype)
        onehot[np.arange(N), t.astype(np.int64)] = 1
        t = onehot
    else:
        if t.shape[0] != N:
            raise ValueError(f"{t.shape[0]} targets for {N} logits")
        _check_soft_targets(t, Cn)
        t = t.astype(logits.dtype)
    if weights is None:
        w = np.full(N, 1.0 / N, dtype=logits.dtype)
    else:
        w = np.asarray(weights, dtype=logits.dtype)
        if w.shape != (N,):
            raise ValueError(f"weights must have shape ({N},), got {w.shape}")
    logp = log_softmax(logits.data)
    ce = -(t * logp).sum(axis=1)
    out = np.asarray((w * ce).sum(), dtype=logits.dtype)
    p = np.exp(logp)

    def backward(g):
        # rows of t sum to 1, so d ce_i / d logits_i = p_i - t_i
        return (g * w[:, None] * (p - t),)

    return record("softmax_cross_entropy", out, (logits,), backward)
