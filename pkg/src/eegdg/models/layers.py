"""Parameterised layers built on the tensor primitives."""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import Tensor


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    training = True

    def children(self) -> list[tuple[str, "Module"]]:
        return [(k, v) for k, v in vars(self).items() if isinstance(v, Module)]

    def _own_params(self) -> list[tuple[str, Tensor]]:
        return []

    def _own_buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Tensor]]:
        out = [(prefix + n, p) for n, p in self._own_params()]
        for name, child in self.children():
            out += child.named_parameters(f"{prefix}{name}.")
        return out

    def named_buffers(self, prefix: str = "") -> list[tuple[str, np.ndarray]]:
        out = [(prefix + n, b) for n, b in self._own_buffers()]
        for name, child in self.children():
            out += child.named_buffers(f"{prefix}{name}.")
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for _, child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def __call__(self, x):
        return self.forward(x)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, padding=(0, 0), bias=True, *, rng, dtype=np.float32):
        kh, kw = kernel
        fan_in = c_in * kh * kw
        self.weight = Tensor(_uniform(rng, (c_out, c_in, kh, kw), fan_in, dtype), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_out,), fan_in, dtype), requires_grad=True) if bias else None
        self.padding = padding

    def _own_params(self):
        return [("weight", self.weight)] + ([("bias", self.bias)] if self.bias is not None else [])

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, padding=self.padding)


class Conv1d(Module):
    def __init__(self, c_in, c_out, k, stride=1, padding=0, bias=True, *, rng, dtype=np.float32):
        fan_in = c_in * k
        self.weight = Tensor(_uniform(rng, (c_out, c_in, k), fan_in, dtype), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_out,), fan_in, dtype), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding

    def _own_params(self):
        return [("weight", self.weight)] + ([("bias", self.bias)] if self.bias is not None else [])

    def forward(self, x):
        return T.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class DepthwiseConv2d(Module):
    def __init__(self, c_in, multiplier, kernel, padding=(0, 0), bias=False, *, rng, dtype=np.float32):
        if multiplier < 1:
            raise ValueError(f"depth multiplier must be >= 1, got {multiplier}")
        kh, kw = kernel
        self.multiplier = multiplier
        self.weight = Tensor(_uniform(rng, (c_in * multiplier, 1, kh, kw), kh * kw, dtype), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (c_in * multiplier,), kh * kw, dtype), requires_grad=True) if bias else None
        self.padding = padding

    def _own_params(self):
        return [("weight", self.weight)] + ([("bias", self.bias)] if self.bias is not None else [])

    def forward(self, x):
        return T.depthwise_conv2d(x, self.weight, self.bias, multiplier=self.multiplier, padding=self.padding)


class SeparableConv2d(Module):
    """Depthwise (multiplier 1) then pointwise 1x1."""

    def __init__(self, c_in, c_out, kernel, padding=(0, 0), bias=False, *, rng, dtype=np.float32):
        self.depthwise = DepthwiseConv2d(c_in, 1, kernel, padding, bias=False, rng=rng, dtype=dtype)
        self.pointwise = Conv2d(c_in, c_out, (1, 1), bias=bias, rng=rng, dtype=dtype)

    def forward(self, x):
        return self.pointwise(self.depthwise(x))


class BatchNorm(Module):
    def __init__(self, c, momentum=0.1, eps=1e-5, *, dtype=np.float32):
        self.gamma = Tensor(np.ones(c, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(c, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(c, dtype=dtype)
        self.running_var = np.ones(c, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def _own_params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def _own_buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)


class ELU(Module):
    def forward(self, x):
        return T.elu(x)


class Pool(Module):
    def __init__(self, kind: str, k: int):
        self.kind = kind
        self.k = k

    def forward(self, x):
        return T.pool(x, self.kind, self.k)


class Dropout(Module):
    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def forward(self, x):
        return T.dropout(x, self.p, self.training, self.rng)


class Flatten(Module):
    def forward(self, x):
        return T.flatten(x)


class Linear(Module):
    def __init__(self, n_in, n_out, bias=True, *, rng, dtype=np.float32):
        self.weight = Tensor(_uniform(rng, (n_out, n_in), n_in, dtype), requires_grad=True)
        self.bias = Tensor(_uniform(rng, (n_out,), n_in, dtype), requires_grad=True) if bias else None

    def _own_params(self):
        return [("weight", self.weight)] + ([("bias", self.bias)] if self.bias is not None else [])

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class Sequential(Module):
    def __init__(self, layers):
        self.layers = list(layers)

    def children(self):
        return [(str(i), m) for i, m in enumerate(self.layers)]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class ResBlock(Module):
    """``body(x) + skip(x)``; skip is the identity unless the channel count changes."""

    def __init__(self, body: Sequential, skip: Module | None):
        self.body = body
        self.skip = skip

    def forward(self, x):
        shortcut = x if self.skip is None else self.skip(x)
        return T.ops.add(self.body(x), shortcut)


class TemporalSpatialConv(Module):
    """A 1xK temporal Conv2d followed by a full-height Hx1 spatial Conv2d.

    With nothing between them the pair is one linear map, so it is applied
    as a single (H x K) kernel assembled from both weight sets.  This avoids
    materialising the (B, F, H, T) intermediate while training the same
    parameters.
    """

    def __init__(self, temporal: Conv2d, spatial: Conv2d):
        self.temporal = temporal
        self.spatial = spatial

    def forward(self, x):
        ops = T.ops
        wt, ws = self.temporal.weight, self.spatial.weight
        F, _, _, K = wt.shape
        O, _, H, _ = ws.shape
        ws3 = ops.reshape(ws, (O, F, H))
        w_eff = ops.einsum("och,ck->ohk", ws3, ops.reshape(wt, (F, K)))
        b_eff = None
        if self.temporal.bias is not None:
            b_eff = ops.einsum("och,c->o", ws3, self.temporal.bias)
        if self.spatial.bias is not None:
            b_eff = self.spatial.bias if b_eff is None else ops.add(b_eff, self.spatial.bias)
        B, _, _, W = x.shape
        pad = self.temporal.padding
        pw = pad[1] if isinstance(pad, (tuple, list)) else pad
        y = T.conv1d(ops.reshape(x, (B, H, W)), w_eff, b_eff, padding=pw)
        return ops.reshape(y, (B, O, 1, y.shape[-1]))
