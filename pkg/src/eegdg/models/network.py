"""Instantiating a ModelConfig into a trainable network."""
from __future__ import annotations

import hashlib
from collections import OrderedDict

import numpy as np

from .. import tensor as T
from ..tensor import Tensor
from . import layers as L
from .specs import Kind, LayerSpec, ModelConfig, expand_resblock, validate


def _make_layer(spec: LayerSpec, rng, drop_rng, dtype) -> L.Module:
    k = spec.kind
    if k is Kind.CONV2D:
        return L.Conv2d(spec.c_in, spec.c_out, (spec.k_h, spec.k_w), spec.padding, spec.bias, rng=rng, dtype=dtype)
    if k is Kind.CONV1D:
        return L.Conv1d(spec.c_in, spec.c_out, spec.k, spec.stride, spec.padding, spec.bias, rng=rng, dtype=dtype)
    if k is Kind.DEPTHWISE:
        return L.DepthwiseConv2d(spec.c_in, spec.multiplier, (spec.k_h, spec.k_w), spec.padding, spec.bias,
                                 rng=rng, dtype=dtype)
    if k is Kind.SEPARABLE:
        return L.SeparableConv2d(spec.c_in, spec.c_out, (spec.k_h, spec.k_w), spec.padding, spec.bias,
                                 rng=rng, dtype=dtype)
    if k is Kind.BATCHNORM:
        return L.BatchNorm(spec.c_in, dtype=dtype)
    if k is Kind.ELU:
        return L.ELU()
    if k is Kind.MAXPOOL:
        return L.Pool("max", spec.k)
    if k is Kind.AVGPOOL:
        return L.Pool("avg", spec.k)
    if k is Kind.DROPOUT:
        return L.Dropout(spec.p, drop_rng)
    if k is Kind.FLATTEN:
        return L.Flatten()
    if k is Kind.LINEAR:
        return L.Linear(spec.c_in, spec.c_out, spec.bias, rng=rng, dtype=dtype)
    if k is Kind.RESBLOCK:
        body, skip = expand_resblock(spec)
        body_m = L.Sequential([_make_layer(s, rng, drop_rng, dtype) for s in body])
        skip_m = _make_layer(skip[0], rng, drop_rng, dtype) if skip else None
        return L.ResBlock(body_m, skip_m)
    raise ValueError(f"unknown layer kind {k}")


def _fuse(modules: list, specs, n_channels: int) -> list:
    """Merge a temporal (1xK) Conv2D directly followed by a full-height spatial
    (Hx1) Conv2D into one TemporalSpatialConv."""
    out = []
    i = 0
    while i < len(modules):
        if i + 1 < len(specs) and _is_temporal(specs[i]) and _is_spatial(specs[i + 1], n_channels):
            out.append(L.TemporalSpatialConv(modules[i], modules[i + 1]))
            i += 2
        else:
            out.append(modules[i])
            i += 1
    return out


def _is_temporal(spec: LayerSpec) -> bool:
    pad = spec.padding if isinstance(spec.padding, (tuple, list)) else (spec.padding, spec.padding)
    return spec.kind is Kind.CONV2D and spec.c_in == 1 and spec.k_h == 1 and pad[0] == 0


def _is_spatial(spec: LayerSpec, n_channels: int) -> bool:
    pad = spec.padding if isinstance(spec.padding, (tuple, list)) else (spec.padding, spec.padding)
    return spec.kind is Kind.CONV2D and spec.k_h == n_channels and spec.k_w == 1 and tuple(pad) == (0, 0)


class Network:
    """Feature extractor plus linear classifier.

    ``forward(x)`` is exactly ``classifier(extract(x))``.  Inputs are
    (B, channels, samples); 2-D architectures get a singleton image channel.
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        validate(config)
        self.config = config
        self.dtype = np.dtype(dtype)
        ss = np.random.SeedSequence(seed)
        init_ss, drop_ss = ss.spawn(2)
        rng = np.random.default_rng(init_ss)
        self.dropout_rng = np.random.default_rng(drop_ss)
        self.features = L.Sequential(_fuse(
            [_make_layer(s, rng, self.dropout_rng, self.dtype) for s in config.feature_layers],
            config.feature_layers, config.n_channels,
        ))
        self.classifier = _make_layer(config.classifier, rng, self.dropout_rng, self.dtype)
        for name, p in self.named_parameters():
            p.name = name

    # -- forward ---------------------------------------------------------
    def _prepare(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if x.dtype != self.dtype and not x.on_tape:
            x = Tensor(x.data.astype(self.dtype))
        if x.ndim != 3 or x.shape[1:] != (self.config.n_channels, self.config.n_samples):
            raise ValueError(
                f"{self.config.name} expects input (B, {self.config.n_channels}, {self.config.n_samples}), got {x.shape}"
            )
        if self.config.layout == "2d":
            x = T.ops.reshape(x, (x.shape[0], 1, *x.shape[1:]))
        return x

    def extract(self, x) -> Tensor:
        return self.features(self._prepare(x))

    def classify(self, features) -> Tensor:
        return self.classifier(features)

    def forward(self, x) -> Tensor:
        return self.classify(self.extract(x))

    __call__ = forward

    def predict(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Eval-mode class predictions, restoring the previous mode afterwards."""
        was = self.features.training
        self.eval()
        try:
            out = [self.forward(x[i:i + batch_size]).data.argmax(axis=1) for i in range(0, len(x), batch_size)]
        finally:
            self.train(was)
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    # -- parameters ------------------------------------------------------
    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return self.features.named_parameters("features.") + self.classifier.named_parameters("classifier.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def feature_parameters(self) -> list[Tensor]:
        return self.features.parameters()

    def classifier_parameters(self) -> list[Tensor]:
        return self.classifier.parameters()

    def named_buffers(self) -> list[tuple[str, np.ndarray]]:
        return self.features.named_buffers("features.") + self.classifier.named_buffers("classifier.")

    def train(self, mode: bool = True) -> "Network":
        self.features.train(mode)
        self.classifier.train(mode)
        return self

    def eval(self) -> "Network":
        return self.train(False)

    @property
    def training(self) -> bool:
        return self.features.training

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Copies of every parameter then every buffer, in declaration order."""
        sd = OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())
        sd.update((n, b.copy()) for n, b in self.named_buffers())
        return sd

    def load_state_dict(self, state) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise ValueError(f"state mismatch: missing {missing}, unexpected {extra}")
        for n, arr in state.items():
            target = params[n].data if n in params else buffers[n]
            if target.shape != np.shape(arr):
                raise ValueError(f"{n}: shape {np.shape(arr)} does not match {target.shape}")
            target[...] = arr

    def astype(self, dtype) -> "Network":
        """Convert parameters and buffers in place (float64 for gradient checks)."""
        self.dtype = np.dtype(dtype)
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        for mod in _walk(self.features) + _walk(self.classifier):
            if isinstance(mod, L.BatchNorm):
                mod.running_mean = mod.running_mean.astype(dtype)
                mod.running_var = mod.running_var.astype(dtype)
        return self


def _walk(m: L.Module) -> list[L.Module]:
    out = [m]
    for _, c in m.children():
        out += _walk(c)
    return out


def build_network(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Network:
    return Network(config, seed, dtype)


def param_hash(params) -> str:
    """SHA-256 over the raw bytes of a parameter list."""
    h = hashlib.sha256()
    for p in params:
        arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        h.update(str(arr.shape).encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
