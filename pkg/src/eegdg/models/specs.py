"""Declarative layer stacks for the four architectures.

Each builder returns a :class:`ModelConfig`: a feature-extractor stack of
:class:`LayerSpec` entries plus a single linear classifier.  Shapes are
inferred analytically so configs can be inspected, counted and summarised
without allocating weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

MODEL_NAMES = ("DeepConvNet", "EEGNet", "ResNet1D-8", "ResNet1D-18")


class Kind(str, Enum):
    CONV2D = "Conv2D"
    CONV1D = "Conv1D"
    DEPTHWISE = "DepthwiseConv2D"
    SEPARABLE = "SeparableConv2D"
    MAXPOOL = "MaxPool"
    AVGPOOL = "AvgPool"
    ELU = "ELU"
    BATCHNORM = "BatchNorm"
    DROPOUT = "Dropout"
    LINEAR = "Linear"
    RESBLOCK = "ResBlock"
    FLATTEN = "Flatten"


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a stack.  ``padding`` is (pad_h, pad_w) for 2-D kinds and
    an int or (left, right) pair for Conv1D."""

    kind: Kind
    c_in: int
    c_out: int
    k_h: int = 1
    k_w: int = 1
    k: int = 1
    stride: int = 1
    padding: int | tuple[int, int] = 0
    p: float = 0.0
    multiplier: int = 1
    bias: bool = True

    def __str__(self) -> str:
        k = self.kind
        if k in (Kind.CONV2D, Kind.SEPARABLE):
            return f"{k.value}({self.c_in}, {self.c_out}, {self.k_h}x{self.k_w})"
        if k is Kind.DEPTHWISE:
            return f"{k.value}({self.c_in}, {self.c_out}, {self.k_h}x{self.k_w}, D={self.multiplier})"
        if k in (Kind.CONV1D, Kind.RESBLOCK):
            return f"{k.value}({self.c_in}, {self.c_out}, {self.k})"
        if k in (Kind.MAXPOOL, Kind.AVGPOOL):
            return f"{k.value}({self.k})"
        if k is Kind.DROPOUT:
            return f"Dropout({self.p})"
        if k is Kind.LINEAR:
            return f"Linear({self.c_in}, {self.c_out})"
        if k is Kind.BATCHNORM:
            return f"BatchNorm({self.c_in})"
        return k.value


@dataclass(frozen=True)
class ModelConfig:
    name: str
    feature_layers: tuple[LayerSpec, ...]
    classifier: LayerSpec
    n_channels: int = 60
    n_samples: int = 1000
    n_classes: int = 3
    # "2d" models see the input as a one-channel image (1, channels, samples)
    layout: str = "1d"
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def feature_dim(self) -> int:
        return self.classifier.c_in

    def input_shape(self) -> tuple[int, ...]:
        if self.layout == "2d":
            return (1, self.n_channels, self.n_samples)
        return (self.n_channels, self.n_samples)


# -- constructors ------------------------------------------------------------

def conv2d(c_in, c_out, kh, kw, padding=(0, 0), bias=True) -> LayerSpec:
    return LayerSpec(Kind.CONV2D, c_in, c_out, k_h=kh, k_w=kw, padding=padding, bias=bias)


def conv1d(c_in, c_out, k, stride=1, padding=0, bias=True) -> LayerSpec:
    return LayerSpec(Kind.CONV1D, c_in, c_out, k=k, stride=stride, padding=padding, bias=bias)


def maxpool(c, k) -> LayerSpec:
    return LayerSpec(Kind.MAXPOOL, c, c, k=k, stride=k)


def avgpool(c, k) -> LayerSpec:
    return LayerSpec(Kind.AVGPOOL, c, c, k=k, stride=k)


def elu(c) -> LayerSpec:
    return LayerSpec(Kind.ELU, c, c)


def batchnorm(c) -> LayerSpec:
    return LayerSpec(Kind.BATCHNORM, c, c)


def dropout(c, p=0.5) -> LayerSpec:
    return LayerSpec(Kind.DROPOUT, c, c, p=p)


def linear(n_in, n_out, bias=True) -> LayerSpec:
    return LayerSpec(Kind.LINEAR, n_in, n_out, bias=bias)


def build_resblock(c_in: int, c_out: int, k: int) -> LayerSpec:
    """``ResBlock(C_in, C_out, K)``: ELU-conv-ELU-conv body plus a skip branch."""
    if min(c_in, c_out, k) < 1:
        raise ValueError(f"ResBlock arguments must be >= 1, got ({c_in}, {c_out}, {k})")
    return LayerSpec(Kind.RESBLOCK, c_in, c_out, k=k)


def same_padding(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def expand_resblock(spec: LayerSpec) -> tuple[list[LayerSpec], list[LayerSpec]]:
    """Body and skip layer lists of a ResBlock spec (skip is empty for identity)."""
    if spec.kind is not Kind.RESBLOCK:
        raise ValueError(f"not a ResBlock: {spec}")
    pad = same_padding(spec.k)
    body = [
        elu(spec.c_in),
        conv1d(spec.c_in, spec.c_out, spec.k, padding=pad),
        elu(spec.c_out),
        conv1d(spec.c_out, spec.c_out, spec.k, padding=pad),
    ]
    skip = [] if spec.c_in == spec.c_out else [conv1d(spec.c_in, spec.c_out, 1)]
    return body, skip


# -- shape inference ---------------------------------------------------------

def _pad_pair(padding) -> tuple[int, int]:
    if isinstance(padding, (tuple, list)):
        return int(padding[0]), int(padding[1])
    return int(padding), int(padding)


def layer_output_shape(spec: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Per-sample output shape of ``spec`` applied to a per-sample ``shape``."""
    k = spec.kind
    if k is Kind.FLATTEN:
        n = 1
        for d in shape:
            n *= d
        return (n,)
    if k is Kind.LINEAR:
        _check_channels(spec, shape[0], shape)
        return (spec.c_out,)
    _check_channels(spec, shape[0], shape)
    if k in (Kind.ELU, Kind.BATCHNORM, Kind.DROPOUT):
        return shape
    if k in (Kind.MAXPOOL, Kind.AVGPOOL):
        n = shape[-1] // spec.k
        if n < 1:
            raise ValueError(f"{spec} does not fit axis of length {shape[-1]}")
        return (*shape[:-1], n)
    if k in (Kind.CONV2D, Kind.DEPTHWISE, Kind.SEPARABLE):
        ph, pw = _pad_pair(spec.padding)
        h = shape[1] + 2 * ph - spec.k_h + 1
        w = shape[2] + 2 * pw - spec.k_w + 1
        if h < 1 or w < 1:
            raise ValueError(f"{spec} does not fit input {shape}")
        return (spec.c_out, h, w)
    if k is Kind.CONV1D:
        left, right = _pad_pair(spec.padding)
        n = (shape[1] + left + right - spec.k) // spec.stride + 1
        if n < 1:
            raise ValueError(f"{spec} does not fit input {shape}")
        return (spec.c_out, n)
    if k is Kind.RESBLOCK:
        return (spec.c_out, shape[1])
    raise ValueError(f"unknown layer kind {k}")


def _check_channels(spec: LayerSpec, c: int, shape) -> None:
    if spec.c_in != c:
        raise ValueError(f"{spec} expects {spec.c_in} input channels, got shape {shape}")


def infer_shapes(config: ModelConfig) -> list[tuple[int, ...]]:
    """Per-sample output shape after each feature layer."""
    shape = config.input_shape()
    out = []
    for spec in config.feature_layers:
        shape = layer_output_shape(spec, shape)
        out.append(shape)
    return out


def validate(config: ModelConfig) -> None:
    """Check the channel chain and the classifier's input width."""
    layers = list(config.feature_layers)
    for prev, nxt in zip(layers, layers[1:]):
        if prev.c_out != nxt.c_in:
            raise ValueError(f"{config.name}: {prev} feeds {prev.c_out} channels into {nxt}")
    shapes = infer_shapes(config)
    if shapes[-1] != (config.classifier.c_in,):
        raise ValueError(f"{config.name}: features have shape {shapes[-1]}, classifier expects {config.classifier.c_in}")
    if config.classifier.kind is not Kind.LINEAR or config.classifier.c_out != config.n_classes:
        raise ValueError(f"{config.name}: classifier must be Linear(*, {config.n_classes})")


def _finish(name, layers, n_channels, n_samples, n_classes, layout, notes=()) -> ModelConfig:
    shape = (1, n_channels, n_samples) if layout == "2d" else (n_channels, n_samples)
    for spec in layers:
        shape = layer_output_shape(spec, shape)
    flat = 1
    for d in shape:
        flat *= d
    layers = list(layers) + [LayerSpec(Kind.FLATTEN, shape[0], flat)]
    cfg = ModelConfig(name, tuple(layers), linear(flat, n_classes), n_channels, n_samples, n_classes, layout, tuple(notes))
    validate(cfg)
    return cfg


# -- the four architectures --------------------------------------------------

def build_deepconvnet(n_channels: int = 60, n_samples: int = 1000, n_classes: int = 3) -> ModelConfig:
    """Temporal conv, full-height spatial conv, then three conv/max-pool blocks."""
    layers = [
        conv2d(1, 25, 1, 10),
        conv2d(25, 25, n_channels, 1, bias=False),
        batchnorm(25), elu(25), maxpool(25, 3),
    ]
    c = 25
    for c_next in (50, 100, 200):
        layers += [dropout(c, 0.5), conv2d(c, c_next, 1, 10, bias=False), batchnorm(c_next), elu(c_next), maxpool(c_next, 3)]
        c = c_next
    return _finish("DeepConvNet", layers, n_channels, n_samples, n_classes, "2d")


def build_eegnet(n_channels: int = 60, n_samples: int = 1000, n_classes: int = 3,
                 f1: int = 8, depth: int = 2, f2: int = 16) -> ModelConfig:
    """Temporal conv, depthwise spatial conv, separable conv, two average pools."""
    c = f1 * depth
    layers = [
        conv2d(1, f1, 1, 64, padding=(0, 32), bias=False),
        batchnorm(f1),
        LayerSpec(Kind.DEPTHWISE, f1, c, k_h=n_channels, k_w=1, multiplier=depth, bias=False),
        batchnorm(c), elu(c), avgpool(c, 4), dropout(c, 0.5),
        LayerSpec(Kind.SEPARABLE, c, f2, k_h=1, k_w=16, padding=(0, 8), bias=False),
        batchnorm(f2), elu(f2), avgpool(f2, 8), dropout(f2, 0.5),
    ]
    return _finish("EEGNet", layers, n_channels, n_samples, n_classes, "2d")


def _resnet_stem(n_channels: int) -> list[LayerSpec]:
    return [conv1d(n_channels, 32, 7, stride=4, padding=3), elu(32), maxpool(32, 2)]


def build_resnet1d8(n_channels: int = 60, n_samples: int = 1000, n_classes: int = 3) -> ModelConfig:
    """Stem conv and three ResBlocks (7 conv layers) plus the linear head."""
    layers = _resnet_stem(n_channels) + [
        build_resblock(32, 32, 7), maxpool(32, 2),
        build_resblock(32, 64, 7), maxpool(64, 2),
        build_resblock(64, 128, 7), elu(128), maxpool(128, 4),
    ]
    notes = ("final MaxPool(4) sets the feature width",)
    return _finish("ResNet1D-8", layers, n_channels, n_samples, n_classes, "1d", notes)


def build_resnet1d18(n_channels: int = 60, n_samples: int = 1000, n_classes: int = 3) -> ModelConfig:
    """Stem conv and eight kernel-3 ResBlocks (17 conv layers) plus the linear head."""
    layers = _resnet_stem(n_channels)
    c = 32
    stages = (32, 64, 128, 128)
    for i, c_next in enumerate(stages):
        layers += [build_resblock(c, c_next, 3), build_resblock(c_next, c_next, 3)]
        c = c_next
        if i < len(stages) - 1:
            layers.append(maxpool(c, 2))
    layers += [elu(c), maxpool(c, 2)]
    notes = ("final MaxPool(2) sets the feature width",)
    return _finish("ResNet1D-18", layers, n_channels, n_samples, n_classes, "1d", notes)


BUILDERS = {
    "DeepConvNet": build_deepconvnet,
    "EEGNet": build_eegnet,
    "ResNet1D-8": build_resnet1d8,
    "ResNet1D-18": build_resnet1d18,
}


def build_config(name: str, **kw) -> ModelConfig:
    try:
        return BUILDERS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}") from None


# -- counting / summaries ----------------------------------------------------

def layer_params(spec: LayerSpec) -> int:
    k = spec.kind
    b = spec.c_out if spec.bias else 0
    if k is Kind.CONV2D:
        return spec.c_out * spec.c_in * spec.k_h * spec.k_w + b
    if k is Kind.CONV1D:
        return spec.c_out * spec.c_in * spec.k + b
    if k is Kind.DEPTHWISE:
        return spec.c_out * spec.k_h * spec.k_w + b
    if k is Kind.SEPARABLE:
        return spec.c_in * spec.multiplier * spec.k_h * spec.k_w + spec.c_out * spec.c_in * spec.multiplier + b
    if k is Kind.LINEAR:
        return spec.c_out * spec.c_in + b
    if k is Kind.BATCHNORM:
        return 2 * spec.c_in
    if k is Kind.RESBLOCK:
        body, skip = expand_resblock(spec)
        return sum(layer_params(s) for s in body + skip)
    return 0


def count_params(model) -> int:
    """Exact number of trainable scalars in a ModelConfig, LayerSpec, or list of specs."""
    if isinstance(model, ModelConfig):
        return sum(layer_params(s) for s in model.feature_layers) + layer_params(model.classifier)
    if isinstance(model, LayerSpec):
        return layer_params(model)
    return sum(layer_params(s) for s in model)


def count_weighted_layers(config: ModelConfig) -> int:
    """Conv/linear layers on the main path; 1x1 projection shortcuts are not counted."""
    n = 1  # classifier
    for spec in config.feature_layers:
        if spec.kind in (Kind.CONV2D, Kind.CONV1D, Kind.DEPTHWISE, Kind.SEPARABLE):
            n += 1
        elif spec.kind is Kind.RESBLOCK:
            n += 2
    return n


def summary(config: ModelConfig) -> str:
    """Plain-text layer table: layer, output shape, parameter count."""
    rows = [("layer", "output shape", "params")]
    rows.append(("Input", "x".join(map(str, config.input_shape())), "0"))
    for spec, shape in zip(config.feature_layers, infer_shapes(config)):
        rows.append((str(spec), "x".join(map(str, shape)), str(layer_params(spec))))
    rows.append((str(config.classifier), str(config.n_classes), str(layer_params(config.classifier))))
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    lines = [f"{config.name}"]
    lines += [f"{a:<{w0}}  {b:<{w1}}  {c:>9}" for a, b, c in rows]
    lines.append(f"feature dim: {config.feature_dim}")
    lines.append(f"total params: {count_params(config)}")
    lines.append(f"weighted layers: {count_weighted_layers(config)}")
    lines += [f"note: {n}" for n in config.notes]
    return "\n".join(lines)


def with_input(config: ModelConfig, n_channels: int, n_samples: int) -> ModelConfig:
    """Rebuild ``config``'s architecture for a different input size."""
    return build_config(config.name, n_channels=n_channels, n_samples=n_samples, n_classes=config.n_classes)


__all__ = [
    "Kind", "LayerSpec", "ModelConfig", "MODEL_NAMES", "BUILDERS", "build_config", "build_deepconvnet",
    "build_eegnet", "build_resblock", "build_resnet1d8", "build_resnet1d18", "count_params",
    "count_weighted_layers", "expand_resblock", "infer_shapes", "layer_output_shape", "summary", "validate",
]
