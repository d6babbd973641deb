from .network import Network, build_network, param_hash
from .specs import (
    BUILDERS,
    MODEL_NAMES,
    Kind,
    LayerSpec,
    ModelConfig,
    build_config,
    build_deepconvnet,
    build_eegnet,
    build_resblock,
    build_resnet1d8,
    build_resnet1d18,
    count_params,
    count_weighted_layers,
    expand_resblock,
    infer_shapes,
    summary,
)

__all__ = [
    "BUILDERS", "MODEL_NAMES", "Kind", "LayerSpec", "ModelConfig", "Network", "build_config", "build_deepconvnet",
    "build_eegnet", "build_network", "build_resblock", "build_resnet1d8", "build_resnet1d18", "count_params",
    "count_weighted_layers", "expand_resblock", "infer_shapes", "param_hash", "summary",
]
