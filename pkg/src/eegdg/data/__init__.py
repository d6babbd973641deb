from .domains import (
    DEFAULT_CLASS_NAMES,
    N_CHANNELS,
    N_CLASSES,
    N_SAMPLES,
    TRIALS_PER_CLASS,
    Dataset,
    DomainKey,
    SessionRecord,
    Trial,
)
from .io import DatasetFormatError, build_manifest, load_dataset, write_dataset
from .sampler import DEFAULT_BATCH_PER_DOMAIN, DomainBatch, MinibatchSampler, sample_minibatches
from .split import AccessLog, FinetuneSplit, LeakageError, SplitPlan, finetune_split, loso_split, pool_split
from .synthetic import GeneratorConfig, class_sources, domain_mixing, generate_synthetic, synthesize

__all__ = [
    "AccessLog", "DEFAULT_BATCH_PER_DOMAIN", "DEFAULT_CLASS_NAMES", "Dataset", "DatasetFormatError", "DomainBatch",
    "DomainKey", "FinetuneSplit", "GeneratorConfig", "LeakageError", "MinibatchSampler", "N_CHANNELS", "N_CLASSES",
    "N_SAMPLES", "SessionRecord", "SplitPlan", "TRIALS_PER_CLASS", "Trial", "build_manifest", "class_sources",
    "domain_mixing", "finetune_split", "generate_synthetic", "load_dataset", "loso_split", "pool_split",
    "sample_minibatches", "synthesize", "write_dataset",
]
