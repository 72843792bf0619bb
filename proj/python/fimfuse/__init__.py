"""Cross-modal fusion classifiers over precomputed image and text embeddings."""

from ._core import (
    ConfigError,
    ContractViolation,
    CorruptionError,
    Dataset,
    DimensionError,
    Error,
    FormatError,
    IoError,
    Model,
    ModeError,
    NumericError,
    UndefinedMetricError,
    ValidationError,
    auroc,
    binarize,
    fit,
    init_model,
    kmeans,
    load_checkpoint,
    micro_f1,
    parameter_count,
    read_dataset,
    synth,
)

__all__ = [name for name in dir() if not name.startswith("_")]
