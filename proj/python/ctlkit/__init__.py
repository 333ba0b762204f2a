"""Centroid triplet loss training and centroid-based retrieval."""

from ._ctlkit import (
    DataError,
    Dataset,
    DimensionMismatch,
    Encoder,
    NoEligibleTargets,
    ZeroNormError,
    accuracy_at_k,
    average_precision,
    bench,
    default_config,
    evaluate,
    generate_synthetic,
    load_checkpoint,
    load_dataset,
    lr_at_epoch,
    save_dataset,
    train,
)

__all__ = [
    "DataError",
    "Dataset",
    "DimensionMismatch",
    "Encoder",
    "NoEligibleTargets",
    "ZeroNormError",
    "accuracy_at_k",
    "average_precision",
    "bench",
    "default_config",
    "evaluate",
    "generate_synthetic",
    "load_checkpoint",
    "load_dataset",
    "lr_at_epoch",
    "save_dataset",
    "train",
]
