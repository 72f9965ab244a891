"""Membership and memorization auditing for distilled language models."""

from _kdaudit import (
    ConfigError,
    DataError,
    InputError,
    Model,
    ShapeError,
    auc,
    divergence,
    make_synthetic_corpus,
    rouge_l,
    tpr_at_fpr,
)

__all__ = [
    "ConfigError",
    "DataError",
    "InputError",
    "Model",
    "ShapeError",
    "auc",
    "divergence",
    "make_synthetic_corpus",
    "rouge_l",
    "tpr_at_fpr",
]
