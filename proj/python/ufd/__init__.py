"""Fake image detection on frozen encoder features.

Feature banks, nearest-neighbor and linear-probe scoring, evaluation metrics
and the ``ufd`` command line, backed by the C++ core.
"""

from ._core import (
    FeatureBank,
    Label,
    LinearModel,
    UfdError,
    accuracy_at_threshold,
    average_precision,
    build_bank,
    calibrate_threshold,
    cosine_distance,
    decode_bank,
    encode_bank,
    encoded_size,
    knn_score,
    load_bank,
    load_model,
    merge_banks,
    pr_curve,
    run_cli,
    save_bank,
    save_model,
    subsample_bank,
    train_linear,
)

__all__ = [
    "FeatureBank",
    "Label",
    "LinearModel",
    "UfdError",
    "accuracy_at_threshold",
    "average_precision",
    "build_bank",
    "calibrate_threshold",
    "cosine_distance",
    "decode_bank",
    "encode_bank",
    "encoded_size",
    "knn_score",
    "load_bank",
    "load_model",
    "merge_banks",
    "pr_curve",
    "run_cli",
    "save_bank",
    "save_model",
    "subsample_bank",
    "train_linear",
]
