"""Ambiguity-aware post-hoc confidence calibration.

The heavy lifting lives in the compiled extension; this package just
re-exports it under a stable name.
"""

from ._ambical import (
    Dataset,
    Model,
    __version__,
    benchmark,
    check_theory,
    dataset_from_string,
    ece_binned,
    entropy,
    evaluate,
    fit,
    load_dataset,
    method_names,
    run_toy,
    simulate_annotations,
    softmax,
    spearman,
    split,
)

__all__ = [
    "Dataset",
    "Model",
    "__version__",
    "benchmark",
    "check_theory",
    "dataset_from_string",
    "ece_binned",
    "entropy",
    "evaluate",
    "fit",
    "load_dataset",
    "method_names",
    "run_toy",
    "simulate_annotations",
    "softmax",
    "spearman",
    "split",
]
