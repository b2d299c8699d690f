"""PointMT: linear and temperature-adaptive local attention for point clouds."""

from ._pointmt import (
    AttentionParams,
    Classifier,
    ParseError,
    farthest_point_sample,
    flop_count,
    generate_synthetic,
    gradcheck,
    knn,
    linear_attention,
    load_dataset,
    moment_decomposition,
    normalize_cloud,
    param_breakdown,
    param_count,
    quadratic_attention,
    run_cli,
    save_dataset,
    ta_attention,
)

__all__ = [
    "AttentionParams",
    "Classifier",
    "ParseError",
    "farthest_point_sample",
    "flop_count",
    "generate_synthetic",
    "gradcheck",
    "knn",
    "linear_attention",
    "load_dataset",
    "moment_decomposition",
    "normalize_cloud",
    "param_breakdown",
    "param_count",
    "quadratic_attention",
    "run_cli",
    "save_dataset",
    "ta_attention",
]
