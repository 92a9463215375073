"""Python access to the trlab C++ core."""

from trlab._core import (
    ConfigError,
    Error,
    InvalidArgument,
    ShapeError,
    auc_roc,
    cca,
    config_keys,
    gabor_bank,
    load_checkpoint,
    param_count,
    run_experiment,
    svcca,
    synth_dataset,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvalidArgument",
    "ShapeError",
    "auc_roc",
    "cca",
    "config_keys",
    "gabor_bank",
    "load_checkpoint",
    "param_count",
    "run_experiment",
    "svcca",
    "synth_dataset",
]
