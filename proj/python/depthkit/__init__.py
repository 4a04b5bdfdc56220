"""Relative depth evaluation, pseudo-label curation and pair benchmark toolkit."""

from ._core import (
    DepthkitError,
    combined_loss,
    curation_mask,
    evaluate,
    fake_model,
    fit_lsq,
    fit_robust,
    gradient_matching_loss,
    load_depth,
    pair_accuracy,
    render_random_scene,
    save_depth,
    ssi_loss,
)

__version__ = "0.3.0"

__all__ = [
    "DepthkitError",
    "combined_loss",
    "curation_mask",
    "evaluate",
    "fake_model",
    "fit_lsq",
    "fit_robust",
    "gradient_matching_loss",
    "load_depth",
    "pair_accuracy",
    "render_random_scene",
    "save_depth",
    "ssi_loss",
]
