"""Cord screening of lens-free micrographs with capsule networks."""

from ._core import (
    Error,
    build_histogram,
    capsnet_lengths,
    conv2d,
    coverage_map,
    dynamic_routing,
    grad_check_suite,
    load_checkpoint,
    margin_loss,
    plan_grid,
    prepare_patch,
    run_cli,
    squash,
    synthetic_image,
)

__all__ = [
    "Error",
    "build_histogram",
    "capsnet_lengths",
    "conv2d",
    "coverage_map",
    "dynamic_routing",
    "grad_check_suite",
    "load_checkpoint",
    "margin_loss",
    "plan_grid",
    "prepare_patch",
    "run_cli",
    "squash",
    "synthetic_image",
]
