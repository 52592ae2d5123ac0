"""Dual-model surgical scene segmentation."""

from ._core import (
    default_registry_json,
    evaluate,
    evaluate_fused,
    fuse_masks,
    loss_values,
    miou,
    synthesize,
    train,
    tversky_index,
)

__all__ = [
    "default_registry_json",
    "evaluate",
    "evaluate_fused",
    "fuse_masks",
    "loss_values",
    "miou",
    "synthesize",
    "train",
    "tversky_index",
]
