"""End-to-end smoke of the Python bindings against a throwaway dataset."""

import json
import math

import numpy as np
import pytest

surgseg = pytest.importorskip("surgseg")


def test_loss_values_on_uniform_probabilities():
    probs = np.full((1, 2, 4, 4), 0.5)
    target = np.zeros((1, 4, 4), dtype=np.uint8)
    vals = surgseg.loss_values(probs, target)
    assert vals["cross_entropy"] == pytest.approx(math.log(2), abs=1e-9)
    mix = 0.7 * vals["tversky"] + 0.3 * vals["cross_entropy"]
    assert vals["combined"] == pytest.approx(mix, abs=1e-12)


def test_tversky_index_of_a_perfect_prediction():
    target = np.zeros((1, 2, 2), dtype=np.uint8)
    target[0, 0, 0] = 1
    probs = np.zeros((1, 2, 2, 2))
    for r in range(2):
        for c in range(2):
            probs[0, target[0, r, c], r, c] = 1.0
    assert surgseg.tversky_index(probs, target, cls=1) == pytest.approx(1.0, abs=1e-4)


def test_fuse_masks_keeps_tool_over_background():
    classes = surgseg.default_registry_json(2, 2)
    heads = [e["head"] for e in json.loads(classes)]
    assert heads == ["anatomy", "anatomy", "tool", "tool"]  # globals 1..4
    tool = np.zeros((2, 2), dtype=np.uint8)
    anat = np.zeros((2, 2), dtype=np.uint8)
    tool[0, 0] = 1  # first tool class -> global 3
    anat[0, 1] = 2  # second anatomy class -> global 2
    fused = surgseg.fuse_masks(tool, anat, classes)
    assert fused.dtype == np.uint8
    assert fused[0, 0] == 3
    assert fused[0, 1] == 2
    assert fused[1, 0] == 0 and fused[1, 1] == 0


def test_miou_of_identical_masks_is_one():
    m = np.random.default_rng(0).integers(0, 3, size=(8, 8)).astype(np.uint8)
    assert surgseg.miou(m, m, num_classes=3) == pytest.approx(1.0)


def test_synthesize_train_evaluate_round_trip(tmp_path):
    root = tmp_path / "data"
    surgseg.synthesize(str(root), seed=3, train=8, val=2, test=0, size=32)
    assert (root / "classes.json").exists()

    ckpt = tmp_path / "tool.ckpt"
    cfg = {
        "data": {"root": str(root)},
        "model": {"head": "tool", "encoder_preset": "tiny"},
        "optim": {"lr_base": 1e-3},
        "train": {"epochs": 2, "batch_size": 4, "seed": 1, "checkpoint": str(ckpt)},
    }
    result = surgseg.train(json.dumps(cfg))
    assert result["steps"] == 4  # 8 samples / batch 4 * 2 epochs
    assert len(result["epoch_mean_loss"]) == 2
    assert math.isfinite(result["final_loss"])
    assert ckpt.exists()

    report = json.loads(surgseg.evaluate(str(ckpt), str(root), "val"))
    assert 0.0 <= report["miou"] <= 1.0
    assert report["total_pixels"] == 2 * 32 * 32
