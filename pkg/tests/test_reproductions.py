"""Robustness orderings on the standard synthetic benchmark.

The slow tests train the full default configuration once per seed; run them
with `pytest -m slow`.
"""

import math
import statistics

import numpy as np
import pytest

from analysis.sweeps import Variant, ablation_sweep, resolve_variants
from corruption.scenarios import standard_scenarios
from corruption.transforms import corrupt_sequence
from domain.corruption_types import CorruptionKind, CorruptionSpec
from generator.dataset import get_splits
from model.params import as_constants, init_params
from model.pipeline_model import FusionModel
from relibev import pipeline
from relibev.selftest import tiny_config
from training.trainer import Trainer
from utils.config import load_config

SEEDS = [0, 1, 2, 3, 4]
FOV_THIRD = CorruptionSpec(
    CorruptionKind.LIMITED_FOV, {"theta_min": -math.pi / 3, "theta_max": math.pi / 3}
)
FRONT_ONLY = CorruptionSpec(CorruptionKind.CAMERA_PRESERVE_FRONT_ONLY)


def mean_confidences(model, params, scenes, spec=None):
    params = as_constants(params)
    scores = []
    for i, seq in enumerate(scenes):
        if spec is not None:
            seq = corrupt_sequence(seq, spec.with_seed(i), model.geometry)
        scores.append(model.forward(seq, params).scores.as_floats())
    return np.mean(np.asarray(scores), axis=0)


@pytest.mark.slow
def test_pretrained_confidences_separate_clean_from_corrupted():
    lidar_gaps, camera_gaps = [], []
    for seed in SEEDS:
        cfg = load_config(None, [f"seed={seed}"])
        splits = get_splits(cfg)
        model = FusionModel(cfg)
        params = Trainer(cfg, model).run(splits["train"], init_params(cfg), stages=[1])[1].params
        clean = mean_confidences(model, params, splits["test"])
        clipped = mean_confidences(model, params, splits["test"], FOV_THIRD)
        front = mean_confidences(model, params, splits["test"], FRONT_ONLY)
        lidar_gaps.append(clean[0] - clipped[0])
        camera_gaps.append(clean[1] - front[1])
    assert statistics.median(lidar_gaps) > 0.15
    assert statistics.median(camera_gaps) > 0.15


@pytest.mark.slow
def test_fov_severity_ordering_and_lidar_loss_advantage():
    cfg = load_config(None)
    table = standard_scenarios().subset(["clean", "fov_half_pi", "fov_third_pi", "fov_zero"])
    variants = [Variant("full"), Variant("add", ("toggles.cwmca_on=false",))]
    rows = ablation_sweep(cfg, variants, table, SEEDS)
    median = {(r.config, r.scenario): r.median_mAP for r in rows}
    ordered = [median[("full", name)] for name in table.names]
    assert all(a >= b for a, b in zip(ordered, ordered[1:]))
    assert median[("full", "fov_zero")] > median[("add", "fov_zero")]


@pytest.mark.slow
def test_component_ablation_is_non_decreasing():
    cfg = load_config(None)
    table = standard_scenarios().subset(["fov_half_pi"])
    rows = ablation_sweep(cfg, resolve_variants("components"), table, SEEDS)
    medians = [r.median_mAP for r in rows]
    assert all(a <= b for a, b in zip(medians, medians[1:]))
    assert medians[-1] > medians[0]


def test_train_and_sweep_reruns_are_byte_identical(tmp_path):
    cfg = tiny_config(
        **{
            "training.stage1.epochs": 1,
            "training.stage2.epochs": 1,
            "training.stage3.epochs": 1,
        }
    )
    for name in ("a", "b"):
        pipeline.cmd_train(cfg, tmp_path / name)
        pipeline.cmd_sweep(cfg, out_dir=tmp_path / name)
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert any(f.name == pipeline.FINAL_CHECKPOINT for f in files)
    assert any(f.name == "sweep.csv" for f in files)
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes()
