import math

import pandas as pd
import pytest

from analysis.evaluation import (
    THREADS_ENV,
    EvalReport,
    predict_scenes,
    robustness_sweep,
    scene_corruption,
    score_detections,
    worker_count,
)
from analysis.reports import ablation_matrix, report_frame, write_ablation, write_report
from analysis.sweeps import ablation_sweep, resolve_variants, variant_config
from corruption.scenarios import standard_scenarios
from domain.boxes import Detection
from domain.corruption_types import CorruptionKind, CorruptionSpec
from domain.errors import ConfigurationError
from model.params import init_params
from model.pipeline_model import FusionModel
from relibev.selftest import tiny_config


@pytest.fixture
def loose_cfg():
    # every local maximum becomes a detection, so the comparisons are not vacuous
    return tiny_config(**{"head.score_threshold": 0.0})


def test_worker_count_reads_the_environment(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert worker_count() == 1
    monkeypatch.setenv(THREADS_ENV, "3")
    assert worker_count() == 3
    for bad in ("0", "many"):
        monkeypatch.setenv(THREADS_ENV, bad)
        with pytest.raises(ConfigurationError):
            worker_count()


def test_predictions_do_not_depend_on_thread_count(monkeypatch, loose_cfg, tiny_scenes):
    model, params = FusionModel(loose_cfg), init_params(loose_cfg)
    spec = CorruptionSpec(CorruptionKind.OBJECT_OCCLUSION, {"rate": 0.5}, seed=3)
    single = predict_scenes(model, params, tiny_scenes, spec, workers=1)
    monkeypatch.setenv(THREADS_ENV, "4")
    threaded = predict_scenes(model, params, tiny_scenes, spec)
    assert threaded == single
    assert any(single)


def test_scene_corruption_seed_depends_on_scene_index_only():
    spec = CorruptionSpec(CorruptionKind.OBJECT_DROP, {"rate": 0.5}, seed=9)
    assert scene_corruption(None, 0) is None
    assert scene_corruption(CorruptionSpec(CorruptionKind.NONE), 0) is None
    assert scene_corruption(spec, 1) == scene_corruption(spec, 1)
    assert scene_corruption(spec, 1).seed != scene_corruption(spec, 2).seed


def test_ground_truth_detections_score_perfectly(tiny_cfg, tiny_scenes):
    dets = [[Detection(b, 1.0) for b in seq.current.gt_boxes] for seq in tiny_scenes]
    report = score_detections("clean", dets, tiny_scenes, tiny_cfg.dataset.class_count)
    assert report.mAP == pytest.approx(1.0)
    assert report.mATE == pytest.approx(0.0)
    assert report.n_scenes == 2 and report.n_detections == 2


def test_sweep_reports_follow_table_order(tiny_cfg, tiny_scenes):
    table = standard_scenarios().subset(["clean", "fov_zero", "missing_front"])
    model = FusionModel(tiny_cfg)
    reports = robustness_sweep(model, init_params(tiny_cfg), tiny_scenes, table, workers=1)
    assert [r.scenario for r in reports] == ["clean", "fov_zero", "missing_front"]
    assert all(r.n_scenes == 2 for r in reports)


def test_report_frame_rows_and_files(tmp_path):
    reports = [
        EvalReport("clean", {1: 0.5, 0: 0.75}, 0.625, 0.2, 2, 5),
        EvalReport("fov_zero", {}, 0.0, math.nan, 2, 0),
    ]
    frame = report_frame(reports)
    assert frame["scenario"].tolist() == ["clean", "clean", "fov_zero"]
    assert frame["class"].tolist() == ["car", "pedestrian", "-"]
    csv_path, txt_path = write_report(reports, tmp_path, stem="eval")
    assert csv_path.name == "eval.csv" and txt_path.exists()
    text = csv_path.read_text()
    assert text.splitlines()[0] == "scenario,class,AP,mAP,mATE"
    assert "nan" in text
    assert pd.read_csv(csv_path).shape == (3, 5)


def fake_runner(cfg, table):
    bonus = 0.1 if cfg.toggles.stfa_on else 0.0
    return [EvalReport(e.name, {0: cfg.seed / 10.0}, cfg.seed / 10.0 + bonus, 0.1) for e in table]


def test_ablation_sweep_takes_medians_over_seeds(tiny_cfg, tmp_path):
    variants = resolve_variants("components")[:2]
    table = standard_scenarios().subset(["clean", "fov_zero"])
    rows = ablation_sweep(tiny_cfg, variants, table, seeds=[0, 4, 2], runner=fake_runner)
    assert [(r.config, r.scenario) for r in rows] == [
        ("base", "clean"),
        ("base", "fov_zero"),
        ("+STFA", "clean"),
        ("+STFA", "fov_zero"),
    ]
    assert rows[0].median_mAP == pytest.approx(0.2)
    assert rows[2].median_mAP == pytest.approx(0.3)
    assert rows[0].per_seed_mAP == pytest.approx([0.0, 0.4, 0.2])
    matrix = ablation_matrix(rows)
    assert list(matrix.index) == ["base", "+STFA"]
    assert list(matrix.columns) == ["clean", "fov_zero"]
    paths = write_ablation(rows, tmp_path, stem="ablation_components")
    assert sorted(p.name for p in paths) == [
        "ablation_components.csv",
        "ablation_components.txt",
        "ablation_components_matrix.csv",
        "ablation_components_matrix.txt",
    ]


def test_variant_config_and_presets(tiny_cfg):
    cfg = variant_config(tiny_cfg, resolve_variants("components")[0], seed=7)
    assert cfg.seed == 7
    assert not cfg.toggles.stfa_on and cfg.effective_fusion_mode == "add"
    assert [v.name for v in resolve_variants("fusion")][-1] == "cw_mca"
    with pytest.raises(ConfigurationError):
        resolve_variants("everything")
    with pytest.raises(ConfigurationError):
        ablation_sweep(tiny_cfg, [], standard_scenarios(), seeds=[])
