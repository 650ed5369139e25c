# relibev/pipeline.py
"""Command implementations behind the CLI. Each returns the paths it wrote."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence

from analysis.evaluation import evaluate, robustness_sweep
from analysis.reports import write_ablation, write_report
from analysis.sweeps import ablation_sweep, resolve_variants
from corruption.scenarios import resolve_scenarios, save_scenarios
from domain.errors import SelfTestFailure, StorageError
from generator.dataset import get_splits, save_dataset, synthesize_split
from model.params import ModelParams, init_params
from model.pipeline_model import FusionModel
from relibev.selftest import SelfTestReport, run_selftest
from training.checkpoint import load_checkpoint, save_checkpoint
from training.trainer import STAGES, Trainer
from utils.config import ExperimentConfig, dump_config
from utils.logging_utils import log_dict

logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "checkpoint.rfck"
DETECTIONS_DIR = "detections"
SCENARIO_TABLE = "scenarios.yaml"


def output_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create output directory {out}: {e}") from None
    return out


def stage_checkpoint(out: Path, stage: int) -> Path:
    return out / f"checkpoint_stage{stage}.rfck"


def cmd_synth(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Synthesize both splits into `out_dir`; returns the manifest path."""
    out = output_dir(cfg, out_dir)
    splits = {split: synthesize_split(cfg, split) for split in ("train", "test")}
    manifest = save_dataset(out, splits, cfg)
    dump_config(cfg, out / "config.yaml")
    logger.info(
        f"Synthesized {len(splits['train'])} train and {len(splits['test'])} test scenes in {out}"
    )
    return manifest


def _starting_params(cfg: ExperimentConfig, out: Path, first_stage: int) -> ModelParams:
    params = init_params(cfg)
    if first_stage == STAGES[0]:
        return params
    previous = stage_checkpoint(out, first_stage - 1)
    if previous.exists():
        logger.info(f"Resuming stage {first_stage} from {previous}")
        return load_checkpoint(previous, params)
    logger.warning(f"{previous} not found; stage {first_stage} starts from a fresh init")
    return params


def cmd_train(
    cfg: ExperimentConfig, out_dir=None, stages: Sequence[int] | None = None
) -> List[Path]:
    """Run the requested stages; the final checkpoint is written only when stage 3 ran."""
    out = output_dir(cfg, out_dir)
    stages = sorted(set(stages or STAGES))
    logger.debug(f"Training config:\n{log_dict(cfg.training)}")
    splits = get_splits(cfg)
    model = FusionModel(cfg)
    params = _starting_params(cfg, out, stages[0])
    results = Trainer(cfg, model).run(splits["train"], params, stages, out)
    dump_config(cfg, out / "config.yaml")
    written = []
    for stage in stages:
        written += [stage_checkpoint(out, stage), out / f"curves_stage{stage}.csv"]
    if STAGES[-1] in results:
        written.append(save_checkpoint(out / FINAL_CHECKPOINT, results[STAGES[-1]].params))
    return written


def _trained(cfg: ExperimentConfig, out: Path, checkpoint=None) -> ModelParams:
    path = Path(checkpoint) if checkpoint is not None else out / FINAL_CHECKPOINT
    return load_checkpoint(path, init_params(cfg))


def cmd_eval(cfg: ExperimentConfig, checkpoint=None, out_dir=None) -> List[Path]:
    out = output_dir(cfg, out_dir)
    params = _trained(cfg, out, checkpoint)
    model = FusionModel(cfg)
    scenes = get_splits(cfg)["test"]
    report = evaluate(model, params, scenes, "clean", detections_dir=out / DETECTIONS_DIR)
    return write_report([report], out, "eval")


def cmd_sweep(
    cfg: ExperimentConfig,
    checkpoint=None,
    scenarios: str | None = None,
    out_dir=None,
    ablation: str | None = None,
) -> List[Path]:
    """Robustness sweep of one checkpoint, or with `ablation`, retrain every preset variant."""
    out = output_dir(cfg, out_dir)
    table = resolve_scenarios(scenarios if scenarios is not None else cfg.scenarios)
    save_scenarios(out / SCENARIO_TABLE, table)
    if ablation is not None:
        rows = ablation_sweep(cfg, resolve_variants(ablation), table)
        return write_ablation(rows, out, f"ablation_{ablation}")
    params = _trained(cfg, out, checkpoint)
    model = FusionModel(cfg)
    reports = robustness_sweep(model, params, get_splits(cfg)["test"], table)
    return write_report(reports, out, "sweep")


def cmd_selftest(out_dir=None) -> SelfTestReport:
    report = run_selftest()
    text = report.render()
    logger.info(f"Selftest report:\n{text}")
    if out_dir is not None:
        path = Path(out_dir) / "selftest.txt"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text + "\n", encoding="utf-8")
        except OSError as e:
            raise StorageError(f"cannot write {path}: {e}") from None
    if not report.passed:
        names = ", ".join(f"{r.module}/{r.name}" for r in report.failures)
        raise SelfTestFailure(f"selftest failed: {names}")
    return report
