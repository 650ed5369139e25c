# analysis/sweeps.py
"""Ablation sweeps: train and evaluate module-toggle variants over a shared seed set."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from analysis.evaluation import EvalReport, robustness_sweep
from domain.corruption_types import ScenarioTable
from domain.errors import ConfigurationError
from generator.dataset import get_splits
from model.params import init_params
from model.pipeline_model import FusionModel
from training.trainer import Trainer
from utils.config import FUSION_MODES, ExperimentConfig, config_from_dict, config_to_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Variant:
    name: str
    overrides: Tuple[str, ...] = ()


def _toggles(stfa: bool, cwmca: bool, reliability: bool) -> Tuple[str, ...]:
    flag = {True: "true", False: "false"}
    return (
        f"toggles.stfa_on={flag[stfa]}",
        f"toggles.cwmca_on={flag[cwmca]}",
        f"toggles.reliability_on={flag[reliability]}",
    )


ABLATION_PRESETS: Dict[str, List[Variant]] = {
    "components": [
        Variant("base", _toggles(False, False, False)),
        Variant("+STFA", _toggles(True, False, False)),
        Variant("+CW-MCA", _toggles(True, True, False)),
        Variant("+Reliability", _toggles(True, True, True)),
    ],
    "stfa": [
        Variant(mode, ("toggles.stfa_on=true", f"stfa.mode={mode}"))
        for mode in ("off", "spatial", "temporal", "full")
    ],
    "fusion": [
        Variant(mode, ("toggles.cwmca_on=true", f"fusion.mode={mode}")) for mode in FUSION_MODES
    ],
}


def resolve_variants(preset: str) -> List[Variant]:
    try:
        return list(ABLATION_PRESETS[preset])
    except KeyError:
        known = ", ".join(ABLATION_PRESETS)
        raise ConfigurationError(f"unknown ablation preset {preset!r} (known: {known})") from None


def variant_config(base: ExperimentConfig, variant: Variant, seed: int) -> ExperimentConfig:
    return config_from_dict(config_to_dict(base), [*variant.overrides, f"seed={seed}"])


def run_experiment(cfg: ExperimentConfig, table: ScenarioTable) -> List[EvalReport]:
    """Synthesize (or load) data, train all stages from a fresh init, sweep the scenarios."""
    splits = get_splits(cfg)
    model = FusionModel(cfg)
    results = Trainer(cfg, model).run(splits["train"], init_params(cfg))
    params = results[max(results)].params
    return robustness_sweep(model, params, splits["test"], table)


def _median(values: Sequence[float]) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return float(np.median(finite)) if finite else math.nan


@dataclass
class AblationRow:
    config: str
    scenario: str
    median_mAP: float
    median_mATE: float
    per_seed_mAP: List[float] = field(default_factory=list)


def ablation_sweep(
    base: ExperimentConfig,
    variants: Sequence[Variant],
    table: ScenarioTable,
    seeds: Sequence[int] | None = None,
    runner: Callable[[ExperimentConfig, ScenarioTable], List[EvalReport]] = run_experiment,
) -> List[AblationRow]:
    """Median mAP per (variant, scenario) over the seeds; rows in variant then table order."""
    seeds = list(base.eval_seeds if seeds is None else seeds)
    if not seeds:
        raise ConfigurationError("ablation sweep needs at least one seed")
    rows: List[AblationRow] = []
    for variant in variants:
        per_seed = []
        for seed in seeds:
            cfg = variant_config(base, variant, seed)
            logger.info(f"Ablation {variant.name}: seed {seed}")
            per_seed.append(runner(cfg, table))
        for j, entry in enumerate(table):
            maps = [reports[j].mAP for reports in per_seed]
            mates = [reports[j].mATE for reports in per_seed]
            rows.append(AblationRow(variant.name, entry.name, _median(maps), _median(mates), maps))
    return rows
