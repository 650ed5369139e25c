# analysis/reports.py
"""Report tables: CSV for machines, a tabulate grid for people."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence, Tuple

import pandas as pd
from tabulate import tabulate

from analysis.evaluation import EvalReport
from analysis.sweeps import AblationRow
from domain.boxes import class_name
from domain.errors import StorageError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["scenario", "class", "AP", "mAP", "mATE"]
ABLATION_COLUMNS = ["config", "scenario", "median_mAP", "median_mATE", "per_seed_mAP"]
FLOAT_FORMAT = "%.6f"
NAN = float("nan")


def report_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """One row per (scenario, class with ground truth); scenarios keep their input order."""
    rows = []
    for r in reports:
        if not r.per_class_ap:
            rows.append(
                {"scenario": r.scenario, "class": "-", "AP": NAN, "mAP": r.mAP, "mATE": r.mATE}
            )
        for class_id in sorted(r.per_class_ap):
            rows.append(
                {
                    "scenario": r.scenario,
                    "class": class_name(class_id),
                    "AP": r.per_class_ap[class_id],
                    "mAP": r.mAP,
                    "mATE": r.mATE,
                }
            )
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def ablation_frame(rows: Sequence[AblationRow]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "config": r.config,
                "scenario": r.scenario,
                "median_mAP": r.median_mAP,
                "median_mATE": r.median_mATE,
                "per_seed_mAP": " ".join(FLOAT_FORMAT % v for v in r.per_seed_mAP),
            }
            for r in rows
        ],
        columns=ABLATION_COLUMNS,
    )


def ablation_matrix(rows: Sequence[AblationRow]) -> pd.DataFrame:
    """Config x scenario grid of median mAP, both axes in first-seen order."""
    frame = ablation_frame(rows)
    configs = list(dict.fromkeys(frame["config"]))
    scenarios = list(dict.fromkeys(frame["scenario"]))
    grid = frame.pivot(index="config", columns="scenario", values="median_mAP")
    return grid.reindex(index=configs, columns=scenarios)


def render_table(frame: pd.DataFrame, index: bool = False) -> str:
    return tabulate(frame, headers="keys", floatfmt=".4f", tablefmt="grid", showindex=index)


def write_tables(
    frame: pd.DataFrame, out_dir, stem: str, text: str | None = None
) -> Tuple[Path, Path]:
    """Write `<stem>.csv` and `<stem>.txt`; the text defaults to the grid rendering."""
    out_dir = Path(out_dir)
    csv_path, txt_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.txt"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        frame.to_csv(
            csv_path, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n"
        )
        txt_path.write_text((text or render_table(frame)) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write reports under {out_dir}: {e}") from None
    logger.info(f"Wrote {csv_path} and {txt_path}")
    return csv_path, txt_path


def write_report(reports: Sequence[EvalReport], out_dir, stem: str = "report") -> List[Path]:
    return list(write_tables(report_frame(reports), out_dir, stem))


def write_ablation(rows: Sequence[AblationRow], out_dir, stem: str = "ablation") -> List[Path]:
    paths = list(write_tables(ablation_frame(rows), out_dir, stem))
    matrix = ablation_matrix(rows)
    text = render_table(matrix.reset_index(), index=False)
    paths += write_tables(matrix.reset_index(), out_dir, f"{stem}_matrix", text)
    return paths
