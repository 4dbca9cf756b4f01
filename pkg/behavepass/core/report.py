"""
Result collection and report rendering.

Tables follow the layout of the benchmark's published results: unimodal AUCs
per task (touch modality, five sensors, sensor average), the best fusion
subset per task, rank-sum p-values and ROC data per task. Validation-split
AUCs appear in parentheses next to the evaluation AUCs.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from behavepass.core.metrics import EvalResult, evaluate, rates_at
from behavepass.core.protocol import ScoreSet, Subset, best_subset_search, parse_subset_label, subset_label
from behavepass.schemas.config import Scenario
from behavepass.schemas.dataset import MODALITY_CODES, SENSOR_MODALITIES, ModalityId, Split, Task

logger = logging.getLogger(__name__)

TOUCH_COLUMN = "touch"
SENSOR_COLUMNS = [MODALITY_CODES[m] for m in SENSOR_MODALITIES]
ROC_COLUMNS = ["threshold", "fpr_random", "tpr_random", "fpr_skilled", "tpr_skilled", "fpr_mixed", "tpr_mixed"]


def collect_results(score_sets: Mapping[Tuple[Task, Subset], ScoreSet], split: Split) -> List[EvalResult]:
    """EvalResults of every scored subset under the three scenarios."""
    results = []
    for (task, subset), score_set in score_sets.items():
        for scenario in Scenario:
            genuine, impostor = score_set.values(scenario)
            result = evaluate(
                genuine, impostor, split.value, task.value, score_set.label, scenario.value,
                excluded_users=len(score_set.excluded_users),
            )
            if result is not None:
                results.append(result)
    logger.info(f"Evaluated {len(results)} {split.value} distributions")
    return results


def write_results(results: Sequence[EvalResult], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([r.model_dump() for r in results], indent=2), encoding="utf-8")
    return path


def read_results(path: Union[str, Path]) -> List[EvalResult]:
    return [EvalResult.model_validate(item) for item in json.loads(Path(path).read_text(encoding="utf-8"))]


# ----------------------------------------------------------------------------
# lookups


def _subset_key(label: str):
    order = list(ModalityId).index
    subset = parse_subset_label(label)
    return (len(subset), [order(m) for m in subset])


class ResultTable:
    """Index of EvalResults by (split, task, subset, scenario)."""

    def __init__(self, results: Sequence[EvalResult]):
        self._by_key = {(r.split, r.task, r.subset, r.scenario): r for r in results}

    def get(self, split: Split, task: Task, subset: str, scenario: Scenario) -> Optional[EvalResult]:
        return self._by_key.get((split.value, task.value, subset, scenario.value))

    def subsets(self, split: Split, task: Task, scenario: Scenario) -> List[str]:
        labels = {k[2] for k in self._by_key if k[0] == split.value and k[1] == task.value and k[3] == scenario.value}
        return sorted(labels, key=_subset_key)

    def best(self, task: Task, scenario: Scenario, singletons: bool = False) -> Optional[EvalResult]:
        """Highest evaluation AUC; the smallest subset in canonical order wins ties."""
        aucs = {
            parse_subset_label(label): self.get(Split.EVALUATION, task, label, scenario).auc_percent
            for label in self.subsets(Split.EVALUATION, task, scenario)
            if not (singletons and "+" in label)
        }
        if not aucs:
            return None
        subset, _ = best_subset_search(aucs, scenario)
        return self.get(Split.EVALUATION, task, subset_label(subset), scenario)


def _cell(evaluation: Optional[float], validation: Optional[float]) -> str:
    if evaluation is None:
        return ""
    text = f"{evaluation:.2f}"
    if validation is not None:
        text += f" ({validation:.2f})"
    return text


def _mean(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


# ----------------------------------------------------------------------------
# tables


def unimodal_table(table: ResultTable, scenario: Scenario) -> pd.DataFrame:
    """Rows per task plus an average row; touch and sensor columns plus a sensor average."""
    columns = [TOUCH_COLUMN] + SENSOR_COLUMNS
    grid: Dict[str, Dict[str, Tuple[Optional[float], Optional[float]]]] = {}
    for task in Task:
        row = {}
        for column in columns:
            label = MODALITY_CODES[task.touch_modality] if column == TOUCH_COLUMN else column
            values = []
            for split in (Split.EVALUATION, Split.VALIDATION):
                result = table.get(split, task, label, scenario)
                values.append(result.auc_percent if result else None)
            row[column] = tuple(values)
        row["sensor_average"] = tuple(_mean([row[c][k] for c in SENSOR_COLUMNS]) for k in range(2))
        grid[task.value] = row
    grid["average"] = {
        column: tuple(_mean([grid[t.value][column][k] for t in Task]) for k in range(2))
        for column in columns + ["sensor_average"]
    }
    rows = [{"task": name, **{c: _cell(*v) for c, v in row.items()}} for name, row in grid.items()]
    return pd.DataFrame(rows, columns=["task"] + columns + ["sensor_average"])


def fusion_table(table: ResultTable, scenario: Scenario) -> pd.DataFrame:
    rows = []
    for task in Task:
        best = table.best(task, scenario)
        single = table.best(task, scenario, singletons=True)
        if best is None:
            continue
        validation = table.get(Split.VALIDATION, task, best.subset, scenario)
        rows.append(
            {
                "task": task.value,
                "best_subset": best.subset,
                "auc": _cell(best.auc_percent, validation.auc_percent if validation else None),
                "best_unimodal": single.subset if single else "",
                "best_unimodal_auc": f"{single.auc_percent:.2f}" if single else "",
                "fusion_gain": f"{best.auc_percent - single.auc_percent:.2f}" if single else "",
            }
        )
    return pd.DataFrame(rows, columns=["task", "best_subset", "auc", "best_unimodal", "best_unimodal_auc", "fusion_gain"])


def wilcoxon_table(table: ResultTable) -> pd.DataFrame:
    """Unimodal p-values and those of each scenario's best fusion, per task."""
    rows = []
    for task in Task:
        for scenario in Scenario:
            labels = [s for s in table.subsets(Split.EVALUATION, task, scenario) if "+" not in s]
            best = table.best(task, scenario)
            if best is not None and best.subset not in labels:
                labels.append(best.subset)
            for label in labels:
                result = table.get(Split.EVALUATION, task, label, scenario)
                rows.append(
                    {
                        "task": task.value,
                        "subset": label,
                        "scenario": scenario.value,
                        "p_value": f"{result.wilcoxon_p:.2E}",
                        "method": result.wilcoxon_method,
                        "degenerate": result.degenerate,
                    }
                )
    return pd.DataFrame(rows, columns=["task", "subset", "scenario", "p_value", "method", "degenerate"])


def roc_table(score_set: ScoreSet) -> pd.DataFrame:
    """ROC points of the three scenarios on one shared threshold grid."""
    everything = np.array([s.value for s in score_set.all_scores()])
    thresholds = np.concatenate([[-np.inf], np.unique(everything), [np.inf]])
    data = {"threshold": thresholds}
    for scenario in Scenario:
        genuine, impostor = score_set.values(scenario)
        if len(genuine) and len(impostor):
            fpr, tpr = rates_at(genuine, impostor, thresholds)
        else:
            fpr = tpr = np.full(len(thresholds), np.nan)
        data[f"fpr_{scenario.value}"] = fpr
        data[f"tpr_{scenario.value}"] = tpr
    return pd.DataFrame(data, columns=ROC_COLUMNS)


def render_report(
    results: Sequence[EvalResult],
    score_sets: Mapping[Tuple[Task, Subset], ScoreSet],
    out_dir: Union[str, Path],
) -> List[Path]:
    """
    Write the CSV tables, per-task ROC data and a text summary.

    ``score_sets`` are the evaluation-split distributions; ROC data is drawn
    for the best subset of the mixed scenario.
    """
    if not results:
        raise ValueError("no results to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = ResultTable(results)
    written: List[Path] = []

    def save(frame: pd.DataFrame, name: str) -> None:
        path = out / name
        frame.to_csv(path, index=False, float_format="%.10g")
        written.append(path)

    summary = ["BehavePass benchmark report", ""]
    for scenario in Scenario:
        save(unimodal_table(table, scenario), f"unimodal_{scenario.value}.csv")
        fusion = fusion_table(table, scenario)
        save(fusion, f"fusion_{scenario.value}.csv")
        summary.append(f"[{scenario.value}]")
        for row in fusion.itertuples(index=False):
            summary.append(
                f"  {row.task:<16} best {row.best_subset:<18} AUC {row.auc:<16} "
                f"unimodal {row.best_unimodal} {row.best_unimodal_auc}"
            )
        summary.append("")
    save(wilcoxon_table(table), "wilcoxon.csv")

    summary.append("[roc]")
    for task in Task:
        best = table.best(task, Scenario.MIXED)
        if best is None:
            continue
        score_set = score_sets.get((task, parse_subset_label(best.subset)))
        if score_set is None:
            logger.warning(f"No scores for ROC of {task.value} {best.subset}")
            continue
        save(roc_table(score_set), f"roc_{task.value}.csv")
        summary.append(f"  roc_{task.value}.csv uses subset {best.subset}")

    path = out / "summary.txt"
    path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    written.append(path)
    logger.info(f"Report written to {out} ({len(written)} files)")
    return written
