import pandas as pd
import pytest

from behavepass.core.metrics import EvalResult
from behavepass.core.protocol import ComparisonKind, ScoreSet, SessionScore
from behavepass.core.report import (
    ResultTable,
    collect_results,
    fusion_table,
    read_results,
    render_report,
    roc_table,
    unimodal_table,
    wilcoxon_table,
    write_results,
)
from behavepass.schemas.config import Scenario
from behavepass.schemas.dataset import SENSOR_MODALITIES, ModalityId, Split, Task

A, GR, GY, L, M = SENSOR_MODALITIES


def _result(task, subset, scenario, auc, split="evaluation", p=0.01):
    return EvalResult(
        split=split,
        task=task.value,
        subset=subset,
        scenario=scenario.value,
        auc_percent=auc,
        wilcoxon_p=p,
        wilcoxon_method="normal",
        n_genuine=10,
        n_impostor=10,
    )


def _score_set(task, subset, genuine, random, skilled):
    score_set = ScoreSet(task=task, subset=subset)
    for kind, values in (
        (ComparisonKind.GENUINE, genuine),
        (ComparisonKind.RANDOM_IMPOSTOR, random),
        (ComparisonKind.SKILLED_IMPOSTOR, skilled),
    ):
        for k, value in enumerate(values):
            score_set.add(SessionScore(value=value, kind=kind, user=f"u{k}", verify_session=3))
    return score_set


@pytest.fixture
def results():
    rows = []
    for scenario in Scenario:
        rows += [
            _result(Task.TAPPING, "TP", scenario, 70.0),
            _result(Task.TAPPING, "A", scenario, 60.0),
            _result(Task.TAPPING, "Gy", scenario, 80.0),
            _result(Task.TAPPING, "TP+Gy", scenario, 90.0),
            _result(Task.TAPPING, "A+Gy", scenario, 90.0),
            _result(Task.TAPPING, "TP", scenario, 65.0, split="validation"),
            _result(Task.KEYSTROKE, "K", scenario, 75.0),
        ]
    return rows


@pytest.fixture
def score_sets():
    tapping = _score_set(Task.TAPPING, (ModalityId.TAPPING, GY), [0.1, 0.2, 0.3], [0.25, 0.5], [0.15, 0.4])
    keys = _score_set(Task.KEYSTROKE, (ModalityId.KEYSTROKE,), [1.0, 2.0], [3.0, 1.5], [2.5, 0.5])
    return {(Task.TAPPING, tapping.subset): tapping, (Task.KEYSTROKE, keys.subset): keys}


class TestResultTable:
    def test_best_prefers_smallest_subset_on_ties(self, results):
        table = ResultTable(results)
        assert table.best(Task.TAPPING, Scenario.RANDOM).subset == "TP+Gy"
        assert table.best(Task.TAPPING, Scenario.RANDOM, singletons=True).subset == "Gy"
        assert table.best(Task.GALLERY_SWIPING, Scenario.RANDOM) is None

    def test_validation_results_never_selected(self):
        table = ResultTable(
            [
                _result(Task.TAPPING, "A", Scenario.RANDOM, 60.0),
                _result(Task.TAPPING, "Gy", Scenario.RANDOM, 99.0, split="validation"),
            ]
        )
        assert table.best(Task.TAPPING, Scenario.RANDOM).subset == "A"


class TestTables:
    def test_unimodal_cells_and_averages(self, results):
        frame = unimodal_table(ResultTable(results), Scenario.RANDOM)
        assert list(frame.columns) == ["task", "touch", "A", "Gr", "Gy", "L", "M", "sensor_average"]
        assert frame["task"].tolist() == [t.value for t in Task] + ["average"]
        tapping = frame.set_index("task").loc["tapping"]
        assert tapping["touch"] == "70.00 (65.00)"
        assert tapping["A"] == "60.00"
        assert tapping["Gr"] == ""
        assert tapping["sensor_average"] == "70.00"
        average = frame.set_index("task").loc["average"]
        assert average["touch"] == "72.50 (65.00)"

    def test_fusion_table(self, results):
        frame = fusion_table(ResultTable(results), Scenario.SKILLED)
        row = frame.set_index("task").loc["tapping"]
        assert row["best_subset"] == "TP+Gy"
        assert row["best_unimodal"] == "Gy"
        assert row["fusion_gain"] == "10.00"
        assert set(frame["task"]) == {"tapping", "keystroke"}

    def test_wilcoxon_table(self, results):
        frame = wilcoxon_table(ResultTable(results))
        tapping = frame[(frame["task"] == "tapping") & (frame["scenario"] == "mixed")]
        assert tapping["subset"].tolist() == ["TP", "A", "Gy", "TP+Gy"]
        assert tapping["p_value"].iloc[0] == "1.00E-02"

    def test_roc_table_shares_thresholds(self, score_sets):
        frame = roc_table(score_sets[(Task.KEYSTROKE, (ModalityId.KEYSTROKE,))])
        assert frame.columns[0] == "threshold"
        assert frame["threshold"].iloc[0] == float("-inf")
        assert frame["threshold"].iloc[-1] == float("inf")
        for scenario in Scenario:
            assert frame[f"fpr_{scenario.value}"].iloc[-1] == 1.0
            assert frame[f"tpr_{scenario.value}"].is_monotonic_increasing


class TestRendering:
    def test_render_report_writes_files(self, tmp_path, results, score_sets):
        written = render_report(results, score_sets, tmp_path / "report")
        names = {p.name for p in written}
        for scenario in Scenario:
            assert f"unimodal_{scenario.value}.csv" in names
            assert f"fusion_{scenario.value}.csv" in names
        assert {"wilcoxon.csv", "summary.txt", "roc_tapping.csv", "roc_keystroke.csv"} <= names
        summary = (tmp_path / "report" / "summary.txt").read_text()
        assert "roc_tapping.csv uses subset TP+Gy" in summary
        assert pd.read_csv(tmp_path / "report" / "roc_tapping.csv").shape[1] == 7

    def test_no_results(self, tmp_path):
        with pytest.raises(ValueError):
            render_report([], {}, tmp_path)

    def test_results_file_round_trip(self, tmp_path, results):
        path = write_results(results, tmp_path / "results.json")
        assert read_results(path) == results

    def test_collect_results(self, score_sets):
        collected = collect_results(score_sets, Split.EVALUATION)
        assert len(collected) == 2 * len(Scenario)
        assert {r.subset for r in collected} == {"TP+Gy", "K"}
        assert all(r.split == "evaluation" for r in collected)
