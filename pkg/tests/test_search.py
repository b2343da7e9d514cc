"""
Tests for the greedy augmentation search and score replay.
"""

from pathlib import Path

import pandas as pd
import pytest

from tyolo.augment.pipeline import SEARCHABLE
from tyolo.augment.search import ReplayTable, greedy_search, trial_id

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TECHNIQUES = [t.value for t in SEARCHABLE]

RECORDED = {
    (): 54.0,
    ("t_mosaic",): 55.4,
    ("r_blur",): 54.4,
    ("r_erasing",): 53.5,
    ("t_mixup",): 54.3,
    ("g_noise",): 53.6,
    ("t_mosaic", "r_blur"): 55.6,
    ("t_mosaic", "r_erasing"): 54.8,
    ("t_mosaic", "t_mixup"): 55.1,
    ("t_mosaic", "g_noise"): 54.3,
    ("t_mosaic", "r_blur", "r_erasing"): 56.0,
    ("t_mosaic", "r_blur", "t_mixup"): 56.1,
    ("t_mosaic", "r_blur", "g_noise"): 55.3,
    ("t_mosaic", "r_blur", "t_mixup", "r_erasing"): 56.1,
    ("t_mosaic", "r_blur", "t_mixup", "g_noise"): 55.1,
}


def recorded_table():
    return ReplayTable({frozenset(k): v for k, v in RECORDED.items()})


class TestTrialIds:
    def test_letter_o_skipped(self):
        assert [trial_id(i) for i in (0, 13, 14)] == ["A", "N", "P"]

    def test_two_letter_ids(self):
        assert trial_id(25) == "AA"


class TestGreedySearch:
    """Forward selection over the recorded table"""

    def test_replay_selects_recorded_best(self):
        report = greedy_search(TECHNIQUES, recorded_table())
        assert set(report.selected) == {"t_mosaic", "r_blur", "t_mixup", "r_erasing"}
        assert report.best_score == 56.1
        assert report.best_trial == "N"
        assert len(report.trials) == 15
        assert not report.aborted

    def test_trial_lineage(self):
        report = greedy_search(TECHNIQUES, recorded_table())
        by_id = {t.trial_id: t for t in report.trials}
        assert by_id["A"].combination == "baseline"
        assert by_id["B"].combination == "A + T. Mosaic"
        assert by_id["G"].combination == "B + Blur"
        assert by_id["L"].combination == "G + T. MixUp"
        assert by_id["N"].combination == "L + Random Erasing"
        assert by_id["P"].combination == "L + Gaussian Noise"

    def test_tie_accepted_and_stops(self):
        scores = {(): 1.0, ("a",): 1.0, ("b",): 0.5}
        report = greedy_search(["a", "b"], lambda combo: scores[tuple(combo)])
        assert report.selected == ("a",)
        assert len(report.trials) == 3

    def test_stops_when_nothing_improves(self):
        report = greedy_search(["a", "b"], lambda combo: 1.0 - 0.1 * len(combo))
        assert report.selected == ()
        assert report.best_trial == "A"
        assert len(report.trials) == 3

    def test_all_techniques_can_be_selected(self):
        report = greedy_search(["a", "b", "c"], lambda combo: float(len(combo)))
        assert set(report.selected) == {"a", "b", "c"}
        assert len(report.trials) == 1 + 3 + 2 + 1

    def test_failing_trial_returns_partial_report(self):
        def score(combo):
            if len(combo) == 2:
                raise RuntimeError("out of memory")
            return float(len(combo))

        report = greedy_search(["a", "b"], score)
        assert report.aborted
        assert "out of memory" in report.error
        assert report.selected == ("a",)
        assert len(report.trials) == 3

    def test_duplicate_techniques_rejected(self):
        with pytest.raises(ValueError):
            greedy_search(["a", "a"], lambda combo: 0.0)

    def test_report_csv(self, tmp_path):
        report = greedy_search(TECHNIQUES, recorded_table())
        frame = pd.read_csv(report.write_csv(tmp_path / "search.csv"), keep_default_na=False)
        assert list(frame.columns) == ["trial_id", "combination", "mAP50_95", "techniques"]
        assert frame.loc[frame.trial_id == "N", "techniques"].item() == "t_mosaic+r_blur+t_mixup+r_erasing"


class TestReplayTable:
    """Loading recorded scores"""

    def test_shipped_table_matches(self):
        table = ReplayTable.load(CONFIGS / "augment_replay.yaml")
        assert table.scores == recorded_table().scores

    def test_csv_round_trip(self, tmp_path):
        report = greedy_search(TECHNIQUES, recorded_table())
        table = ReplayTable.load(report.write_csv(tmp_path / "search.csv"))
        assert table(("r_blur", "t_mosaic")) == 55.6
        assert table(()) == 54.0

    def test_unknown_combination(self):
        with pytest.raises(KeyError):
            recorded_table()(("g_noise", "r_blur"))
