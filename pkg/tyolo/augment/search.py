"""
Greedy forward selection of augmentation techniques.

Round 0 scores the baseline. Every later round scores the current best combination plus each
remaining technique; the round's best trial is accepted when it scores at least as well as the
best so far. A tie is accepted but ends the search, and a lower score ends it without change.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from string import ascii_uppercase
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
import structlog
import yaml

from tyolo.augment.pipeline import TECHNIQUE_LABELS, Technique

logger = structlog.get_logger(__name__)

TIE_TOLERANCE = 1e-9
TRIAL_LETTERS = [c for c in ascii_uppercase if c != "O"]
REPORT_COLUMNS = ["trial_id", "combination", "mAP50_95", "techniques"]

ScoreFn = Callable[[Tuple[str, ...]], float]


def trial_id(index: int) -> str:
    """A, B, ..., N, P, ..., Z, AA, AB, ... (the letter O is never used)"""
    n = len(TRIAL_LETTERS)
    if index < n:
        return TRIAL_LETTERS[index]
    return trial_id(index // n - 1) + TRIAL_LETTERS[index % n]


def technique_label(name: str) -> str:
    try:
        return TECHNIQUE_LABELS[Technique(name)]
    except ValueError:
        return name


@dataclass
class Trial:
    trial_id: str
    techniques: Tuple[str, ...]
    score: float
    base_id: Optional[str] = None
    added: Optional[str] = None
    round: int = 0

    @property
    def combination(self) -> str:
        if self.base_id is None:
            return "baseline"
        return f"{self.base_id} + {technique_label(self.added or '')}"


@dataclass
class SearchReport:
    trials: List[Trial] = field(default_factory=list)
    selected: Tuple[str, ...] = ()
    best_score: Optional[float] = None
    best_trial: Optional[str] = None
    aborted: bool = False
    error: Optional[str] = None

    def ranked(self) -> List[Trial]:
        return sorted(self.trials, key=lambda t: -t.score)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "trial_id": t.trial_id,
                "combination": t.combination,
                "mAP50_95": t.score,
                "techniques": "+".join(t.techniques),
            }
            for t in self.trials
        ]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    def summary(self) -> Dict[str, object]:
        return {
            "selected": list(self.selected),
            "best_score": self.best_score,
            "best_trial": self.best_trial,
            "trials": len(self.trials),
            "aborted": self.aborted,
            "error": self.error,
        }


def greedy_search(techniques: Sequence[str], train_and_eval: ScoreFn) -> SearchReport:
    """
    Score technique subsets with train_and_eval and grow the best one greedily.

    A failing callback does not raise: the report collected so far comes back with
    aborted=True and the error message.
    """
    if len(set(techniques)) != len(techniques):
        raise ValueError(f"techniques must be distinct, got {list(techniques)}")
    report = SearchReport()

    def run(combo: Tuple[str, ...], base: Optional[Trial], added: Optional[str], rnd: int) -> Trial:
        score = float(train_and_eval(combo))
        trial = Trial(trial_id(len(report.trials)), combo, score, base.trial_id if base else None, added, rnd)
        report.trials.append(trial)
        logger.info("search trial", trial=trial.trial_id, combination=trial.combination, score=score)
        return trial

    best: Optional[Trial] = None
    try:
        best = run((), None, None, 0)
        remaining = list(techniques)
        rnd = 0
        while remaining:
            rnd += 1
            round_trials = [run(best.techniques + (tech,), best, tech, rnd) for tech in remaining]
            top = max(round_trials, key=lambda t: t.score)
            if top.score < best.score - TIE_TOLERANCE:
                break
            tie = abs(top.score - best.score) <= TIE_TOLERANCE
            best = top
            remaining.remove(top.added)  # type: ignore[arg-type]
            if tie:
                break
    except Exception as exc:
        logger.error("search aborted", error=str(exc), trials=len(report.trials))
        report.aborted = True
        report.error = f"{type(exc).__name__}: {exc}"
        if best is None:
            return report

    report.selected = best.techniques
    report.best_score = best.score
    report.best_trial = best.trial_id
    return report


class ReplayTable:
    """Recorded scores keyed by technique set, usable as a greedy_search callback"""

    def __init__(self, scores: Dict[FrozenSet[str], float]):
        self.scores = dict(scores)

    def __call__(self, combo: Tuple[str, ...]) -> float:
        key = frozenset(combo)
        if key not in self.scores:
            raise KeyError(f"no recorded score for {sorted(key) or 'baseline'}")
        return self.scores[key]

    @classmethod
    def from_records(cls, records: Iterable[Dict[str, object]]) -> "ReplayTable":
        scores = {}
        for record in records:
            techniques = record.get("techniques") or []
            if isinstance(techniques, str):
                techniques = [t for t in techniques.replace("+", " ").split() if t]
            scores[frozenset(str(t) for t in techniques)] = float(record.get("score", record.get("mAP50_95")))  # type: ignore
        return cls(scores)

    @classmethod
    def load(cls, path: Path) -> "ReplayTable":
        path = Path(path)
        if path.suffix == ".csv":
            frame = pd.read_csv(path, keep_default_na=False)
            return cls.from_records(frame.to_dict(orient="records"))
        if path.suffix == ".json":
            return cls.from_records(json.loads(path.read_text()))
        return cls.from_records(yaml.safe_load(path.read_text()))
