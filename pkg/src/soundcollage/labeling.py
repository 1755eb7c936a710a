"""Naming discovered tasks: representatives, labeler predictions, clarity, class assignment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .discovery import Task, feature_matrix
from .learners.mlp import MlpModel, predict_proba


class PredictionParseError(ValueError):
    pass


class DuplicatePredictionError(ValueError):
    pass


class CoverageError(KeyError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"no predictions for {len(self.missing)} representative(s): {self.missing[:10]}")


@dataclass
class LabelPrediction:
    sample_id: str
    entries: list[tuple[str, float]]

    def __post_init__(self):
        if not self.entries:
            raise ValueError(f"{self.sample_id}: at least one prediction required")
        labels = [lab for lab, _ in self.entries]
        if len(set(labels)) != len(labels):
            raise ValueError(f"{self.sample_id}: duplicate labels")
        self.entries = sorted(((str(lab), float(s)) for lab, s in self.entries), key=lambda e: (-e[1], e[0]))

    @property
    def labels(self) -> set[str]:
        return {lab for lab, _ in self.entries}


@dataclass(frozen=True)
class ClarityInput:
    n0_ij: int
    n1_ij: int
    n0_i: int
    n1_i: int

    def __post_init__(self):
        if self.n0_i < 1 or self.n1_i < 1:
            raise ValueError("class totals must be >= 1")
        if not (0 <= self.n0_ij <= self.n0_i and 0 <= self.n1_ij <= self.n1_i):
            raise ValueError(f"label counts out of range: {self}")


@dataclass
class Representatives:
    class0: list[str]
    class1: list[str]
    short: bool = False


@dataclass
class DiscoveredClass:
    task_id: str
    label: str
    clarity: float
    as_mean: float
    class0_ids: list[str]
    class1_ids: list[str]
    per_label_clarity: dict[str, float] = field(default_factory=dict)


def clarity(c: ClarityInput) -> float:
    """(|n0 - n1| - min(n0, n1)) / max(N0, N1), floored at zero."""
    num = abs(c.n0_ij - c.n1_ij) - min(c.n0_ij, c.n1_ij)
    return max(num / max(c.n0_i, c.n1_i), 0.0)


def select_representatives(task: Task, model: MlpModel, features: Mapping, n_per_class: int = 20) -> Representatives:
    """Most confident members of each side: highest probability for side 1, lowest for side 0."""
    if not task.assignment:
        raise ValueError("task is empty")
    ids = task.ids
    probs = dict(zip(ids, predict_proba(model, feature_matrix(ids, features)).tolist()))
    return representatives_from_probs(task, probs, n_per_class)


def representatives_from_probs(task: Task, probs: Mapping[str, float], n_per_class: int = 20) -> Representatives:
    side1 = sorted(task.members(1), key=lambda i: (-probs[i], i))
    side0 = sorted(task.members(0), key=lambda i: (probs[i], i))
    short = len(side0) < n_per_class or len(side1) < n_per_class
    return Representatives(side0[:n_per_class], side1[:n_per_class], short)


def _parse_line(line: str, lineno: int, path) -> LabelPrediction:
    try:
        rec = json.loads(line)
        sid = rec["sample_id"]
        preds = rec["predictions"]
        if not isinstance(sid, str) or not isinstance(preds, list):
            raise TypeError("sample_id must be a string and predictions a list")
        entries = []
        for p in preds:
            score = float(p["score"])
            if not 0.0 <= score <= 1.0 or math.isnan(score):
                raise ValueError(f"score {score} outside [0, 1]")
            entries.append((str(p["label"]), score))
        return LabelPrediction(sid, entries)
    except (ValueError, KeyError, TypeError) as exc:
        raise PredictionParseError(f"{path}:{lineno}: {exc}") from exc


def ingest_predictions(path, top_k: int = 10) -> dict[str, LabelPrediction]:
    """Read a JSON-lines prediction file, keeping each sample's ``top_k`` best labels."""
    out: dict[str, LabelPrediction] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            pred = _parse_line(line, lineno, path)
            if pred.sample_id in out:
                raise DuplicatePredictionError(f"{path}:{lineno}: duplicate sample id {pred.sample_id!r}")
            pred.entries = pred.entries[:top_k]
            out[pred.sample_id] = pred
    return out


def label_counts(reps: Representatives, predictions: Mapping[str, LabelPrediction]) -> dict[str, ClarityInput]:
    """For each label seen among the representatives, how many on each side carry it."""
    missing = [i for i in reps.class0 + reps.class1 if i not in predictions]
    if missing:
        raise CoverageError(missing)
    n0, n1 = len(reps.class0), len(reps.class1)
    c0, c1 = {}, {}
    for i in reps.class0:
        for lab in predictions[i].labels:
            c0[lab] = c0.get(lab, 0) + 1
    for i in reps.class1:
        for lab in predictions[i].labels:
            c1[lab] = c1.get(lab, 0) + 1
    return {lab: ClarityInput(c0.get(lab, 0), c1.get(lab, 0), n0, n1) for lab in sorted(set(c0) | set(c1))}


def per_label_clarity(reps: Representatives, predictions: Mapping[str, LabelPrediction]) -> dict[str, float]:
    return {lab: clarity(c) for lab, c in label_counts(reps, predictions).items()}


def best_label(table: Mapping[str, float]) -> tuple[str, float] | None:
    """Highest clarity; ties go to the lexicographically smallest label."""
    if not table:
        return None
    lab = min(table, key=lambda k: (-table[k], k))
    return lab, table[lab]


def assign_class(task: Task, reps: Representatives, predictions: Mapping[str, LabelPrediction],
                 clarity_threshold: float = 0.5, as_mean: float = float("nan")) -> DiscoveredClass | None:
    table = per_label_clarity(reps, predictions)
    best = best_label(table)
    if best is None or best[1] < clarity_threshold:
        return None
    return DiscoveredClass(task.task_id, best[0], best[1], as_mean, list(reps.class0), list(reps.class1), table)


def clarity_grid(n: int = 20) -> np.ndarray:
    """Clarity for every (n0_ij, n1_ij) with both class totals equal to ``n``."""
    grid = np.zeros((n + 1, n + 1))
    for a in range(n + 1):
        for b in range(n + 1):
            grid[a, b] = clarity(ClarityInput(a, b, n, n))
    return grid


def write_predictions(preds: Mapping[str, LabelPrediction], path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        for sid in sorted(preds):
            p = preds[sid]
            fh.write(json.dumps({"sample_id": sid,
                                 "predictions": [{"label": lab, "score": s} for lab, s in p.entries]}) + "\n")
