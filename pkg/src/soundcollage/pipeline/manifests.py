"""JSON-lines manifests shared between pipeline stages.

Every manifest is UTF-8 with LF endings, one object per line, keys in a
fixed order and records sorted by id, so reruns are byte-identical. Paths are
stored relative to the manifest's directory.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

COMPONENT_TAGS = ("raw", "v", "b")


class ManifestError(ValueError):
    pass


def _clean(value):
    # JSON has no NaN; keep the file strictly parseable
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        return round(value, 10)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def dumps(record: dict) -> str:
    return json.dumps(_clean(record), ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(records: Iterable[dict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return out


def relpath(target, base_dir) -> str:
    return Path(os.path.relpath(Path(target), Path(base_dir))).as_posix()


@dataclass
class ManifestEntry:
    id: str
    path: str  # relative to the manifest directory
    origin_id: str
    component: str = "raw"
    segment_index: int = 0
    duration_s: float = 0.0
    source_label: str | None = None

    def __post_init__(self):
        if self.component not in COMPONENT_TAGS:
            raise ManifestError(f"{self.id}: component must be one of {COMPONENT_TAGS}, got {self.component!r}")

    def to_record(self) -> dict:
        rec = {"id": self.id, "path": self.path, "origin_id": self.origin_id, "component": self.component,
               "segment_index": self.segment_index, "duration_s": self.duration_s}
        if self.source_label is not None:
            rec["source_label"] = self.source_label
        return rec


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path = Path(".")

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.id)
        dupes = sorted(i for i, n in Counter(e.id for e in self.entries).items() if n > 1)
        if dupes:
            raise ManifestError(f"duplicate manifest ids: {dupes[:10]}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def by_id(self) -> dict[str, ManifestEntry]:
        return {e.id: e for e in self.entries}

    def abspath(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def filter_component(self, component: str) -> "DatasetManifest":
        if component == "all":
            return self
        return DatasetManifest([e for e in self.entries if e.component == component], self.root)

    def write(self, path) -> None:
        path = Path(path)
        missing = [e.id for e in self.entries if not (path.parent / e.path).exists()]
        if missing:
            raise ManifestError(f"manifest paths missing on disk for: {missing[:10]}")
        write_jsonl((e.to_record() for e in self.entries), path)

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        for rec in read_jsonl(path):
            try:
                entries.append(ManifestEntry(
                    id=str(rec["id"]), path=str(rec["path"]), origin_id=str(rec["origin_id"]),
                    component=rec.get("component", "raw"), segment_index=int(rec.get("segment_index", 0)),
                    duration_s=float(rec.get("duration_s", 0.0)), source_label=rec.get("source_label")))
            except KeyError as exc:
                raise ManifestError(f"{path}: record missing key {exc}") from exc
        return cls(entries, path.parent)


# --- stage manifests ----------------------------------------------------------

def task_record(task, est, strategy: str, seed: int) -> dict:
    return {"task_id": task.task_id, "as_mean": est.mean, "as_std": est.std, "n_pairs": est.n_pairs,
            "class0_ids": task.members(0), "class1_ids": task.members(1), "strategy": strategy, "seed": seed}


def read_tasks(path):
    """Tasks from a task manifest, as ``(Task, record)`` pairs in file order."""
    from ..discovery import Task

    out = []
    for rec in read_jsonl(path):
        assignment = {i: 0 for i in rec["class0_ids"]}
        overlap = set(assignment) & set(rec["class1_ids"])
        if overlap:
            raise ManifestError(f"{path}: task {rec['task_id']} puts ids on both sides: {sorted(overlap)[:5]}")
        assignment.update({i: 1 for i in rec["class1_ids"]})
        out.append((Task(assignment, rec["task_id"]), rec))
    return out


def class_record(dc) -> dict:
    return {"task_id": dc.task_id, "label": dc.label, "clarity": dc.clarity, "as_mean": dc.as_mean,
            "class0_ids": list(dc.class0_ids), "class1_ids": list(dc.class1_ids),
            "per_label_clarity": {k: dc.per_label_clarity[k] for k in sorted(dc.per_label_clarity)}}


def read_classes(path):
    from ..labeling import DiscoveredClass

    out = []
    for rec in read_jsonl(path):
        out.append(DiscoveredClass(rec["task_id"], rec["label"], float(rec["clarity"]),
                                   float("nan") if rec.get("as_mean") is None else float(rec["as_mean"]),
                                   list(rec["class0_ids"]), list(rec["class1_ids"]),
                                   dict(rec.get("per_label_clarity", {}))))
    return out
