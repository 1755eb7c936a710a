"""The five pipeline stages. Each reads only files written by earlier stages.

Output directories:

- synth:      ``<id>.wav``, ``manifest.jsonl``, ``truth.jsonl``
- preprocess: ``segments/*.wav``, ``grids/*.grid`` + ``grids/index.jsonl``,
              ``boundaries.jsonl``, ``manifest.jsonl``, ``failures.jsonl``
- discover:   ``tasks.jsonl``, ``discover_summary.json``, ``as_scores.png``
- label:      ``reps/*.wav``, ``predictions.jsonl``, ``classes.jsonl``,
              ``clarity_tables.jsonl``, ``failures.jsonl``, ``clarity.png``
- downstream: ``metrics.jsonl``, ``metrics.png``

Each of discover/label/downstream also writes ``stage.json`` naming its
inputs (relative paths), so the next stage can find them.
"""

from __future__ import annotations

import json
import logging
import shlex
import shutil
import subprocess
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio_io import AudioClip, WavError, quantize_pcm16, read_wav, resample, write_wav
from ..discovery import Task, discover_tasks, train_task_model, feature_matrix
from ..features import clip_to_grid, load_grid, log_mel, save_grid, write_grid_index
from ..labeling import (CoverageError, PredictionParseError, DuplicatePredictionError, assign_class,
                        ingest_predictions, per_label_clarity, select_representatives)
from ..learners.forest import cross_validate, stratified_folds
from ..segmentation import detect_changepoints, split_clip
from ..separation import separate
from ..synth import KINDS, SynthSpec, default_label, gen_clip, gen_planted_dataset, oracle_labeler
from .config import PipelineConfig
from .manifests import (DatasetManifest, ManifestEntry, class_record, read_classes, read_jsonl,
                        read_tasks, relpath, task_record, write_jsonl)

log = logging.getLogger(__name__)


class FatalError(RuntimeError):
    """A precondition failure that stops the stage (exit code 2)."""


class SpecError(FatalError):
    pass


@dataclass
class StageResult:
    outputs: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def _write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")


def _read_stage(dir_path, key: str, override=None) -> Path:
    if override is not None:
        return Path(override)
    stage_file = Path(dir_path) / "stage.json"
    if not stage_file.exists():
        raise FatalError(f"{stage_file} not found; pass the {key} directory explicitly")
    info = json.loads(stage_file.read_text(encoding="utf-8"))
    if key not in info:
        raise FatalError(f"{stage_file} does not record a {key!r} directory")
    return (Path(dir_path) / info[key]).resolve()


# --- synth ------------------------------------------------------------------

def _spec_from_dict(d: dict, where: str, default_seed: int, rate: int) -> SynthSpec:
    if not isinstance(d, dict):
        raise SpecError(f"{where}: expected an object")
    kind = d.get("kind")
    if kind not in KINDS:
        raise SpecError(f"{where}kind: expected one of {', '.join(KINDS)}, got {kind!r}")
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise SpecError(f"{where}params: expected an object")
    truth = {"label": d["label"]} if "label" in d else {}
    spec = SynthSpec(kind, dict(params), int(d.get("seed", default_seed)), int(d.get("sample_rate", rate)), truth)
    try:
        # render once up front so a bad parameter is reported with its key path
        gen_clip(spec)
    except (ValueError, TypeError) as exc:
        raise SpecError(f"{where}{exc}") from exc
    return spec


def load_synth_spec(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise SpecError(f"{path}: top level must be an object")
    kind = raw.get("kind", "planted-dataset")
    seed = raw.get("seed", 0)
    rate = raw.get("sample_rate", 16000)
    if not isinstance(seed, int) or not isinstance(rate, int) or rate <= 0:
        raise SpecError("seed/sample_rate: must be integers (sample_rate > 0)")
    if kind == "planted-dataset":
        n = raw.get("n_per_class")
        if not isinstance(n, int) or n < 1:
            raise SpecError("n_per_class: must be a positive integer")
        classes = raw.get("classes")
        if not isinstance(classes, list) or len(classes) < 2:
            raise SpecError("classes: need a list of at least two templates")
        templates = [_spec_from_dict(c, f"classes[{i}].", seed, rate) for i, c in enumerate(classes)]
        return {"kind": kind, "seed": seed, "n_per_class": n, "templates": templates}
    return {"kind": "clip", "spec": _spec_from_dict(raw, "", seed, rate), "id": str(raw.get("id", f"{kind}_{seed}"))}


def cmd_synth(spec_file, out_dir) -> StageResult:
    spec = load_synth_spec(spec_file)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries, truth = [], []
    if spec["kind"] == "planted-dataset":
        clips, task, labels = gen_planted_dataset(spec["n_per_class"], spec["templates"], spec["seed"])
    else:
        clip = gen_clip(spec["spec"], spec["id"])
        clips, task, labels = [clip], Task({clip.id: 0}, "single"), {clip.id: default_label(spec["spec"])}
        stems = clip.meta.get("stems")
        if stems:
            (out / "stems").mkdir(exist_ok=True)
            for name, samples in sorted(stems.items()):
                write_wav(AudioClip(np.clip(samples, -1, 1), clip.sample_rate, f"{clip.id}.{name}"),
                          out / "stems" / f"{clip.id}.{name}.wav")
    for clip in clips:
        write_wav(clip, out / f"{clip.id}.wav")
        entries.append(ManifestEntry(clip.id, f"{clip.id}.wav", clip.id, "raw", 0,
                                     round(clip.duration_seconds, 6), labels[clip.id]))
        truth.append({"id": clip.id, "label": labels[clip.id], "side": task.assignment[clip.id]})
    DatasetManifest(entries, out).write(out / "manifest.jsonl")
    write_jsonl(sorted(truth, key=lambda r: r["id"]), out / "truth.jsonl")
    log.info("synth: wrote %d clips to %s", len(clips), out)
    return StageResult({"manifest": out / "manifest.jsonl", "n_clips": len(clips)})


# --- preprocess ---------------------------------------------------------------

def _source_labels(in_dir: Path) -> dict[str, str]:
    path = in_dir / "manifest.jsonl"
    if not path.exists():
        return {}
    return {r["id"]: r["source_label"] for r in read_jsonl(path) if r.get("source_label") is not None}


def _components(clip: AudioClip, cfg: PipelineConfig) -> list[tuple[str, AudioClip]]:
    if not cfg.separate:
        return [("raw", clip.with_samples(clip.samples, clip.id + ".raw"))]
    fore, back = separate(clip, cfg.separation_params())
    return [("v", fore), ("b", back)]


def preprocess_clip(clip: AudioClip, cfg: PipelineConfig):
    """Separate and segment one clip.

    Returns the kept ``(component tag, Segment)`` pairs and one boundary
    record per component.
    """
    seg_params = cfg.segmentation_params()
    kept, records = [], []
    for tag, comp in _components(clip, cfg):
        frames = log_mel(comp, cfg.n_mels, cfg.window_ms, cfg.hop_ms)
        bset = detect_changepoints(frames, seg_params.penalty, seg_params.min_segment_len,
                                   seg_params.max_changepoints, seg_params.bandwidth, seg_params.penalty_scale)
        if bset.warning:
            log.warning("%s: %s", comp.id, bset.warning)
        segs = split_clip(comp, bset, cfg.hop_ms, seg_params.min_seconds)
        rec = {"id": comp.id, "boundaries_frames": list(bset.boundaries), "kept_segments": []}
        for s in segs:
            if not s.kept:
                continue
            rec["kept_segments"].append({"suffix": f".s{s.index}", "start_s": round(s.start / comp.sample_rate, 6),
                                         "end_s": round(s.end / comp.sample_rate, 6)})
            kept.append((tag, s))
        records.append(rec)
    return kept, records


def cmd_preprocess(in_dir, out_dir, cfg: PipelineConfig = PipelineConfig()) -> StageResult:
    in_dir, out = Path(in_dir), Path(out_dir)
    wavs = sorted(in_dir.glob("*.wav")) if in_dir.is_dir() else []
    if not wavs:
        raise FatalError(f"no WAV files in {in_dir}")
    labels = _source_labels(in_dir)
    seg_dir, grid_dir = out / "segments", out / "grids"
    seg_dir.mkdir(parents=True, exist_ok=True)
    grid_dir.mkdir(parents=True, exist_ok=True)
    entries, boundaries, grid_index, failures = [], [], [], []
    n_ok = 0
    for path in wavs:
        origin = path.stem
        try:
            clip = read_wav(path, origin)
            if clip.sample_rate != cfg.sample_rate:
                clip = resample(clip, cfg.sample_rate)
            kept, records = preprocess_clip(clip, cfg)
        except (WavError, ValueError, OSError) as exc:
            log.warning("preprocess: skipping %s: %s", path.name, exc)
            failures.append({"id": origin, "stage": "preprocess", "error": f"{type(exc).__name__}: {exc}"})
            continue
        n_ok += 1
        boundaries += records
        for tag, s in kept:
            seg = s.clip
            # grids are computed from the quantized audio so they match the WAV on disk
            q = AudioClip(quantize_pcm16(seg.samples) / 32768.0, seg.sample_rate, seg.id)
            write_wav(q, seg_dir / f"{seg.id}.wav")
            grid = clip_to_grid(q, cfg.duration_s, cfg.n_mels, cfg.time_steps, cfg.window_ms, cfg.hop_ms)
            save_grid(grid, grid_dir / f"{seg.id}.grid")
            grid_index.append((seg.id, f"{seg.id}.grid", grid))
            entries.append(ManifestEntry(seg.id, f"segments/{seg.id}.wav", origin, tag, s.index,
                                         round(seg.duration_seconds, 6), labels.get(origin)))
    if n_ok == 0:
        write_jsonl(failures, out / "failures.jsonl")
        raise FatalError(f"no usable clips in {in_dir}: {len(failures)} failed")
    grid_index.sort(key=lambda e: e[0])
    write_grid_index(grid_index, grid_dir / "index.jsonl")
    write_jsonl(sorted(boundaries, key=lambda r: r["id"]), out / "boundaries.jsonl")
    write_jsonl(failures, out / "failures.jsonl")
    manifest = DatasetManifest(entries, out)
    manifest.write(out / "manifest.jsonl")
    log.info("preprocess: %d clips -> %d segments (%d failed)", n_ok, len(entries), len(failures))
    return StageResult({"manifest": out / "manifest.jsonl", "n_entries": len(entries)}, failures)


# --- discover -----------------------------------------------------------------

def load_features(dataset_dir: Path, ids) -> dict:
    """Grids for ``ids`` via the grid index; missing grids are fatal."""
    index_path = dataset_dir / "grids" / "index.jsonl"
    index = {r["id"]: r["path"] for r in read_jsonl(index_path)} if index_path.exists() else {}
    missing = [i for i in ids if i not in index or not (index_path.parent / index[i]).exists()]
    if missing:
        raise FatalError(f"missing grid files for {len(missing)} id(s): {missing[:20]}")
    return {i: load_grid(index_path.parent / index[i]) for i in ids}


def subsample_ids(ids: list[str], max_samples: int, seed: int) -> list[str]:
    if len(ids) <= max_samples:
        return list(ids)
    rng = np.random.default_rng([seed, 7])
    pick = np.sort(rng.choice(len(ids), size=max_samples, replace=False))
    return [ids[k] for k in pick]


def cmd_discover(in_dir, out_dir, cfg: PipelineConfig = PipelineConfig(), figures: bool = True) -> StageResult:
    in_dir, out = Path(in_dir), Path(out_dir)
    man_path = in_dir / "manifest.jsonl"
    if not man_path.exists():
        raise FatalError(f"{man_path} not found")
    manifest = DatasetManifest.read(man_path).filter_component(cfg.component)
    ids = subsample_ids(manifest.ids, cfg.max_samples, cfg.seed)
    log.info("discover: using %d of %d ids (component=%s)", len(ids), len(manifest), cfg.component)
    if len(ids) < 4:
        raise FatalError(f"need at least 4 samples for discovery, got {len(ids)}")
    features = load_features(in_dir, ids)
    found = discover_tasks(features, cfg.strategy, cfg.n_candidates, cfg.as_threshold, cfg.seed, cfg.n_pairs,
                           cfg.train_frac, cfg.train_params(), cfg.hc_rounds, cfg.hc_flip_frac)
    out.mkdir(parents=True, exist_ok=True)
    records = [task_record(t, e, cfg.strategy, cfg.seed) for t, e in found]
    write_jsonl(records, out / "tasks.jsonl")
    _write_json({"n_manifest": len(manifest), "n_used": len(ids), "component": cfg.component,
                 "strategy": cfg.strategy, "n_tasks": len(records), "ids_used": ids}, out / "discover_summary.json")
    _write_json({"stage": "discover", "dataset": relpath(in_dir.resolve(), out.resolve())}, out / "stage.json")
    if figures:
        from ..plotting import plot_as_scores
        plot_as_scores(records, out / "as_scores.png", cfg.as_threshold)
    log.info("discover: %d task(s) at AS >= %g", len(records), cfg.as_threshold)
    return StageResult({"tasks": out / "tasks.jsonl", "n_tasks": len(records), "n_used": len(ids)})


# --- label --------------------------------------------------------------------

def _task_seeds(seed: int, task_id: str) -> tuple[int, int]:
    s = np.random.SeedSequence([seed, 2, zlib.crc32(task_id.encode("utf-8"))]).generate_state(2)
    return int(s[0]), int(s[1])


def run_labeler(cmd: str, wav_dir: Path, out_path: Path) -> None:
    if cmd == "builtin":
        skipped = oracle_labeler(wav_dir, out_path)
        if skipped:
            log.warning("oracle labeler skipped %d unreadable file(s)", skipped)
        return
    argv = shlex.split(cmd) + [str(wav_dir), str(out_path)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise FatalError(f"labeler command failed to start: {exc}") from exc
    if proc.returncode != 0:
        raise FatalError(f"labeler exited with code {proc.returncode}\nstdout:\n{proc.stdout}\nstderr:\n{proc.stderr}")
    if not out_path.exists():
        raise FatalError(f"labeler exited 0 but wrote no {out_path}")


def cmd_label(in_dir, out_dir, cfg: PipelineConfig = PipelineConfig(), dataset_dir=None, predictions=None,
              figures: bool = True) -> StageResult:
    in_dir, out = Path(in_dir), Path(out_dir)
    tasks_path = in_dir / "tasks.jsonl"
    if not tasks_path.exists():
        raise FatalError(f"{tasks_path} not found")
    dataset_dir = _read_stage(in_dir, "dataset", dataset_dir)
    tasks = read_tasks(tasks_path)
    manifest = DatasetManifest.read(dataset_dir / "manifest.jsonl")
    by_id = manifest.by_id()
    all_ids = sorted({i for t, _ in tasks for i in t.ids})
    unknown = [i for i in all_ids if i not in by_id]
    if unknown:
        raise FatalError(f"task ids not in the dataset manifest: {unknown[:20]}")
    features = load_features(dataset_dir, all_ids)

    out.mkdir(parents=True, exist_ok=True)
    reps_dir = out / "reps"
    if reps_dir.exists():
        shutil.rmtree(reps_dir)
    reps_dir.mkdir()
    reps = {}
    for task, rec in tasks:
        ids = task.ids
        init_seed, order_seed = _task_seeds(cfg.seed, task.task_id)
        model = train_task_model(feature_matrix(ids, features), task.labels(ids), init_seed, order_seed,
                                 cfg.train_params())
        reps[task.task_id] = select_representatives(task, model, features, cfg.n_reps)
        if reps[task.task_id].short:
            log.warning("task %s: fewer than %d representatives on a side", task.task_id, cfg.n_reps)
    for rid in sorted({i for r in reps.values() for i in r.class0 + r.class1}):
        shutil.copyfile(manifest.abspath(by_id[rid]), reps_dir / f"{rid}.wav")

    if predictions is not None:
        pred_path = Path(predictions)
    else:
        pred_path = out / "predictions.jsonl"
        if tasks:
            run_labeler(cfg.labeler_cmd, reps_dir, pred_path)
        else:
            write_jsonl([], pred_path)
    try:
        preds = ingest_predictions(pred_path, cfg.top_k)
    except (OSError, PredictionParseError, DuplicatePredictionError) as exc:
        raise FatalError(f"cannot ingest predictions: {exc}") from exc

    classes, tables, failures = [], [], []
    for task, rec in tasks:
        r = reps[task.task_id]
        table = {"task_id": task.task_id, "n0": len(r.class0), "n1": len(r.class1)}
        try:
            as_mean = rec.get("as_mean")
            dc = assign_class(task, r, preds, cfg.clarity_threshold,
                              float("nan") if as_mean is None else float(as_mean))
        except CoverageError as exc:
            failures.append({"task_id": task.task_id, "reason": "coverage", "missing": exc.missing})
            tables.append({**table, "status": "skipped", "per_label_clarity": {}})
            continue
        plc = per_label_clarity(r, preds)
        status = "assigned" if dc is not None else "below_threshold"
        tables.append({**table, "status": status, "per_label_clarity": {k: plc[k] for k in sorted(plc)}})
        if dc is not None:
            classes.append(dc)
    write_jsonl([class_record(c) for c in classes], out / "classes.jsonl")
    write_jsonl(tables, out / "clarity_tables.jsonl")
    write_jsonl(failures, out / "failures.jsonl")
    _write_json({"stage": "label", "dataset": relpath(dataset_dir, out.resolve()),
                 "tasks": relpath(in_dir.resolve(), out.resolve())}, out / "stage.json")
    if figures:
        from ..plotting import plot_clarity
        plot_clarity(tables, out / "clarity.png")
    log.info("label: %d class(es) from %d task(s), %d skipped", len(classes), len(tasks), len(failures))
    return StageResult({"classes": out / "classes.jsonl", "n_classes": len(classes)}, failures)


# --- downstream ---------------------------------------------------------------

def _cap(ids: list[str], n: int, rng: np.random.Generator) -> list[str]:
    if len(ids) <= n:
        return list(ids)
    return [ids[k] for k in np.sort(rng.choice(len(ids), size=n, replace=False))]


def cmd_downstream(in_dir, out_dir, cfg: PipelineConfig = PipelineConfig(), permute_labels: bool = False,
                   tasks_dir=None, dataset_dir=None, figures: bool = True) -> StageResult:
    in_dir, out = Path(in_dir), Path(out_dir)
    classes_path = in_dir / "classes.jsonl"
    if not classes_path.exists():
        raise FatalError(f"{classes_path} not found")
    classes = read_classes(classes_path)
    if not classes:
        raise FatalError("no discovered classes to evaluate")
    best = min(classes, key=lambda c: (-c.clarity, c.task_id))
    dataset_dir = _read_stage(in_dir, "dataset", dataset_dir)
    tasks_dir = _read_stage(in_dir, "tasks", tasks_dir)
    sides = (list(best.class0_ids), list(best.class1_ids))
    tasks_path = tasks_dir / "tasks.jsonl"
    if tasks_path.exists():
        for task, _ in read_tasks(tasks_path):
            if task.task_id == best.task_id:
                sides = (task.members(0), task.members(1))
                break
    rng = np.random.default_rng([cfg.seed, 3])
    side_ids = [_cap(sorted(s), cfg.samples_per_class, rng) for s in sides]
    ids = side_ids[0] + side_ids[1]
    y = np.array([0] * len(side_ids[0]) + [1] * len(side_ids[1]))
    if len(ids) < 2 * cfg.folds:
        raise FatalError(f"need at least {2 * cfg.folds} samples for {cfg.folds}-fold CV, got {len(ids)}")
    if permute_labels:
        y = y[np.random.default_rng([cfg.seed, 4]).permutation(len(y))]
    features = load_features(dataset_dir, ids)
    x = feature_matrix(ids, features)
    assign = stratified_folds(y, cfg.folds, cfg.seed)
    folds = cross_validate(x, y, cfg.folds, cfg.n_trees, cfg.seed)
    records = []
    for k, m in enumerate(folds):
        n_test = int(np.sum(assign == k))
        records.append({"fold": k, "n_train": len(y) - n_test, "n_test": n_test, **m.as_dict()})
    agg = {"fold": "aggregate", "task_id": best.task_id, "label": best.label, "n_samples": len(y),
           "permuted": permute_labels}
    for key in ("accuracy", "precision", "recall", "f1"):
        vals = np.array([r[key] for r in records])
        agg[key] = float(vals.mean())
        agg[key + "_std"] = float(vals.std())
    records.append(agg)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(records, out / "metrics.jsonl")
    if figures:
        from ..plotting import plot_metrics
        plot_metrics(records[:-1], out / "metrics.png")
    log.info("downstream: %s accuracy %.3f +- %.3f", best.label, agg["accuracy"], agg["accuracy_std"])
    return StageResult({"metrics": out / "metrics.jsonl", "aggregate": agg})


__all__ = ["FatalError", "SpecError", "StageResult", "cmd_synth", "cmd_preprocess", "cmd_discover", "cmd_label",
           "cmd_downstream", "load_synth_spec", "preprocess_clip", "subsample_ids"]
