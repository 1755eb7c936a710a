"""Pipeline configuration: a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Every key must be one of the
fields of :class:`PipelineConfig`; unknown keys are rejected so a typo never
silently falls back to a default. ``none`` means "use the built-in heuristic"
where a field allows it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from ..audio_io import CANONICAL_RATE
from ..discovery import STRATEGIES, TrainParams
from ..segmentation import SegmentationParams
from ..separation import SeparationParams

COMPONENTS = ("all", "v", "b")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # audio and features
    sample_rate: int = CANONICAL_RATE
    duration_s: float = 10.0
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 64
    time_steps: int = 64
    # separation
    separate: bool = True
    sep_k: int = 100
    sep_min_gap: int = 100
    sep_min_sim: float = 0.0
    # segmentation (penalty none -> median frame cost heuristic)
    cpd_penalty: float | None = None
    cpd_penalty_scale: float = 1.0
    cpd_min_segment_len: int = 50
    cpd_max_changepoints: int = 10
    min_segment_s: float = 0.5
    # discovery
    strategy: str = "embedding-bipartition"
    n_candidates: int = 16
    n_pairs: int = 4
    train_frac: float = 0.8
    as_threshold: float = 0.85
    hidden: int = 64
    epochs: int = 30
    lr: float = 0.001
    batch: int = 16
    hc_rounds: int = 8
    hc_flip_frac: float = 0.05
    max_samples: int = 10000
    component: str = "all"
    # labeling
    clarity_threshold: float = 0.5
    n_reps: int = 20
    top_k: int = 10
    labeler_cmd: str = "builtin"
    # downstream
    n_trees: int = 10
    folds: int = 5
    samples_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        validate(self)

    def separation_params(self) -> SeparationParams:
        return SeparationParams(k=self.sep_k, min_gap=self.sep_min_gap, min_sim=self.sep_min_sim,
                                window_ms=self.window_ms, hop_ms=self.hop_ms)

    def segmentation_params(self) -> SegmentationParams:
        return SegmentationParams(penalty=self.cpd_penalty, penalty_scale=self.cpd_penalty_scale,
                                  min_segment_len=self.cpd_min_segment_len,
                                  max_changepoints=self.cpd_max_changepoints, min_seconds=self.min_segment_s)

    def train_params(self) -> TrainParams:
        return TrainParams(hidden=self.hidden, epochs=self.epochs, lr=self.lr, batch=self.batch)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


# (low, high, inclusive-low) per numeric field; None bound means open
_RANGES = {
    "sample_rate": (1, None), "duration_s": (0.0, None, False), "window_ms": (0.0, None, False),
    "hop_ms": (0.0, None, False), "n_mels": (1, None), "time_steps": (1, None),
    "sep_k": (1, None), "sep_min_gap": (0, None), "sep_min_sim": (-1.0, 1.0),
    "cpd_penalty": (0.0, None), "cpd_penalty_scale": (0.0, None), "cpd_min_segment_len": (1, None),
    "cpd_max_changepoints": (0, None), "min_segment_s": (0.0, None),
    "n_candidates": (1, None), "n_pairs": (1, None), "train_frac": (0.0, 1.0, False),
    "as_threshold": (0.5, None, False), "hidden": (1, None), "epochs": (1, None),
    "lr": (0.0, None, False), "batch": (1, None), "hc_rounds": (0, None), "hc_flip_frac": (0.0, 1.0),
    "max_samples": (2, None), "clarity_threshold": (0.0, 1.0), "n_reps": (1, None), "top_k": (1, None),
    "n_trees": (1, None), "folds": (2, None), "samples_per_class": (1, None),
}


def validate(cfg: PipelineConfig) -> None:
    for name, spec in _RANGES.items():
        value = getattr(cfg, name)
        if value is None:
            continue
        lo, hi = spec[0], spec[1]
        inclusive = spec[2] if len(spec) > 2 else True
        if lo is not None and (value < lo if inclusive else value <= lo):
            raise ConfigError(f"{name} = {value}: must be {'>=' if inclusive else '>'} {lo}")
        if hi is not None and value > hi:
            raise ConfigError(f"{name} = {value}: must be <= {hi}")
    if cfg.train_frac >= 1.0:
        raise ConfigError("train_frac must be < 1 so a held-out split exists")
    if cfg.strategy not in STRATEGIES:
        raise ConfigError(f"strategy = {cfg.strategy!r}: choose from {', '.join(STRATEGIES)}")
    if cfg.component not in COMPONENTS:
        raise ConfigError(f"component = {cfg.component!r}: choose from {', '.join(COMPONENTS)}")
    if not cfg.labeler_cmd.strip():
        raise ConfigError("labeler_cmd must not be empty (use 'builtin' for the oracle labeler)")


def _field_types() -> dict[str, type]:
    defaults = PipelineConfig.__dataclass_fields__
    out = {}
    for f in fields(PipelineConfig):
        default = defaults[f.name].default
        out[f.name] = float if f.name == "cpd_penalty" else type(default)
    return out


def _coerce(name: str, raw: str, kind: type):
    text = raw.strip()
    if name == "cpd_penalty" and text.lower() in ("none", "auto"):
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    types = _field_types()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, raw, types[key])
    return PipelineConfig(**values)


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(PipelineConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
