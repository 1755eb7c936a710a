"""End-to-end orchestration: config, manifests, stages and the CLI."""

from .config import ConfigError, PipelineConfig, format_config, load_config, parse_config
from .manifests import DatasetManifest, ManifestEntry, ManifestError, read_jsonl, write_jsonl
from .stages import (FatalError, SpecError, StageResult, cmd_discover, cmd_downstream, cmd_label,
                     cmd_preprocess, cmd_synth)

__all__ = [
    "ConfigError", "PipelineConfig", "format_config", "load_config", "parse_config",
    "DatasetManifest", "ManifestEntry", "ManifestError", "read_jsonl", "write_jsonl",
    "FatalError", "SpecError", "StageResult",
    "cmd_synth", "cmd_preprocess", "cmd_discover", "cmd_label", "cmd_downstream",
]
