"""``soundcollage`` command line.

Exit codes: 0 success (possibly with empty results), 1 completed with
per-item failures recorded, 2 fatal precondition failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .manifests import ManifestError
from .stages import FatalError, cmd_discover, cmd_downstream, cmd_label, cmd_preprocess, cmd_synth

log = logging.getLogger("soundcollage")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soundcollage", description="Discover labeled sound classes in audio.")
    p.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = p.add_subparsers(dest="command", required=True)

    def stage(name, help_text, needs_in=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        if needs_in:
            sp.add_argument("--in", dest="in_dir", required=True, help="input directory")
        sp.add_argument("--out", dest="out_dir", required=True, help="output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip PNG report figures")
        return sp

    sp = stage("synth", "render a synthetic dataset from a JSON spec", needs_in=False)
    sp.add_argument("--spec", required=True, help="synth spec (JSON)")

    stage("preprocess", "separate, segment and featurize a directory of WAVs")

    sp = stage("discover", "find high-agreement binary tasks")
    sp.add_argument("--component", choices=("all", "v", "b"))
    sp.add_argument("--strategy", choices=("embedding-bipartition", "as-hillclimb"))
    sp.add_argument("--max-samples", type=int)

    sp = stage("label", "name discovered tasks with a labeler")
    sp.add_argument("--dataset", help="preprocess output directory (default: recorded by discover)")
    sp.add_argument("--predictions", help="use this prediction file instead of running the labeler")
    sp.add_argument("--labeler-cmd", help="override the config labeler_cmd")

    sp = stage("downstream", "cross-validate a forest on the clearest discovered class")
    sp.add_argument("--dataset", help="preprocess output directory")
    sp.add_argument("--tasks", help="discover output directory")
    sp.add_argument("--permute-labels", action="store_true", help="shuffle labels before CV (sanity check)")
    return p


def _config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    for arg, key in (("component", "component"), ("strategy", "strategy"), ("max_samples", "max_samples"),
                     ("labeler_cmd", "labeler_cmd")):
        value = getattr(args, arg, None)
        if value is not None:
            changes[key] = value
    return cfg.replace(**changes) if changes else cfg


def run(args) -> int:
    figures = not args.no_figures
    if args.command == "synth":
        return cmd_synth(args.spec, args.out_dir).exit_code
    cfg = _config(args)
    if args.command == "preprocess":
        result = cmd_preprocess(args.in_dir, args.out_dir, cfg)
    elif args.command == "discover":
        result = cmd_discover(args.in_dir, args.out_dir, cfg, figures=figures)
    elif args.command == "label":
        result = cmd_label(args.in_dir, args.out_dir, cfg, args.dataset, args.predictions, figures=figures)
    else:
        result = cmd_downstream(args.in_dir, args.out_dir, cfg, args.permute_labels, args.tasks, args.dataset,
                                figures=figures)
    for f in result.failures:
        log.warning("failure: %s", f)
    return result.exit_code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except (FatalError, ConfigError, ManifestError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
