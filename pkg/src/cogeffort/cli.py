"""Command-line entry point.

Subcommands mirror the pipeline stages plus ``pipeline`` (everything in
order) and ``plotdata`` (plot-ready CSV extraction). Exit codes: 0 success,
1 validation/configuration error, 2 runtime error; failures print one
machine-parsable ``error: <category>: <message>`` line to stderr.
"""

import argparse
import json
import sys

from .config import load_config
from .errors import CogEffortError, ConfigError, DataError, ShapeError
from .stages import PLOT_KINDS, STAGES, emit_plot_data

_STAGE_HELP = {
    "synth": "generate the synthetic cohort (trials.csv)",
    "prep": "preprocess trials into PC feature rows (features.csv, pca_model.json)",
    "train": "train the configured network (model.ckpt, history.csv, predictions.csv)",
    "gridsearch": "train every grid configuration (grid_log.csv, grid_report.json)",
    "baselines": "tree baselines and latent-vs-raw comparison (baselines_report.json)",
    "explain": "region/correlation/Shapley analysis (attributions.json, ...)",
    "effort": "efficiency/involvement metrics (effort.csv, effort_report.json)",
    "pipeline": "run all stages in order and write summary.json",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cogeffort",
        description="Cognitive-effort estimation pipeline (synthetic cohort, "
                    "network training, attribution, effort metrics).")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "plotdata"):
        p = sub.add_parser(name, help=_STAGE_HELP.get(name, "emit plot-ready CSV data"))
        p.add_argument("--config", metavar="PATH", default=None,
                       help="INI config file (defaults apply when omitted)")
        p.add_argument("--out-dir", metavar="PATH", default=None,
                       help="run directory for artifacts (default: config or cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        if name in ("effort", "pipeline"):
            p.add_argument("--predictions", choices=["model", "oracle"], default=None,
                           help="score source for predicted effort records")
        if name == "plotdata":
            p.add_argument("--kind", default=None,
                           help=f"one of {', '.join(PLOT_KINDS)}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out_dir,
                             predictions=getattr(args, "predictions", None))
        if args.command == "plotdata":
            if args.kind is None:
                raise ConfigError(f"--kind is required; choose from {PLOT_KINDS}")
            path = emit_plot_data(config, args.kind)
            print(path)
            return 0
        result = STAGES[args.command](config)
        print(json.dumps(result, sort_keys=True, default=str))
        return 0
    except (ConfigError, DataError, ShapeError) as err:
        print(f"error: validation: {_one_line(err)}", file=sys.stderr)
        return 1
    except CogEffortError as err:
        print(f"error: runtime: {_one_line(err)}", file=sys.stderr)
        return 2


def _one_line(err: Exception) -> str:
    return " ".join(str(err).split())


if __name__ == "__main__":
    sys.exit(main())
