"""Command line interface: ``kmp <mode> --config <path> [--seed N] [--out DIR]``.

Exit codes: 0 on success, 2 on validation errors, 3 on numerical failures.
"""

import argparse
import json
import logging
import sys

import numpy as np

from .config import MODES, ExperimentConfig
from .errors import NumericalError, ValidationError
from .experiments import run_experiment

_MODE_HELP = {
    "fit": "learn a mixture model and reference database from demonstrations",
    "predict": "predict a trajectory from a fitted or saved model",
    "adapt": "inject desired via-/end-points and predict the adapted trajectory",
    "superpose": "mix adapted trajectories with pointwise priorities",
    "local": "task-parameterized prediction with local frames",
    "force_sim": "simulated force-driven via-point adaptation",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kmp",
        description="Probabilistic trajectory learning and adaptation toolkit.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=_MODE_HELP[mode])
        p.add_argument("--config", required=True, help="path to the experiment JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        try:
            with open(args.config) as handle:
                raw = json.load(handle)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError("config must be a JSON object")
        declared = raw.get("mode")
        if declared is not None and declared != args.mode:
            raise ValidationError(
                f"config declares mode {declared!r} but the CLI asked for {args.mode!r}"
            )
        raw["mode"] = args.mode
        if args.seed is not None:
            raw["seed"] = args.seed
        config = ExperimentConfig.from_dict(raw)
        report = run_experiment(config, out_dir=args.out)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    out = args.out or config.output.get("dir", "out")
    print(f"{args.mode}: ok, artifacts in {out}/ ({', '.join(sorted(report['artifacts']))})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
