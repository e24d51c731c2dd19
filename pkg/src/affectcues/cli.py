"""Command line entry point: ``affectcues {synth,extract,explore,run,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .config import load_config, tomllib
from .errors import AffectCuesError, ConfigError

log = logging.getLogger("affectcues")


def _synth_spec(args):
    from .synth import SynthSpec

    values = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                values = tomllib.load(fh).get("synth", {})
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        known = {f.name for f in fields(SynthSpec)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown key(s) in [synth]: {', '.join(unknown)}")
        if "smoothing" in values:
            values["smoothing"] = tuple(values["smoothing"])
    for name in ("seed", "lag", "n_frames", "n_train", "n_validation", "n_test"):
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    try:
        return SynthSpec(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def cmd_synth(args) -> int:
    from .synth import generate_synthetic

    if not args.out:
        raise ConfigError("synth needs --out")
    out = generate_synthetic(_synth_spec(args), args.out)
    print(f"wrote synthetic corpus to {out}")
    return 0


def _config(args):
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    return load_config(args.config)


def cmd_extract(args) -> int:
    from .pipeline import extract_to_dir

    cfg = _config(args)
    paths = extract_to_dir(cfg, Path(args.out or cfg.output))
    print(f"wrote {len(paths)} feature files")
    return 0


def cmd_explore(args) -> int:
    from .pipeline import explore_lld

    cfg = _config(args)
    print(f"wrote {explore_lld(cfg, Path(args.out or cfg.output))}")
    return 0


def cmd_run(args) -> int:
    from .pipeline import run_experiment

    cfg = _config(args)
    path = run_experiment(cfg, Path(args.out or cfg.output), jobs=args.jobs, deterministic=args.deterministic)
    print(f"wrote {path}")
    return 0


def cmd_report(args) -> int:
    from .plots import render_report

    if args.out:
        run_dir = Path(args.out)
    elif args.config:
        run_dir = load_config(args.config).output
    else:
        raise ConfigError("report needs --out (a run directory) or --config")
    if not (run_dir / "report.csv").exists():
        raise ConfigError(f"no report.csv in {run_dir}")
    for p in render_report(run_dir):
        print(f"wrote {p}")
    return 0


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic corpus with a known annotation lag"),
    "extract": (cmd_extract, "write windowed feature CSVs for every subject"),
    "explore": (cmd_explore, "rank windowed-mean LLDs by Pearson correlation with the targets"),
    "run": (cmd_run, "run the full sweep and write report.csv"),
    "report": (cmd_report, "render summary.csv and figures from a run directory"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment TOML file")
    common.add_argument("--out", help="output directory (default: [output] dir from the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for the sweep")
    common.add_argument(
        "--deterministic", action="store_true", help="pin BLAS to one thread so reruns are byte-identical"
    )
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="affectcues", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        if name == "synth":
            p.add_argument("--seed", type=int)
            p.add_argument("--lag", type=float, help="annotation lag in seconds")
            p.add_argument("--frames", dest="n_frames", type=int)
            p.add_argument("--train", dest="n_train", type=int)
            p.add_argument("--validation", dest="n_validation", type=int)
            p.add_argument("--test", dest="n_test", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    handler = COMMANDS[args.command][0]
    try:
        return handler(args)
    except AffectCuesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
