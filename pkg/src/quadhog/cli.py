"""Command line entry point: ``quadhog {noise,sweep,detect,verify}``.

Settings come from, in increasing precedence: the experiment defaults, a
TOML file (``--config``), the worker-count environment variable, and flags.
The exit status is 0 only when every check of the invoked suite passes.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from . import experiments as ex
from .verify import run_verify

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = {"noise": "noise_vs_structured", "sweep": "alignment_sweep", "detect": "detect_desk"}
_CONFIG_KEYS = {f.name for f in fields(ex.ExperimentConfig)} - {"experiment"}


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _add_experiment_flags(p):
    p.add_argument("--config", help="TOML file with ExperimentConfig keys (top level or in a table named after the subcommand)")
    p.add_argument("--feature", action="append", choices=ex.FEATURE_NAMES,
                   help="feature to run; repeat for several")
    p.add_argument("--window-radius", type=int)
    p.add_argument("--train-sizes", type=_int_list, help="comma-separated, ascending")
    p.add_argument("--rms-levels", type=_float_list, help="comma-separated pixels")
    p.add_argument("--C", type=float, dest="C")
    p.add_argument("--c-grid", type=_float_list, help="comma-separated C values to choose from on validation data")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--corpus-dir")
    p.add_argument("--memory-budget", type=int, help="bytes of feature matrix kept in memory")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--base-size", type=int)
    p.add_argument("--per-example-cap", type=int)
    p.add_argument("--warps-per-positive", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadhog", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, experiment in COMMANDS.items():
        _add_experiment_flags(sub.add_parser(name, help=f"run the {experiment} experiment"))
    v = sub.add_parser("verify", help="HOG operator and compact quad equivalence suites")
    v.add_argument("--seed", type=int, default=0)
    return parser


def load_config_file(path, command: str) -> dict:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    table = dict(data.get(command, {}))
    settings = {k: v for k, v in data.items() if not isinstance(v, dict)}
    settings.update(table)
    unknown = set(settings) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("feature", "train_sizes", "rms_levels", "c_grid"):
        if isinstance(settings.get(key), (list, str)):
            settings[key] = (settings[key],) if isinstance(settings[key], str) else tuple(settings[key])
    return settings


def config_from_args(args) -> ex.ExperimentConfig:
    settings = load_config_file(args.config, args.command) if args.config else {}
    cfg = ex.ExperimentConfig.for_experiment(COMMANDS[args.command], **settings).with_env()
    flags = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    if "feature" in flags:
        flags["feature"] = tuple(flags["feature"])
    return ex.ExperimentConfig.for_experiment(
        cfg.experiment, **{**{f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "experiment"},
                           **flags})


def _report(checks) -> int:
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  [{c.detail}]")
    return 0 if checks and all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return _report(run_verify(seed=args.seed))
    try:
        cfg = config_from_args(args)
    except (OSError, ValueError) as err:
        print(f"quadhog: {err}", file=sys.stderr)
        return 2
    rows = ex.run(cfg)
    for r in rows:
        eer = "" if r.eer != r.eer else f"  eer={r.eer:.4f}"
        print(f"{r.feature:14s} n={r.train_size:<6d} rms={r.rms_level:<5g} acc={r.test_accuracy:.4f} "
              f"dim={r.feature_dim} t={r.train_seconds:.1f}s{eer}")
    return _report(ex.CHECKS[cfg.experiment](rows))


if __name__ == "__main__":
    sys.exit(main())
