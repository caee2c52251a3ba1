"""``perplab`` command line.

Exit codes: 0 every verdict passed, 1 some verdict failed, 2 configuration
error, 3 runtime or I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config, with_overrides
from .runner import run

SUBCOMMANDS = {
    "slln": "slln",
    "clt": "clt-1d",
    "clt-fidi": "clt-fidi",
    "clt-trunc": "clt-truncated",
    "vervaat": "vervaat",
    "lil": "lil-scan",
    "limitproc": "limit-process-check",
    "schedule": "schedule",
}
HELP = {
    "slln": "(1-b) X(b) against m/mu",
    "clt": "one-dimensional CLT: variance and KS distance",
    "clt-fidi": "covariance of X(b, u) across several u",
    "clt-trunc": "CLT of the statistic truncated at M",
    "vervaat": "variance against the two candidate v^2 formulas",
    "lil": "iterated-logarithm envelope scans along a schedule",
    "limitproc": "both limit-process samplers against 1/(u+v)",
    "schedule": "materialize a discount schedule and test its class conditions",
}

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perplab", description="Discounted perpetuity experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", type=Path, help="TOML configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--paths", type=int, help="number of paths (samples for limitproc)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--workers", type=int, help="worker processes; 0 = one per CPU "
                                                   "(fallback: $PERPLAB_WORKERS, then the config)")
        p.add_argument("--quiet", action="store_true", help="do not print the summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = SUBCOMMANDS[args.command]
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        if not text.strip():
            text = f'experiment = "{experiment}"\n'
        elif "experiment" not in _top_level_keys(text):
            text = f'experiment = "{experiment}"\n' + text
        cfg = parse_config(text)
        if cfg.experiment != experiment:
            raise ConfigError(f"config is for {cfg.experiment!r} but the subcommand runs {experiment!r}",
                              "experiment")
        cfg = with_overrides(cfg, seed=args.seed, n_paths=args.paths, workers=args.workers, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        report, files = run(cfg, args.workers)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure of the run maps to one exit code
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not args.quiet:
        print(report.summary(), end="")
        print(f"wrote {len(files)} files to {cfg.output['dir']}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def _top_level_keys(text: str) -> set:
    from .config import tomllib
    try:
        return set(tomllib.loads(text))
    except tomllib.TOMLDecodeError:
        return {"experiment"}  # let parse_config report the syntax error


if __name__ == "__main__":
    sys.exit(main())
