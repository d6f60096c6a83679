"""Command-line entry point: ``pwkstat <subcommand> [options]``.

Exit codes: 0 on success, 2 for an invalid configuration, 3 for a failure
while running.
"""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, InvalidSubsampleSize, PwkError
from .harness import (
    PAPER_SCALE,
    config_hash,
    load_config,
    resolve_config,
    run_band,
    run_diagrams,
    run_generate,
    run_gram,
    run_stability_audit,
    run_twosample,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_DEFAULT_EXPERIMENT = {
    "band": "band",
    "audit": "stability-audit",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON file with ExperimentConfig fields")
    shared.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    shared.add_argument("--out-dir", default=".", help="directory for output files")
    shared.add_argument("--paper-scale", action="store_true",
                        help="use " + ", ".join(f"{k}={v}" for k, v in PAPER_SCALE.items()))
    shared.add_argument("--threads", type=int, default=1, help="worker processes for diagram computation")
    shared.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config field; repeatable")

    parser = _Parser(prog="pwkstat", description="Persistence weighted kernel statistics")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[shared], help="generate point sets")
    sub.add_parser("pd", parents=[shared], help="compute persistence diagrams")
    sub.add_parser("gram", parents=[shared], help="diagram-kernel Gram matrices")
    sub.add_parser("band", parents=[shared], help="bootstrap confidence bands")
    sub.add_parser("twosample", parents=[shared], help="type I / type II error table")
    sub.add_parser("audit", parents=[shared], help="stability inequality audit")
    return parser


def _overrides(args) -> dict:
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    if args.seed is not None:
        out["seed"] = args.seed
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_data = load_config(args.config) if args.config else {}
        overrides = _overrides(args)
        if args.command in _DEFAULT_EXPERIMENT and "experiment" not in file_data and "experiment" not in overrides:
            overrides["experiment"] = _DEFAULT_EXPERIMENT[args.command]
        cfg = resolve_config(file_data, args.paper_scale, overrides)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except (ConfigError, InvalidSubsampleSize) as exc:
        print(f"pwkstat: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "gen":
            paths = run_generate(cfg, args.out_dir)
        elif args.command == "pd":
            paths = run_diagrams(cfg, args.out_dir, threads=args.threads)
        elif args.command == "gram":
            paths = run_gram(cfg, args.out_dir, threads=args.threads)
        elif args.command == "band":
            result = run_band(cfg, args.out_dir, threads=args.threads)
            for c in result.comparisons:
                print(f"{c.weight}: disjoint at grid labels {c.disjoint_labels()}")
            paths = []
        elif args.command == "twosample":
            result = run_twosample(cfg, args.out_dir, threads=args.threads)
            print("kernel,type_I,type_II")
            for r in result.rows:
                print(f"{r.kernel},{r.type_I:.3f},{r.type_II:.3f}")
            paths = []
        else:
            report = run_stability_audit(cfg, args.out_dir)
            for c in report.checks:
                print(f"{c.name}: max ratio {c.max_ratio:.6g} {'PASS' if c.passed else 'FAIL'}")
            paths = []
            if not report.passed:
                return EXIT_RUNTIME
    except (ConfigError, InvalidSubsampleSize) as exc:
        print(f"pwkstat: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PwkError, ValueError, OSError) as exc:
        print(f"pwkstat: {args.command} failed (config {config_hash(cfg)}, seed {cfg.seed}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
