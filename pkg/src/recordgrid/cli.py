"""Command-line entry point: ``recordgrid {sample,test,oracle}``.

Exit codes: 0 pass, 1 statistical failure, 2 configuration error,
3 window-cap or conditioning failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .suite import (ConfigError, RunConfig, exit_status, format_report, parse_config_text,
                    run_oracle_checks, run_sample, run_test_suite, with_overrides, write_text)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def _csv_list(cast):
    def parse(text: str):
        try:
            return tuple(cast(v.strip()) for v in text.split(",") if v.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="64-bit master seed (default 1)")
    common.add_argument("--config", type=Path, help="key=value config file; flags override it")
    common.add_argument("--identities", type=_csv_list(str),
                        help="comma-separated identity names or families")
    common.add_argument("--n", dest="ns", type=_csv_list(int), help="comma-separated orders n")
    common.add_argument("--N", type=int, help="draws per side")
    common.add_argument("--B", type=int, help="permutations per test")
    common.add_argument("--K", type=int, help="replicates per check")
    common.add_argument("--alpha", type=float, help="per-test level, in (0, 0.5)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--emit-samples", dest="emit_samples", action="store_true", default=None,
                        help="also write the first replicate's samples as CSV (test only)")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")

    parser = argparse.ArgumentParser(prog="recordgrid",
                                     description="Record tilings of a planar Poisson process.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="write identity samples as CSV")
    sub.add_parser("test", parents=[common], help="run the identity suite")
    sub.add_parser("oracle", parents=[common], help="geometric chains vs closed forms")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    base = {}
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="ascii")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        base = parse_config_text(text)
    cfg = RunConfig(**base)
    cfg = with_overrides(cfg, seed=args.seed, identities=args.identities, ns=args.ns, N=args.N,
                         B=args.B, K=args.K, alpha=args.alpha, out=args.out,
                         emit_samples=args.emit_samples)
    return cfg.validate()


def cmd_sample(cfg: RunConfig) -> int:
    for path in run_sample(cfg):
        print(path)
    return EXIT_OK


def _report(cfg: RunConfig, results, filename: str) -> int:
    text = format_report(results)
    path = cfg.out / filename
    write_text(path, text)
    sys.stdout.write("".join(line + "\n" for line in text.splitlines() if line.startswith("# ")))
    print(f"report: {path}")
    return exit_status(results)


def cmd_test(cfg: RunConfig, progress=None) -> int:
    return _report(cfg, run_test_suite(cfg, progress), "report.jsonl")


def cmd_oracle(cfg: RunConfig, progress=None) -> int:
    return _report(cfg, run_oracle_checks(cfg, progress), "oracle.jsonl")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    progress = None if args.quiet else (lambda msg: print(f"[{args.command}] {msg}", file=sys.stderr))
    try:
        if args.command == "sample":
            return cmd_sample(cfg)
        if args.command == "test":
            return cmd_test(cfg, progress)
        return cmd_oracle(cfg, progress)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
