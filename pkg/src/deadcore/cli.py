"""Command-line entry point.

Verbs mirror the experiment names; each takes --config, --out, --seed,
--threads plus the output flags.  Exit code 0 means every in-experiment
assertion passed; 1 means an assertion failed; 2 means the run errored.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import EXPERIMENTS, read_config
from .experiments import RUNNERS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deadcore",
        description="dead-core free-boundary laboratory for the "
                    "reaction-diffusion infinity-Laplace equation",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in EXPERIMENTS:
        p = sub.add_parser(verb, help=f"run the {verb} experiment")
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="intra-experiment parallelism (vectorized kernels "
                            "run regardless; recorded in the config)")
        p.add_argument("--json", action="store_true", help="mirror tables as JSON")
        p.add_argument("--binary", action="store_true", help="binary field dumps")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config)
    except Exception as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment != args.verb:
        cfg = replace(cfg, experiment=args.verb)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    if args.binary:
        cfg = replace(cfg, binary_dumps=True)
    try:
        tables, ok, notes = RUNNERS[args.verb](cfg, out_dir=args.out, json_mirror=args.json)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, table in tables.items():
        print(f"[{name}] {len(table.rows)} rows")
        print(table.to_csv(), end="")
    for note in notes:
        print(f"note: {note}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
