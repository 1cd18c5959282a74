"""Command-line entry point.

    crflab --config PATH [--out-dir PATH] [--mode NAME] [--levels N] [--quiet]

Exit status: 0 all invariants passed, 2 at least one invariant failed,
1 configuration or solver error.
"""

from __future__ import annotations

import argparse
import sys

from .errors import CrfLabError
from .harness import ConfigError, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="crflab",
        description="Conformal Ricci flow laboratory: run configured "
                    "experiments and emit CSV/JSON reports.")
    p.add_argument("--config", required=True, help="experiment config file")
    p.add_argument("--out-dir", default=None,
                   help="output directory (overrides config and "
                        "CRFLAB_OUT_DIR)")
    p.add_argument("--mode", default=None,
                   help="override the config's experiment mode")
    p.add_argument("--levels", type=int, default=None,
                   help="refinement levels for convergence mode")
    p.add_argument("--quiet", action="store_true",
                   help="suppress per-invariant output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"mode": args.mode, "levels": args.levels}
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return run_experiment(cfg, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except CrfLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
