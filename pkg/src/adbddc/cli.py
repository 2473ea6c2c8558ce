"""Command line entry point.

  run      execute the experiment a TOML config describes
  compare  same, but always both variants side by side
  check    run the invariant suite

Exit code 0 on success, 2 if any row failed to converge or any
invariant check failed.
"""

import argparse
import logging
import sys
from dataclasses import replace

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .diagnostics import run_invariant_suite
from .harness import emit_tables, format_table, load_config, run_case, validate_config


def _add_common(p, with_variant):
    p.add_argument("--config", required=True, help="TOML experiment description")
    if with_variant:
        p.add_argument("--variant", choices=("old", "new", "both"),
                       help="override the config's variant")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--seed", type=int, help="override the config's seed")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="adbddc",
        description="adaptive BDDC solver laboratory for advection-diffusion problems")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run an experiment config"), True)
    _add_common(sub.add_parser("compare", help="run both variants side by side"), False)
    sub.add_parser("check", help="run the invariant suite")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)

    if args.command == "check":
        results = run_invariant_suite()
        for r in results:
            print(r.line())
        return 0 if all(r.ok for r in results) else 2

    try:
        cfg = load_config(args.config)
        over = {"variant": "both"} if args.command == "compare" else {}
        if getattr(args, "variant", None):
            over["variant"] = args.variant
        if args.out:
            over["out"] = args.out
        if args.seed is not None:
            over["seed"] = args.seed
        cfg = validate_config(replace(cfg, **over))
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    rows = run_case(cfg)
    if not rows:
        print("no result rows produced; see the log for failures", file=sys.stderr)
        return 2
    csv_path, txt_path = emit_tables(rows, cfg.out)
    print(format_table(rows), end="")
    print(f"wrote {csv_path} and {txt_path}", file=sys.stderr)
    return 0 if all(r.converged for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
