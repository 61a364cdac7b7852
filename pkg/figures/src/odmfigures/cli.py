"""Command-line figure renderer.

Exit codes: 0 on success, 1 for usage or input-shape problems, 2 for
unexpected failures.
"""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from . import __version__
from .plots import PRESET_NAMES, preset_specs, render


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise ValueError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="odmfigures",
                     description="Render figures from odmlab CSV artifacts")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    parser.add_argument("--dir", required=True,
                        help="suite output directory holding the CSVs")
    parser.add_argument("--out", required=True,
                        help="directory to write images into")
    parser.add_argument("--preset", action="append", choices=PRESET_NAMES,
                        default=None,
                        help="figure group; repeatable (default: all)")
    parser.add_argument("--format", default="png",
                        choices=("png", "pdf", "svg"))
    parser.add_argument("--policies", default=None,
                        help="comma-separated subset (default: every policy "
                        "found in the directory)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    presets = args.preset or ["all"]
    policies = tuple(p for p in (args.policies or "").split(",") if p)
    try:
        specs = []
        for preset in presets:
            specs.extend(preset_specs(preset, args.out, fmt=args.format,
                                      policies=policies))
        written = [render(args.dir, spec) for spec in specs]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
