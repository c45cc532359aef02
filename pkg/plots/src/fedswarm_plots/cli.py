"""CLI for figure regeneration: ``fedswarm-plot <figure-id> --in X --out Y``."""

from __future__ import annotations

import argparse
import json
import sys

from fedswarm_plots.render import FIGURE_EXPERIMENTS, FigureSpec, SchemaMismatch, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedswarm-plot",
        description="Regenerate a figure from an experiment summary JSON.")
    parser.add_argument("figure_id", choices=sorted(FIGURE_EXPERIMENTS))
    parser.add_argument("--in", dest="input_path", required=True,
                        help="experiment summary JSON")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="output image (png or svg)")
    args = parser.parse_args(argv)
    spec = FigureSpec(input_path=args.input_path, figure_id=args.figure_id,
                      output_path=args.output_path)
    try:
        path = render(spec)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SchemaMismatch, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
