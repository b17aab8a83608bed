"""cmz-figures render --job job.json"""

from __future__ import annotations

import argparse
import json
import sys

from .core import FigureError, FigureJob, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="cmz-figures", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure job")
    p_render.add_argument("--job", required=True, help="path to the job JSON document")
    args = parser.parse_args(argv)

    try:
        job = FigureJob.load(args.job)
        result = render(job)
    except (FigureError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(result.png)
    print(result.svg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
