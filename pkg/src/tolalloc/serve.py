"""Expose a builtin evaluator over the external line protocol.

Reads one request per line from stdin (whitespace-separated decimal reals),
writes one decimal real per line to stdout.  Useful as a template for
bridging real solvers into the toolkit.

Usage: python3 -m tolalloc.serve NAME [--parameters JSON]
"""

from __future__ import annotations

import argparse
import json
import sys

from .evaluator import make_builtin


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tolalloc-serve", description=__doc__)
    parser.add_argument("name", help="builtin evaluator name")
    parser.add_argument("--parameters", default="{}", help="JSON parameter object")
    args = parser.parse_args(argv)
    evaluator = make_builtin(args.name, json.loads(args.parameters))
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        mu = [float(token) for token in line.split()]
        print(repr(evaluator(mu)), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
