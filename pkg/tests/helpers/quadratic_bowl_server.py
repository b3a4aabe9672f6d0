"""Standalone external evaluator: Q(mu) = sum_i a_i * mu_i^2.

Speaks the line protocol: one whitespace-separated design vector per stdin
line, one decimal real per stdout line.  Deliberately uses no project code.
"""

import sys


def main() -> int:
    a = [float(token) for token in sys.argv[1].split(",")] if len(sys.argv) > 1 else [1.0]
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        mu = [float(token) for token in line.split()]
        if len(mu) != len(a):
            print("dimension mismatch", flush=True)
            continue
        value = 0.0
        for coeff, x in zip(a, mu):
            value += coeff * x * x
        print(repr(value), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
