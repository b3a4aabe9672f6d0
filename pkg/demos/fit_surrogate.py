"""Fit low-rank separated surrogates of increasing rank and degree.

Samples the smooth exp-cos benchmark on [-0.5, 0.5]^2, fits surrogates from
(rank 1, degree 1) up to (rank 3, degree 5), and reports how the holdout
error decays as the model class grows.

Run with:  python3 demos/fit_surrogate.py
"""

import numpy as np

from tolalloc import FitConfig, Interval, als_fit, draw_samples
from tolalloc.evaluator import make_builtin
from tolalloc.metrics import surrogate_errors


def main():
    evaluator = make_builtin("exp-cos")
    intervals = (Interval(-0.5, 0.5), Interval(-0.5, 0.5))

    # Separate training and holdout seeds keep the two sets disjoint.
    training = draw_samples(evaluator, intervals, 400, seed=11)
    holdout = draw_samples(evaluator, intervals, 200, seed=12)
    print(f"training set: {len(training)} samples, holdout: {len(holdout)}")
    print()
    print(f"{'rank':>4} {'degree':>6} {'sweeps':>6} {'residual':>12} "
          f"{'mean rel err':>13} {'max rel err':>12}")

    for rank, degree in [(1, 1), (1, 3), (2, 3), (3, 5)]:
        model, report = als_fit(
            training,
            FitConfig(target_rank=rank, degree=degree, seed=3),
            intervals,
        )
        errors = surrogate_errors(model, holdout)
        print(f"{rank:>4} {degree:>6} {report.sweeps_used:>6} "
              f"{report.residual_history[-1]:>12.3e} "
              f"{errors.mean_rel:>13.3e} {errors.max_rel:>12.3e}")

    print()
    print("The error drops by orders of magnitude as rank and degree grow,")
    print("because exp(x1) cos(x2) is itself a rank-1 separable function that")
    print("low-degree Legendre products approximate rapidly.")

    # Models serialize to JSON and reload bit-exactly.
    model, _ = als_fit(training, FitConfig(target_rank=3, degree=5, seed=3), intervals)
    probe = np.array([0.17, -0.31])
    print()
    print(f"surrogate at {probe.tolist()}: {model(probe):.12f}")
    print(f"truth                        : {evaluator(probe):.12f}")


if __name__ == "__main__":
    main()
