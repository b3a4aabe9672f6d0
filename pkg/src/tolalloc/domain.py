"""Sampling-domain and tolerance-bounding-box construction.

Each axis bound is the first design perturbation along +/- e_i at which the
system performance climbs to the allowed constraint value, found by outward
bracket expansion followed by Brent root refinement.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .surrogate import Interval

ROOT_REL_TOL = 1e-10
BRACKET_INITIAL_FRACTION = 1e-3
BRACKET_MAX_DOUBLINGS = 60


class ConstraintError(ValueError):
    """Raised when the nominal design violates the performance constraint."""


@dataclass(frozen=True)
class PerformanceConstraint:
    q_allow: float

    def validate(self, evaluator, mu_hat) -> float:
        q0 = evaluator(np.asarray(mu_hat, dtype=float))
        if not q0 < self.q_allow:
            raise ConstraintError(
                f"constraint violated at nominal: Q(mu_hat)={q0} >= q_allow={self.q_allow}"
            )
        return q0


@dataclass(frozen=True)
class BoundingBox:
    """Componentwise tolerance search box [tau_min, tau_max]."""

    tau_min: np.ndarray
    tau_max: np.ndarray

    def __post_init__(self):
        tau_min = np.asarray(self.tau_min, dtype=float)
        tau_max = np.asarray(self.tau_max, dtype=float)
        if tau_min.shape != tau_max.shape or tau_min.ndim != 1:
            raise ValueError("tau_min and tau_max must be 1-d vectors of equal length")
        if np.any(tau_min < 0.0) or np.any(tau_min >= tau_max):
            raise ValueError("require 0 <= tau_min_i < tau_max_i for all i")
        object.__setattr__(self, "tau_min", tau_min)
        object.__setattr__(self, "tau_max", tau_max)

    @property
    def dim(self) -> int:
        return self.tau_min.size

    def clip(self, tau) -> np.ndarray:
        return np.clip(np.asarray(tau, dtype=float), self.tau_min, self.tau_max)

    def contains(self, tau, rel_slack: float = 0.0) -> bool:
        tau = np.asarray(tau, dtype=float)
        slack = rel_slack * (self.tau_max - self.tau_min)
        return bool(np.all(tau >= self.tau_min - slack) and np.all(tau <= self.tau_max + slack))


@dataclass(frozen=True)
class SamplingDomain:
    """Hyperrectangle centered on the nominal design with tau_max half-widths."""

    intervals: tuple[Interval, ...]

    @classmethod
    def from_tau_max(cls, mu_hat, tau_max) -> "SamplingDomain":
        mu_hat = np.asarray(mu_hat, dtype=float)
        tau_max = np.asarray(tau_max, dtype=float)
        return cls(tuple(Interval(m - t, m + t) for m, t in zip(mu_hat, tau_max)))


def axis_threshold(
    evaluator,
    mu_hat,
    q_allow: float,
    axis: int,
    direction: int,
    search_cap: float,
    rel_tol: float = ROOT_REL_TOL,
) -> float:
    """Smallest |step| along ``direction * e_axis`` with Q = q_allow.

    Returns ``search_cap`` (with a warning) if no crossing is found within it.
    """
    if direction not in (-1, 1):
        raise ValueError("direction must be +1 or -1")
    if search_cap <= 0:
        raise ValueError("search_cap must be positive")
    mu_hat = np.asarray(mu_hat, dtype=float)

    def q_of(t: float) -> float:
        point = mu_hat.copy()
        point[axis] += direction * t
        value = evaluator(point)
        if not np.isfinite(value):
            raise ArithmeticError(f"non-finite performance at axis {axis}, step {t}")
        return value

    q0 = q_of(0.0)
    if not q0 < q_allow:
        raise ConstraintError(
            f"constraint violated at nominal: Q(mu_hat)={q0} >= q_allow={q_allow}"
        )

    t_prev = 0.0
    step = BRACKET_INITIAL_FRACTION * search_cap
    bracket = None
    for k in range(BRACKET_MAX_DOUBLINGS + 1):
        t = min(step * 2.0**k, search_cap)
        if q_of(t) >= q_allow:
            bracket = (t_prev, t)
            break
        t_prev = t
        if t >= search_cap:
            break
    if bracket is None:
        warnings.warn(
            f"no performance crossing within search cap {search_cap} on axis {axis} "
            f"(direction {direction:+d}); returning the cap",
            stacklevel=2,
        )
        return search_cap

    lo, hi = bracket
    root = brentq(lambda t: q_of(t) - q_allow, lo, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(q_of(root) - q_allow) > rel_tol * abs(q_allow):
        warnings.warn(
            f"axis {axis} crossing refined to residual above {rel_tol} relative "
            "(possible tangency)",
            stacklevel=2,
        )
    return float(root)


def size_bounding_box(
    evaluator,
    mu_hat,
    q_allow: float,
    caps,
    tau_min=None,
) -> tuple[BoundingBox, SamplingDomain]:
    """Size the tolerance bounding box and the sampling domain.

    The binding direction governs each axis since the tolerance box extends
    symmetrically about the nominal design.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    caps = np.broadcast_to(np.asarray(caps, dtype=float), mu_hat.shape)
    PerformanceConstraint(q_allow).validate(evaluator, mu_hat)
    tau_max = np.empty_like(mu_hat)
    for i in range(mu_hat.size):
        plus = axis_threshold(evaluator, mu_hat, q_allow, i, +1, float(caps[i]))
        minus = axis_threshold(evaluator, mu_hat, q_allow, i, -1, float(caps[i]))
        tau_max[i] = min(plus, minus)
    if tau_min is None:
        tau_min = np.zeros_like(tau_max)
    bbox = BoundingBox(tau_min=np.asarray(tau_min, dtype=float), tau_max=tau_max)
    return bbox, SamplingDomain.from_tau_max(mu_hat, tau_max)
