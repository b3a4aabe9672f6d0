"""Low-rank separated polynomial surrogates fitted by alternating least squares.

A model approximates a scalar function of ``d`` design parameters as a rank-r
sum of products of univariate Legendre expansions, one factor per dimension.
Each dimension carries its own interval; inputs are mapped affinely onto
[-1, 1] before the Legendre basis is evaluated.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_FORMAT_VERSION = 1

# Tolerated overshoot of the standardized coordinate beyond [-1, 1].
X_SLACK = 1e-12
# Relative interval overshoot that is silently clamped during evaluation
# (optimizers probing box edges land here through round-off).
EXTRAPOLATION_SLACK = 1e-9


class FitError(RuntimeError):
    """Raised when an ALS fit cannot proceed (singular system, bad inputs)."""


# ---------------------------------------------------------------------------
# Intervals and coordinate standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """A closed parameter interval [lo, hi] with lo < hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if not self.lo < self.hi:
            raise ValueError(f"interval requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_standard(self, mu):
        """Affine map sending lo -> -1 and hi -> +1.  Extrapolation permitted."""
        return 2.0 * (np.asarray(mu, dtype=float) - self.lo) / self.width - 1.0

    def from_standard(self, x):
        """Inverse of :meth:`to_standard`."""
        return self.lo + 0.5 * (np.asarray(x, dtype=float) + 1.0) * self.width

    def contains(self, mu, rel_slack: float = EXTRAPOLATION_SLACK) -> bool:
        slack = rel_slack * self.width
        return bool(np.all(mu >= self.lo - slack) and np.all(mu <= self.hi + slack))


def to_standard(interval: Interval, mu):
    return interval.to_standard(mu)


def from_standard(interval: Interval, x):
    return interval.from_standard(x)


# ---------------------------------------------------------------------------
# Legendre basis
# ---------------------------------------------------------------------------

def legendre_table(x, degree: int) -> np.ndarray:
    """Values L_0(x)..L_degree(x) by the three-term recurrence.

    Returns an array of shape ``x.shape + (degree + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if np.any(np.abs(x) > 1.0 + X_SLACK):
        raise ValueError("legendre argument outside [-1, 1]")
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree >= 1:
        out[..., 1] = x
    for j in range(1, degree):
        out[..., j + 1] = ((2 * j + 1) * x * out[..., j] - j * out[..., j - 1]) / (j + 1)
    return out


def legendre_deriv_table(x, degree: int) -> np.ndarray:
    """Derivatives L_0'(x)..L_degree'(x) via L'_{j+1} = L'_{j-1} + (2j+1) L_j."""
    x = np.asarray(x, dtype=float)
    vals = legendre_table(x, degree)
    out = np.zeros_like(vals)
    if degree >= 1:
        out[..., 1] = 1.0
    for j in range(1, degree):
        out[..., j + 1] = out[..., j - 1] + (2 * j + 1) * vals[..., j]
    return out


def legendre_eval(j: int, x: float) -> float:
    """Value of the Legendre polynomial of degree j at x in [-1, 1]."""
    if j < 0:
        raise ValueError("degree index must be nonnegative")
    return float(legendre_table(np.asarray(x, dtype=float), j)[..., j])


def legendre_deriv(j: int, x: float) -> float:
    """Derivative of the Legendre polynomial of degree j at x in [-1, 1]."""
    if j < 0:
        raise ValueError("degree index must be nonnegative")
    return float(legendre_deriv_table(np.asarray(x, dtype=float), j)[..., j])


# ---------------------------------------------------------------------------
# Separated model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeparatedModel:
    """Rank-r tensor-product Legendre surrogate.

    ``coeffs`` has shape (rank, dim, degree + 1); ``scales`` has shape (rank,).
    Instances are immutable after construction and safe for concurrent reads.
    """

    dim: int
    rank: int
    degree: int
    intervals: tuple[Interval, ...]
    scales: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        if self.dim < 1 or self.rank < 1 or self.degree < 0:
            raise ValueError("dim and rank must be positive, degree nonnegative")
        if len(self.intervals) != self.dim:
            raise ValueError("need one interval per dimension")
        scales = np.asarray(self.scales, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if scales.shape != (self.rank,):
            raise ValueError(f"scales must have shape ({self.rank},)")
        if coeffs.shape != (self.rank, self.dim, self.degree + 1):
            raise ValueError(
                f"coeffs must have shape ({self.rank}, {self.dim}, {self.degree + 1})"
            )
        if not (np.all(np.isfinite(scales)) and np.all(np.isfinite(coeffs))):
            raise ValueError("model coefficients must be finite")
        object.__setattr__(self, "intervals", tuple(self.intervals))
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "coeffs", coeffs)
        self.scales.setflags(write=False)
        self.coeffs.setflags(write=False)

    # -- evaluation ---------------------------------------------------------

    def _standardize(self, points: np.ndarray) -> np.ndarray:
        lo = np.array([iv.lo for iv in self.intervals])
        width = np.array([iv.width for iv in self.intervals])
        x = 2.0 * (points - lo) / width - 1.0
        overshoot = np.abs(x) - 1.0
        if np.any(overshoot > 2.0 * EXTRAPOLATION_SLACK):
            worst = float(np.max(overshoot))
            raise ValueError(f"point outside model intervals (overshoot {worst:.3e})")
        return np.clip(x, -1.0, 1.0)

    def eval_many(self, points) -> np.ndarray:
        """Evaluate the surrogate at an (N, dim) array of design points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional points, got {pts.shape[1]}")
        x = self._standardize(pts)
        basis = legendre_table(x, self.degree)               # (N, d, p+1)
        factors = np.einsum("lij,nij->lni", self.coeffs, basis)  # (r, N, d)
        return self.scales @ factors.prod(axis=2)

    def __call__(self, mu) -> float:
        return float(self.eval_many(np.asarray(mu, dtype=float)[None, :])[0])

    def grad_many(self, points) -> np.ndarray:
        """Analytic gradient at an (N, dim) array of points; shape (N, dim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dimensional points, got {pts.shape[1]}")
        x = self._standardize(pts)
        basis = legendre_table(x, self.degree)
        dbasis = legendre_deriv_table(x, self.degree)
        factors = np.einsum("lij,nij->lni", self.coeffs, basis)    # (r, N, d)
        dfactors = np.einsum("lij,nij->lni", self.coeffs, dbasis)  # (r, N, d)
        d = self.dim
        others = np.empty_like(factors)
        for i in range(d):
            mask = np.arange(d) != i
            others[:, :, i] = factors[:, :, mask].prod(axis=2)
        grad_std = np.einsum("l,lni->ni", self.scales, dfactors * others)
        width = np.array([iv.width for iv in self.intervals])
        return grad_std * (2.0 / width)

    def gradient(self, mu) -> np.ndarray:
        return self.grad_many(np.asarray(mu, dtype=float)[None, :])[0]

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "dim": self.dim,
            "rank": self.rank,
            "degree": self.degree,
            "intervals": [[iv.lo, iv.hi] for iv in self.intervals],
            "scales": self.scales.tolist(),
            "coeffs": self.coeffs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SeparatedModel":
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version: {version!r}")
        return cls(
            dim=int(data["dim"]),
            rank=int(data["rank"]),
            degree=int(data["degree"]),
            intervals=tuple(Interval(float(lo), float(hi)) for lo, hi in data["intervals"]),
            scales=np.asarray(data["scales"], dtype=float),
            coeffs=np.asarray(data["coeffs"], dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "SeparatedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def model_eval(model: SeparatedModel, mu) -> float:
    return model(mu)


def model_grad(model: SeparatedModel, mu) -> np.ndarray:
    return model.gradient(mu)


# ---------------------------------------------------------------------------
# Sample sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSet:
    """Paired design points (N, dim) and performance values (N,)."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        if points.shape[0] != values.shape[0]:
            raise ValueError("points and values must have equal length")
        if points.shape[0] < 1:
            raise ValueError("need at least one sample")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"mu_{i + 1}" for i in range(self.dim)] + ["q"])
            for point, value in zip(self.points, self.values):
                writer.writerow([repr(float(v)) for v in point] + [repr(float(value))])

    @classmethod
    def read_csv(cls, path) -> "SampleSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[-1] != "q" or len(header) < 2:
                raise ValueError(f"malformed sample file {path}: bad header {header!r}")
            dim = len(header) - 1
            points, values = [], []
            for row in reader:
                if len(row) != dim + 1:
                    raise ValueError(f"malformed sample row in {path}: {row!r}")
                points.append([float(v) for v in row[:dim]])
                values.append(float(row[dim]))
        return cls(points=np.array(points), values=np.array(values))


# ---------------------------------------------------------------------------
# ALS fitting
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    target_rank: int
    degree: int
    max_sweeps: int = 200
    rel_residual_tol: float = 1e-8
    sweep_stall_tol: float = 1e-6
    regularization: float = 1e-10
    normalize_factors: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.target_rank < 1 or self.degree < 0 or self.max_sweeps < 1:
            raise ValueError("target_rank/max_sweeps must be positive, degree nonnegative")
        if self.rel_residual_tol <= 0 or self.sweep_stall_tol <= 0:
            raise ValueError("residual tolerances must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be nonnegative")


@dataclass
class FitReport:
    final_rank: int
    sweeps_used: int
    residual_history: list[float]
    converged: bool


def _normalize(scales: np.ndarray, coeffs: np.ndarray) -> None:
    """Scale every factor to unit coefficient 2-norm, absorbing into scales."""
    norms = np.linalg.norm(coeffs, axis=2)  # (r, d)
    norms = np.where(norms > 0.0, norms, 1.0)
    coeffs /= norms[:, :, None]
    scales *= norms.prod(axis=1)


def als_fit(
    samples: SampleSet,
    config: FitConfig,
    intervals: list[Interval] | tuple[Interval, ...],
) -> tuple[SeparatedModel, FitReport]:
    """Fit a separated model by cyclic per-dimension linear least squares.

    Within a fixed rank, sweeps repeat until the relative residual stalls; the
    rank is then grown one term at a time (warm-started, new factor seeded
    random) until ``rel_residual_tol`` or ``target_rank`` is reached.
    """
    intervals = tuple(intervals)
    d = samples.dim
    if len(intervals) != d:
        raise ValueError("need one interval per sample dimension")
    n = len(samples)
    p1 = config.degree + 1
    if n < config.target_rank * p1:
        raise FitError(
            f"need at least target_rank*(degree+1) = {config.target_rank * p1} samples, got {n}"
        )
    for i, iv in enumerate(intervals):
        if not iv.contains(samples.points[:, i]):
            raise FitError(f"samples fall outside interval for dimension {i}")

    q = samples.values
    q_norm = float(np.linalg.norm(q))
    if q_norm == 0.0:
        q_norm = 1.0
    lam = config.regularization * float(np.mean(q * q))

    x = np.empty_like(samples.points)
    for i, iv in enumerate(intervals):
        x[:, i] = np.clip(iv.to_standard(samples.points[:, i]), -1.0, 1.0)
    basis = legendre_table(x, config.degree)  # (n, d, p+1)

    rng = np.random.default_rng(config.seed)
    rank = 1
    scales = np.ones(1)
    coeffs = rng.uniform(-1.0, 1.0, size=(1, d, p1))

    history: list[float] = []
    sweeps_used = 0
    residual = np.inf

    while True:
        prev_residual = np.inf
        for _ in range(config.max_sweeps):
            for i in range(d):
                factors = np.einsum("lij,nij->lni", coeffs, basis)  # (r, n, d)
                mask = np.arange(d) != i
                others = scales[:, None] * factors[:, :, mask].prod(axis=2)  # (r, n)
                design = (others.T[:, :, None] * basis[:, None, i, :]).reshape(n, rank * p1)
                gram = design.T @ design
                gram[np.diag_indices_from(gram)] += lam
                try:
                    theta = np.linalg.solve(gram, design.T @ q)
                except np.linalg.LinAlgError as exc:
                    raise FitError(f"singular per-direction system (dimension {i})") from exc
                if not np.all(np.isfinite(theta)):
                    raise FitError(f"non-finite solution in dimension {i}")
                coeffs[:, i, :] = theta.reshape(rank, p1)
                scales = np.ones(rank)
            if config.normalize_factors:
                _normalize(scales, coeffs)
            factors = np.einsum("lij,nij->lni", coeffs, basis)
            pred = scales @ factors.prod(axis=2)
            residual = float(np.linalg.norm(q - pred) / q_norm)
            history.append(residual)
            sweeps_used += 1
            if residual <= config.rel_residual_tol:
                break
            if abs(prev_residual - residual) <= config.sweep_stall_tol * max(residual, 1e-300):
                break
            prev_residual = residual
        if residual <= config.rel_residual_tol or rank >= config.target_rank:
            break
        # Warm-started rank growth: the new factor can be zeroed out by the
        # first per-direction solve, so the residual cannot increase.
        rank += 1
        scales = np.concatenate([scales, [1.0]])
        coeffs = np.concatenate([coeffs, rng.uniform(-1.0, 1.0, size=(1, d, p1))], axis=0)

    model = SeparatedModel(
        dim=d,
        rank=rank,
        degree=config.degree,
        intervals=intervals,
        scales=scales,
        coeffs=coeffs,
    )
    report = FitReport(
        final_rank=rank,
        sweeps_used=sweeps_used,
        residual_history=history,
        converged=residual <= config.rel_residual_tol,
    )
    return model, report
