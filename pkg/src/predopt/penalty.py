"""Exact-penalty multiplier bounds and the supporting geometry.

The bounds answer: how large must the multiplier beta on a softened hard
constraint be so that the unconstrained penalized optimum never violates
the original constraint?  All formulas scale with E, a bound on the
objective's gradient norm, and (for constraint sets mixing x >= 0 with
other hyperplanes) with the sine of the smallest angle between constraint
normals and coordinate axes.  The general case is controlled by the
largest eigenvalue of the Gram factor of constraint-row subsets, which is
estimated here by a Monte-Carlo study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problems import Family, ProblemInstance

__all__ = [
    "bound_inequality_only",
    "bound_with_nonneg",
    "bound_binary",
    "bound_general",
    "empirical_beta",
    "recommended_beta",
    "gradient_norm_bound",
    "min_hyperplane_angle",
    "LambdaStudyError",
    "LambdaStudyResult",
    "lambda_from_rows",
    "estimate_lambda_max",
    "fit_lambda_curve",
]


def bound_inequality_only(E: float, scale: float = 1.0) -> float:
    """Multiplier for pure inequality systems with nonnegative rows: beta = scale * E."""
    if E < 0:
        raise ValueError("E must be nonnegative")
    return scale * E


def bound_with_nonneg(E: float, n: int, sin_p: float, scale: float = 1.0) -> float:
    """Multiplier when x >= 0 rows join the system: scale * n^1.5 * E / sin p."""
    if not 0.0 < sin_p <= 1.0:
        raise ValueError("sin_p must lie in (0, 1]; degenerate axis-parallel geometry")
    if E < 0 or n < 1:
        raise ValueError("E must be nonnegative and n >= 1")
    return scale * n**1.5 * E / sin_p


def bound_binary(E: float, n: int, scale: float = 1.0) -> float:
    """Multiplier for 0/1 constraint matrices: the angle term drops out."""
    if E < 0 or n < 1:
        raise ValueError("E must be nonnegative and n >= 1")
    return scale * n**1.5 * E


def bound_general(E: float, n: int, lambda_max: float, scale: float = 1.0) -> float:
    """General mixed equality/inequality multiplier: scale * sqrt(n) * lambda_max * E."""
    if lambda_max <= 0:
        raise ValueError("lambda_max must be positive")
    if E < 0 or n < 1:
        raise ValueError("E must be nonnegative and n >= 1")
    return scale * np.sqrt(n) * lambda_max * E


def empirical_beta(problem: ProblemInstance, E: float, k: float = 10.0, step: int = 0) -> float:
    """Rule-of-thumb training multiplier: k * E, escalated by sqrt(n) per step.

    Real data needs far smaller multipliers than the worst-case bounds;
    start from a small constant times the gradient bound and escalate only
    if the run diverges or hard constraints leak.
    """
    if E <= 0:
        raise ValueError("E must be positive")
    if step < 0:
        raise ValueError("step must be nonnegative")
    return k * E * float(np.sqrt(problem.n)) ** step


def gradient_norm_bound(problem: ProblemInstance, theta_cap: float | None = None) -> float:
    """Default E: objective-gradient norm cap plus the soft-term contribution.

    E = ||theta||_2 cap + ||alpha||_1 * max row norm(C), with the second
    weight vector added for the asymmetric family. theta_cap defaults to
    the instance's own ||theta||_2 (0 when the family has none).
    """
    if theta_cap is None:
        theta_cap = 0.0 if problem.theta is None else float(np.linalg.norm(problem.theta))
    E = float(theta_cap)
    if problem.m3:
        max_row = float(np.max(np.linalg.norm(problem.C, axis=1)))
        E += float(np.sum(problem.alpha)) * max_row
        if problem.alpha2 is not None:
            E += float(np.sum(problem.alpha2)) * max_row
    return E


def min_hyperplane_angle(A: np.ndarray | None, B: np.ndarray | None = None) -> float:
    """sin of the smallest angle between any constraint normal and any axis.

    Rows must be unit norm. For each row the nearest axis has cosine
    max_k |r_k|, so the row's sine is sqrt(1 - max_k r_k^2); the minimum
    over rows (and over the +/- copies of equality rows, which share it)
    is returned. No rows -> 1. An axis-aligned row returns 0, flagging
    degenerate geometry for the angle-based bounds.
    """
    rows = []
    for mat in (A, B):
        if mat is not None and np.size(mat):
            rows.append(np.atleast_2d(np.asarray(mat, dtype=float)))
    if not rows:
        return 1.0
    stacked = np.vstack(rows)
    norms = np.linalg.norm(stacked, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero constraint row has no direction")
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError("rows must be normalized to unit norm")
    peak = np.max(np.abs(stacked), axis=1)
    return float(np.min(np.sqrt(np.maximum(1.0 - peak**2, 0.0))))


def _is_axis_like(A: np.ndarray) -> bool:
    return A.shape[0] == 0 or bool(np.all(np.sum(A != 0.0, axis=1) <= 1))


def recommended_beta(problem: ProblemInstance, E: float | None = None, scale: float = 1.0) -> float:
    """Dispatch the tightest applicable theorem-form bound for an instance.

    No equality rows: the nonneg-aware bound (binary variant when A is 0/1
    before normalization). A single equality with axis-like inequalities
    reduces to the same form. Otherwise the empirical general form
    n^2.5 * E / sin p is used.
    """
    if E is None:
        E = gradient_norm_bound(problem)
    n = problem.n
    if problem.m2 == 0 and problem.m1 == 0:
        return bound_inequality_only(E, scale)
    binary = problem.m1 > 0 and np.all(
        np.isin(np.round(problem.A * problem.a_row_scale[:, None], 12), (0.0, 1.0))
    )
    if problem.m2 == 0 or (problem.m2 == 1 and _is_axis_like(problem.A)):
        if binary and problem.m2 == 0:
            return bound_binary(E, n, scale)
        sin_p = min_hyperplane_angle(problem.A, problem.B)
        return bound_with_nonneg(E, n, sin_p, scale)
    sin_p = min_hyperplane_angle(problem.A, problem.B)
    if sin_p <= 0.0:
        raise ValueError("degenerate geometry: constraint row parallel to an axis")
    return scale * n**2.5 * E / sin_p


# ---------------------------------------------------------------------------
# Monte-Carlo eigenvalue study


class LambdaStudyError(RuntimeError):
    def __init__(self, n: int, distribution: str, attempts: int):
        self.n = n
        self.distribution = distribution
        self.attempts = attempts
        super().__init__(
            f"no admissible constraint sample for n={n}, distribution={distribution} "
            f"after {attempts} attempts"
        )


@dataclass
class LambdaStudyResult:
    n: int
    distribution: str
    trials: int
    mean: float
    max: float


_DISTRIBUTIONS = ("uniform01", "absnormal", "beta22")


def _draw(dist: str, size, rng: np.random.Generator) -> np.ndarray:
    if dist == "uniform01":
        return rng.uniform(0.0, 1.0, size=size)
    if dist == "absnormal":
        return np.abs(rng.standard_normal(size))
    if dist == "beta22":
        return rng.beta(2.0, 2.0, size=size)
    raise ValueError(f"unknown distribution {dist!r}; choose from {_DISTRIBUTIONS}")


def lambda_from_rows(rows: np.ndarray) -> float:
    """Largest eigenvalue of R^T R for the triangular factor of rows = RQ."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    R = scipy.linalg.rq(rows, mode="economic")[0]
    return float(np.linalg.eigvalsh(R.T @ R)[-1])


def estimate_lambda_max(
    n: int,
    distribution: str = "uniform01",
    trials: int = 1000,
    rng_seed: int = 0,
    max_attempts_per_trial: int = 200,
) -> LambdaStudyResult:
    """Monte-Carlo estimate of the constraint-subset eigenvalue bound.

    Per trial: draw a reference normal vector with entries from the chosen
    distribution, then n candidate vectors that are sign-coherent (each
    entrywise >= 0 or <= 0, orthant picked with probability 0.5). Candidates
    with a negative inner product against the reference are discarded; the
    survivors are stacked as matrix rows and the largest eigenvalue of
    R^T R from the RQ factorization is recorded. Returns the mean and max
    over trials. Deterministic given rng_seed.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if distribution not in _DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}; choose from {_DISTRIBUTIONS}")
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, n, _DISTRIBUTIONS.index(distribution)]))
    values = np.empty(trials)
    for t in range(trials):
        for attempt in range(max_attempts_per_trial):
            normal = _draw(distribution, n, rng)
            signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
            cand = signs[:, None] * _draw(distribution, (n, n), rng)
            keep = cand @ normal >= 0.0
            if np.any(keep):
                values[t] = lambda_from_rows(cand[keep])
                break
        else:
            raise LambdaStudyError(n, distribution, max_attempts_per_trial)
    return LambdaStudyResult(
        n=n,
        distribution=distribution,
        trials=trials,
        mean=float(np.mean(values)),
        max=float(np.max(values)),
    )


def fit_lambda_curve(samples) -> tuple[float, float, float, float]:
    """Quadratic least-squares fit (a2, a1, a0, r_squared) of (n, lambda) pairs."""
    pts = np.asarray(list(samples), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("samples must be (n, lambda) pairs")
    xs, ys = pts[:, 0], pts[:, 1]
    if len(np.unique(xs)) < 3:
        raise ValueError("need at least 3 distinct n values for a quadratic fit")
    coeffs = np.polyfit(xs, ys, 2)
    fitted = np.polyval(coeffs, xs)
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(coeffs[0]), float(coeffs[1]), float(coeffs[2]), r2
