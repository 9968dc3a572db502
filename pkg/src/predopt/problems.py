"""Optimization problem families with soft constraints.

Three concave objective families over hard constraints Ax <= b, Bx = c,
x >= 0, each carrying a soft-constraint penalty alpha^T max(Cx - d, 0):

* linear:      theta^T x - alpha^T max(Cx - d, 0)
* quadratic:   theta^T x - x^T Q x - alpha^T max(Cx - d, 0)
* asymmetric:  -alpha1^T max(Cx - d, 0) - alpha2^T max(d - Cx, 0)

Hard constraints can be folded into the penalty term as well, producing a
single stacked system (Cp, dp, gamma) whose unconstrained objective
g(x) - gamma^T max(Cp x - dp, 0) matches the penalized problem.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Family",
    "PredictionTarget",
    "RowKind",
    "ProblemValidationError",
    "SuboptimalReference",
    "ProblemInstance",
    "UnifiedForm",
    "unify",
    "true_objective",
    "feasibility_violation",
    "regret",
    "problem_to_json",
    "problem_from_json",
]


class Family(enum.Enum):
    LINEAR = "linear_soft"
    QUADRATIC = "quadratic_soft"
    ASYMMETRIC = "asymmetric_soft"


class PredictionTarget(enum.Enum):
    THETA = "theta"
    Q = "Q"
    C = "C"


class RowKind(enum.Enum):
    """Provenance of a stacked penalty row."""

    SOFT_ORIGINAL = "soft_original"
    SOFT_SECOND = "soft_second"
    INEQ = "ineq"
    EQ_PLUS = "eq_plus"
    EQ_MINUS = "eq_minus"
    NONNEG = "nonneg"


class ProblemValidationError(ValueError):
    """Raised when instance data violates the family's structural contract."""

    def __init__(self, field_name: str, message: str):
        self.field_name = field_name
        super().__init__(f"{field_name}: {message}")


class SuboptimalReference(ValueError):
    """Raised by regret() when the reference point is provably not optimal."""


def _as_matrix(a, rows_hint: int | None, n: int, name: str) -> np.ndarray:
    a = np.zeros((0, n), dtype=float) if a is None else np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        a = a.reshape(0, n)
    if a.ndim != 2 or a.shape[1] != n:
        raise ProblemValidationError(name, f"expected shape (*, {n}), got {a.shape}")
    if rows_hint is not None and a.shape[0] != rows_hint:
        raise ProblemValidationError(name, f"expected {rows_hint} rows, got {a.shape[0]}")
    return a


def _as_vector(v, length: int, name: str) -> np.ndarray:
    v = np.zeros(0, dtype=float) if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (length,):
        raise ProblemValidationError(name, f"expected shape ({length},), got {v.shape}")
    return v


@dataclass
class ProblemInstance:
    """One optimization task; validated and row-normalized on construction.

    Hard-constraint rows (A, B) are scaled to unit norm with b, c scaled
    alongside, so the penalty-bound assumptions hold; the applied scales
    are kept in ``a_row_scale``/``b_row_scale`` for original-scale
    reporting. Soft rows C stay exactly as given.
    """

    family: Family
    n: int
    theta: np.ndarray | None = None
    Q: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    B: np.ndarray | None = None
    c: np.ndarray | None = None
    C: np.ndarray | None = None
    d: np.ndarray | None = None
    alpha: np.ndarray | None = None
    alpha2: np.ndarray | None = None
    prediction_target: PredictionTarget = PredictionTarget.THETA
    a_row_scale: np.ndarray = field(default=None, repr=False)
    b_row_scale: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n <= 0:
            raise ProblemValidationError("n", "must be a positive integer")
        self.n = n
        self.family = Family(self.family)
        self.prediction_target = PredictionTarget(self.prediction_target)

        self.A = _as_matrix(self.A, None, n, "A")
        self.b = _as_vector(self.b, self.A.shape[0], "b")
        self.B = _as_matrix(self.B, None, n, "B")
        self.c = _as_vector(self.c, self.B.shape[0], "c")
        self.C = _as_matrix(self.C, None, n, "C")
        self.d = _as_vector(self.d, self.C.shape[0], "d")
        self.alpha = _as_vector(self.alpha, self.C.shape[0], "alpha")

        if self.family is Family.ASYMMETRIC:
            if self.theta is not None:
                raise ProblemValidationError("theta", "asymmetric family has no linear objective term")
            self.alpha2 = _as_vector(self.alpha2, self.C.shape[0], "alpha2")
            if np.any(self.alpha2 < 0):
                raise ProblemValidationError("alpha2", "must be entrywise nonnegative")
        else:
            if self.alpha2 is not None:
                raise ProblemValidationError("alpha2", "only the asymmetric family carries a second weight")
            self.theta = _as_vector(self.theta, n, "theta")

        if self.family is Family.QUADRATIC:
            self.Q = np.asarray(self.Q, dtype=float)
            if self.Q.shape != (n, n):
                raise ProblemValidationError("Q", f"expected shape ({n}, {n}), got {self.Q.shape}")
            if not np.allclose(self.Q, self.Q.T, atol=1e-10):
                raise ProblemValidationError("Q", "must be symmetric")
            if np.linalg.eigvalsh(self.Q)[0] < -1e-10:
                raise ProblemValidationError("Q", "must be positive semi-definite")
        elif self.Q is not None:
            raise ProblemValidationError("Q", "only the quadratic family carries a risk matrix")

        for name in ("A", "b", "B", "c", "alpha"):
            if np.any(getattr(self, name) < 0):
                raise ProblemValidationError(name, "must be entrywise nonnegative")
        for name in ("A", "b", "B", "c", "C", "d", "alpha", "theta", "Q", "alpha2"):
            arr = getattr(self, name)
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ProblemValidationError(name, "contains non-finite entries")

        self.A, self.b, self.a_row_scale = self._normalize_rows(self.A, self.b, self.a_row_scale, "A")
        self.B, self.c, self.b_row_scale = self._normalize_rows(self.B, self.c, self.b_row_scale, "B")

    @staticmethod
    def _normalize_rows(mat, rhs, existing_scale, name):
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms < 1e-12):
            raise ProblemValidationError(name, "contains a zero row")
        if existing_scale is not None and np.allclose(norms, 1.0, atol=1e-12):
            # already normalized (e.g. re-validated through dataclasses.replace)
            return mat, rhs, np.asarray(existing_scale, dtype=float)
        return mat / norms[:, None], rhs / norms, norms

    @property
    def m1(self) -> int:
        return self.A.shape[0]

    @property
    def m2(self) -> int:
        return self.B.shape[0]

    @property
    def m3(self) -> int:
        return self.C.shape[0]

    def with_theta(self, theta) -> "ProblemInstance":
        return replace(self, theta=np.asarray(theta, dtype=float))

    def with_Q(self, Q) -> "ProblemInstance":
        return replace(self, Q=np.asarray(Q, dtype=float))

    def with_C(self, C) -> "ProblemInstance":
        return replace(self, C=np.asarray(C, dtype=float))

    def predicted_block(self) -> np.ndarray:
        if self.prediction_target is PredictionTarget.THETA:
            return self.theta
        if self.prediction_target is PredictionTarget.Q:
            return self.Q
        return self.C

    def with_predicted_block(self, value) -> "ProblemInstance":
        value = np.asarray(value, dtype=float)
        if self.prediction_target is PredictionTarget.THETA:
            return self.with_theta(value)
        if self.prediction_target is PredictionTarget.Q:
            return self.with_Q(value.reshape(self.n, self.n))
        return self.with_C(value.reshape(self.m3, self.n))


@dataclass
class UnifiedForm:
    """Stacked penalty system: all constraints as gamma^T max(Cp x - dp, 0)."""

    Cp: np.ndarray
    dp: np.ndarray
    gamma: np.ndarray
    row_kind: list[RowKind]

    @property
    def rows(self) -> int:
        return self.Cp.shape[0]

    def kind_index(self, kind: RowKind) -> np.ndarray:
        return np.array([i for i, k in enumerate(self.row_kind) if k is kind], dtype=int)


def unify(problem: ProblemInstance, beta: float) -> UnifiedForm:
    """Stack hard and soft constraints into one penalty system.

    Linear/quadratic stacking is [C; A; -B; B; -I] against [d; b; -c; c; 0];
    the asymmetric family mirrors its soft block and keeps nonnegativity
    rows ahead of the equality pair: [C; -C; A; -I; B; -B].  Every
    hard-constraint row receives the single multiplier ``beta``; soft rows
    keep their own alpha weights.
    """
    if not beta > 0:
        raise ProblemValidationError("beta", "must be strictly positive")
    n = problem.n
    eye = np.eye(n)
    blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, RowKind]] = []

    def block(mat, rhs, weights, kind):
        if mat.shape[0]:
            blocks.append((mat, rhs, weights, kind))

    bvec = np.full(problem.m1, beta)
    beq = np.full(problem.m2, beta)
    bnn = np.full(n, beta)

    if problem.family is Family.ASYMMETRIC:
        block(problem.C, problem.d, problem.alpha, RowKind.SOFT_ORIGINAL)
        block(-problem.C, -problem.d, problem.alpha2, RowKind.SOFT_SECOND)
        block(problem.A, problem.b, bvec, RowKind.INEQ)
        block(-eye, np.zeros(n), bnn, RowKind.NONNEG)
        block(problem.B, problem.c, beq, RowKind.EQ_PLUS)
        block(-problem.B, -problem.c, beq, RowKind.EQ_MINUS)
    else:
        block(problem.C, problem.d, problem.alpha, RowKind.SOFT_ORIGINAL)
        block(problem.A, problem.b, bvec, RowKind.INEQ)
        block(-problem.B, -problem.c, beq, RowKind.EQ_MINUS)
        block(problem.B, problem.c, beq, RowKind.EQ_PLUS)
        block(-eye, np.zeros(n), bnn, RowKind.NONNEG)

    Cp = np.vstack([blk[0] for blk in blocks])
    dp = np.concatenate([blk[1] for blk in blocks])
    gamma = np.concatenate([blk[2] for blk in blocks])
    kinds: list[RowKind] = []
    for blk in blocks:
        kinds.extend([blk[3]] * blk[0].shape[0])
    return UnifiedForm(Cp=Cp, dp=dp, gamma=gamma, row_kind=kinds)


def true_objective(problem: ProblemInstance, x) -> float:
    """Evaluate the nonsmooth objective of the instance's family at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n,):
        raise ProblemValidationError("x", f"expected shape ({problem.n},), got {x.shape}")
    soft = problem.C @ x - problem.d
    if problem.family is Family.ASYMMETRIC:
        return float(-(problem.alpha @ np.maximum(soft, 0.0)) - problem.alpha2 @ np.maximum(-soft, 0.0))
    value = problem.theta @ x - problem.alpha @ np.maximum(soft, 0.0)
    if problem.family is Family.QUADRATIC:
        value -= x @ problem.Q @ x
    return float(value)


def feasibility_violation(problem: ProblemInstance, x) -> float:
    """Largest hard-constraint violation at x, in the original row scale."""
    x = np.asarray(x, dtype=float)
    worst = 0.0
    if problem.m1:
        worst = max(worst, float(np.max((problem.A @ x - problem.b) * problem.a_row_scale)))
    if problem.m2:
        worst = max(worst, float(np.max(np.abs(problem.B @ x - problem.c) * problem.b_row_scale)))
    worst = max(worst, float(np.max(-x, initial=0.0)))
    return worst


def regret(
    problem_true: ProblemInstance,
    x_hat,
    x_star,
    *,
    feas_tol: float = 1e-6,
    suboptimal_tol: float = 1e-8,
) -> float:
    """Decision-quality gap true_objective(x_star) - true_objective(x_hat).

    x_star must be an optimum of the true problem; if a feasible x_hat
    beats it by more than ``suboptimal_tol`` that precondition is provably
    violated and SuboptimalReference is raised. An infeasible x_hat is
    evaluated as-is (no projection); callers report the violation via
    feasibility_violation.
    """
    value = true_objective(problem_true, x_star) - true_objective(problem_true, x_hat)
    if value < -suboptimal_tol and feasibility_violation(problem_true, x_hat) <= feas_tol:
        raise SuboptimalReference(
            f"x_star is not optimal: feasible x_hat improves the objective by {-value:.3e}"
        )
    return float(value)


def _maybe(arr) -> list | None:
    return None if arr is None else np.asarray(arr).tolist()


def problem_to_json(problem: ProblemInstance, path=None) -> str:
    """Serialize to the documented JSON schema (matrices as nested lists)."""
    payload = {
        "objective_family": problem.family.value,
        "prediction_target": problem.prediction_target.value,
        "n": problem.n,
        "theta": _maybe(problem.theta),
        "Q": _maybe(problem.Q),
        "A": problem.A.tolist(),
        "b": problem.b.tolist(),
        "B": problem.B.tolist(),
        "c": problem.c.tolist(),
        "C": problem.C.tolist(),
        "d": problem.d.tolist(),
        "alpha": problem.alpha.tolist(),
        "alpha2": _maybe(problem.alpha2),
        "a_row_scale": problem.a_row_scale.tolist(),
        "b_row_scale": problem.b_row_scale.tolist(),
    }
    text = json.dumps(payload, indent=2)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def problem_from_json(source) -> ProblemInstance:
    """Inverse of problem_to_json; accepts a JSON string or a file path."""
    if isinstance(source, (str, bytes)) and not str(source).lstrip().startswith("{"):
        with open(source, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    elif isinstance(source, (str, bytes)):
        payload = json.loads(source)
    else:
        payload = json.load(source)
    return ProblemInstance(
        family=Family(payload["objective_family"]),
        n=int(payload["n"]),
        theta=payload.get("theta"),
        Q=payload.get("Q"),
        A=payload.get("A"),
        b=payload.get("b"),
        B=payload.get("B"),
        c=payload.get("c"),
        C=payload.get("C"),
        d=payload.get("d"),
        alpha=payload.get("alpha"),
        alpha2=payload.get("alpha2"),
        prediction_target=PredictionTarget(payload["prediction_target"]),
        a_row_scale=payload.get("a_row_scale"),
        b_row_scale=payload.get("b_row_scale"),
    )
