"""Piecewise-quadratic smoothing of max(z, 0) and its closed-form calculus.

The smoother S has three pieces split at z = -1/(4K) and z = +1/(4K):
zero on the left, K(z + 1/(4K))^2 in the band, and the identity on the
right.  It is C^1, convex, and within 1/(16K) of max(z, 0) everywhere.
Because the middle piece is quadratic, fixing which piece each penalty
row occupies turns the stationarity condition into a linear system, so
the maximizer and its Jacobian with respect to any problem parameter
come out in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Family, ProblemInstance, RowKind, UnifiedForm, unify

__all__ = [
    "SingularSystem",
    "SegmentState",
    "s_value",
    "s_grad",
    "segment_state",
    "breakpoint_distance",
    "surrogate_objective",
    "surrogate_grad_x",
    "closed_form_x",
    "jacobian_x_theta",
    "grad_loss_theta",
    "grad_loss_Q",
    "grad_loss_C",
]

COND_LIMIT = 1e12


class SingularSystem(RuntimeError):
    """The segment-restricted system matrix is not (safely) invertible.

    Raised when fewer than n independent penalty rows sit on the quadratic
    segment, or the condition number exceeds COND_LIMIT. Carries the
    numerical rank so callers can diagnose bad K/beta configurations.
    """

    def __init__(self, rank: int, n: int, cond: float | None = None):
        self.rank = rank
        self.n = n
        self.cond = cond
        detail = f"rank {rank} < {n}" if rank < n else f"condition number {cond:.3e}"
        super().__init__(f"segment system not invertible ({detail})")


@dataclass
class SegmentState:
    """Diagonal indicators locating each penalty row on its S-piece.

    m_diag[i] = 2K when z_i is in the closed middle band, else 0;
    u_diag[i] = 1 when z_i is strictly beyond the right breakpoint.
    """

    m_diag: np.ndarray
    u_diag: np.ndarray
    K: float

    def __post_init__(self):
        if np.any((self.m_diag != 0.0) & (self.u_diag != 0.0)):
            raise ValueError("segments are exclusive: a row cannot be quadratic and linear")

    def same_as(self, other: "SegmentState") -> bool:
        return (
            self.K == other.K
            and np.array_equal(self.m_diag, other.m_diag)
            and np.array_equal(self.u_diag, other.u_diag)
        )

    def signature(self) -> bytes:
        return (self.m_diag != 0.0).tobytes() + (self.u_diag != 0.0).tobytes()


def _check_K(K: float):
    if not K > 0:
        raise ValueError("K must be strictly positive")


def s_value(z, K: float):
    """S(z): 0 left of -1/(4K), K(z+1/(4K))^2 in the band, z right of 1/(4K)."""
    _check_K(K)
    z = np.asarray(z, dtype=float)
    q = 1.0 / (4.0 * K)
    out = np.where(z < -q, 0.0, np.where(z > q, z, K * (z + q) ** 2))
    return float(out) if out.ndim == 0 else out


def s_grad(z, K: float):
    """dS/dz: 0, 2K(z+1/(4K)), or 1; both one-sided limits agree at the breakpoints."""
    _check_K(K)
    z = np.asarray(z, dtype=float)
    q = 1.0 / (4.0 * K)
    out = np.where(z < -q, 0.0, np.where(z > q, 1.0, 2.0 * K * (z + q)))
    return float(out) if out.ndim == 0 else out


def segment_state(z, K: float) -> SegmentState:
    """Classify each z entry onto its S-piece; breakpoint ties go to the band."""
    _check_K(K)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    q = 1.0 / (4.0 * K)
    in_band = (z >= -q) & (z <= q)
    return SegmentState(
        m_diag=np.where(in_band, 2.0 * K, 0.0),
        u_diag=np.where(z > q, 1.0, 0.0),
        K=float(K),
    )


def breakpoint_distance(z, K: float) -> float:
    """Smallest distance from any z entry to a segment breakpoint."""
    _check_K(K)
    z = np.asarray(z, dtype=float)
    q = 1.0 / (4.0 * K)
    return float(np.min(np.minimum(np.abs(z - q), np.abs(z + q))))


def _objective_linear_part(problem: ProblemInstance, x: np.ndarray) -> float:
    if problem.family is Family.ASYMMETRIC:
        return 0.0
    value = float(problem.theta @ x)
    if problem.family is Family.QUADRATIC:
        value -= float(x @ problem.Q @ x)
    return value


def surrogate_objective(uf: UnifiedForm, problem: ProblemInstance, x, K: float) -> float:
    """g(x) minus the gamma-weighted smoothed penalties; concave in x."""
    x = np.asarray(x, dtype=float)
    z = uf.Cp @ x - uf.dp
    return _objective_linear_part(problem, x) - float(uf.gamma @ s_value(z, K))


def surrogate_grad_x(
    uf: UnifiedForm,
    problem: ProblemInstance,
    x,
    K: float,
    state: SegmentState | None = None,
) -> np.ndarray:
    """Exact gradient of surrogate_objective at x.

    With ``state`` given, the segment indicators are frozen to it (the
    training path evaluates the true-parameter gradient on a previously
    determined segment); otherwise they are read off z = Cp x - dp.
    """
    x = np.asarray(x, dtype=float)
    z = uf.Cp @ x - uf.dp
    if state is None:
        state = segment_state(z, K)
    m, u = state.m_diag, state.u_diag
    penalty = uf.Cp.T @ (m * uf.gamma * z) + uf.Cp.T @ ((m / (4.0 * K) + u) * uf.gamma)
    if problem.family is Family.ASYMMETRIC:
        lead = np.zeros(problem.n)
    elif problem.family is Family.QUADRATIC:
        lead = problem.theta - 2.0 * problem.Q @ x
    else:
        lead = problem.theta.copy()
    return lead - penalty


def _system_matrix(uf: UnifiedForm, problem: ProblemInstance, state: SegmentState) -> np.ndarray:
    w = state.m_diag * uf.gamma
    H = uf.Cp.T @ (w[:, None] * uf.Cp)
    if problem.family is Family.QUADRATIC:
        H = H + 2.0 * problem.Q
    return H


def _guarded_inverse(H: np.ndarray, n: int) -> np.ndarray:
    evals = np.linalg.eigvalsh(H)
    tiny = max(evals[-1], 0.0) * 1e-12
    rank = int(np.sum(evals > tiny))
    if evals[0] <= 0.0 or rank < n:
        raise SingularSystem(rank=rank, n=n)
    cond = evals[-1] / evals[0]
    if cond > COND_LIMIT:
        raise SingularSystem(rank=rank, n=n, cond=cond)
    return np.linalg.inv(H)


def _stationarity_rhs(uf: UnifiedForm, problem: ProblemInstance, state: SegmentState, K: float) -> np.ndarray:
    m, u = state.m_diag, state.u_diag
    rhs = uf.Cp.T @ (m * uf.gamma * uf.dp) - uf.Cp.T @ ((m / (4.0 * K) + u) * uf.gamma)
    if problem.family is not Family.ASYMMETRIC:
        rhs = rhs + problem.theta
    return rhs


def closed_form_x(uf: UnifiedForm, problem: ProblemInstance, state: SegmentState, K: float) -> np.ndarray:
    """Maximizer of the surrogate restricted to the given segment assignment.

    Solves H x = theta + Cp^T M diag(gamma) dp - Cp^T (M/(4K) + U) gamma,
    with H the segment-restricted curvature (plus 2Q for the quadratic
    family). Raises SingularSystem when the band rows do not pin down x.
    """
    H = _system_matrix(uf, problem, state)
    rhs = _stationarity_rhs(uf, problem, state, K)
    return _guarded_inverse(H, problem.n) @ rhs


def jacobian_x_theta(uf: UnifiedForm, problem: ProblemInstance, state: SegmentState, K: float) -> np.ndarray:
    """d x / d theta on the frozen segment: the inverse system matrix H^-1."""
    del K  # the Jacobian depends on the segment only through H
    H = _system_matrix(uf, problem, state)
    return _guarded_inverse(H, problem.n)


def grad_loss_theta(
    uf: UnifiedForm,
    problem_true: ProblemInstance,
    x_hat,
    state: SegmentState,
    K: float,
) -> np.ndarray:
    """Upstream gradient of the decision value with respect to predicted theta.

    Chains the frozen-segment Jacobian H^-1 (predicted system) with the
    true-parameter surrogate gradient at the solved point.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    jac = jacobian_x_theta(uf, problem_true, state, K)
    downstream = surrogate_grad_x(uf, problem_true, x_hat, K)
    return jac @ downstream


def grad_loss_Q(
    uf: UnifiedForm,
    problem_true: ProblemInstance,
    x_hat,
    state: SegmentState,
    K: float,
    Q_hat: np.ndarray,
) -> np.ndarray:
    """Gradient of the decision value with respect to a predicted risk matrix.

    With R the inverse predicted system and beta the stationarity
    right-hand side under true theta, the gradient is the rank-one matrix
    2 p x^T where p = R (R_real^-1 x - beta).
    """
    if problem_true.family is not Family.QUADRATIC:
        raise ValueError("risk-matrix gradients require the quadratic family")
    x_hat = np.asarray(x_hat, dtype=float)
    Q_hat = np.asarray(Q_hat, dtype=float)
    w = state.m_diag * uf.gamma
    S = uf.Cp.T @ (w[:, None] * uf.Cp)
    R = _guarded_inverse(2.0 * Q_hat + S, problem_true.n)
    beta_real = _stationarity_rhs(uf, problem_true, state, K)
    p = R @ ((2.0 * problem_true.Q + S) @ x_hat - beta_real)
    return 2.0 * np.outer(p, x_hat)


def grad_loss_C(
    uf: UnifiedForm,
    problem_true: ProblemInstance,
    x_hat,
    state: SegmentState,
    K: float,
    C_hat: np.ndarray,
) -> np.ndarray:
    """Gradient of the decision value with respect to a predicted soft matrix.

    ``uf`` must be the unified form built from C_hat (the predicted
    system); the true-parameter gradient is rebuilt internally with the
    same hard-constraint multiplier. Contributions of the +C and -C blocks
    are accumulated into the original C shape with opposite signs.
    """
    if problem_true.family is not Family.ASYMMETRIC:
        raise ValueError("soft-matrix gradients require the asymmetric family")
    x_hat = np.asarray(x_hat, dtype=float)
    C_hat = np.asarray(C_hat, dtype=float)
    soft_idx = uf.kind_index(RowKind.SOFT_ORIGINAL)
    soft2_idx = uf.kind_index(RowKind.SOFT_SECOND)
    if not np.allclose(uf.Cp[soft_idx], C_hat, atol=0.0):
        raise ValueError("uf must be the unified form of the predicted C_hat")

    nonneg_idx = uf.kind_index(RowKind.NONNEG)
    beta = float(uf.gamma[nonneg_idx[0]])
    uf_true = unify(problem_true, beta)

    m, u = state.m_diag, state.u_diag
    w = m * uf.gamma
    P = _guarded_inverse(uf.Cp.T @ (w[:, None] * uf.Cp), problem_true.n)
    eta = w * uf.dp - (m / (4.0 * K) + u) * uf.gamma

    g = surrogate_grad_x(uf_true, problem_true, x_hat, K)
    v = P @ g
    a = w * (uf.Cp @ x_hat)
    uvec = w * (uf.Cp @ v)
    full = np.outer(eta - a, v) - np.outer(uvec, x_hat)
    return full[soft_idx] - full[soft2_idx]
