"""Reference solvers for the three problem families plus test oracles.

* linear/asymmetric families: rewritten as pure LPs with epigraph slacks
  z >= Cx - d, z >= 0 (mirrored for the asymmetric family) and solved by
  a dense two-phase simplex with Bland's rule.
* quadratic family: projected (sub)gradient descent with an exact
  waterline projection onto {w^T x = c, x >= 0}, an active-pattern
  refinement pass, and a bounded-least-squares KKT certificate.
* the surrogate problem: segment-fixing Newton iteration with a damped
  gradient-ascent fallback.
* a brute-force grid oracle for cross-validation in tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .problems import (
    Family,
    ProblemInstance,
    UnifiedForm,
    feasibility_violation,
    true_objective,
)
from .surrogate import (
    SegmentState,
    SingularSystem,
    _guarded_inverse,
    _system_matrix,
    closed_form_x,
    segment_state,
    surrogate_grad_x,
    surrogate_objective,
)

__all__ = [
    "SolveStatus",
    "SolveReport",
    "simplex_solve",
    "project_affine_nonneg",
    "solve_original",
    "solve_surrogate",
    "brute_force_oracle",
]


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class SolveReport:
    x_opt: np.ndarray
    objective: float
    iterations: int
    status: SolveStatus
    residual: float


# ---------------------------------------------------------------------------
# Dense two-phase simplex (maximize c^T v, A_ub v <= b_ub, A_eq v = b_eq, v >= 0)

_PIVOT_TOL = 1e-10


def _pivot(T: np.ndarray, row: int, col: int):
    T[row] /= T[row, col]
    column = T[:, col].copy()
    column[row] = 0.0
    T -= np.outer(column, T[row])


def _run_simplex(T: np.ndarray, basis: list[int], limit: int) -> tuple[str, int]:
    """Dantzig pricing, switching to Bland's rule on a degenerate stall.

    Bland's smallest-index rule guarantees termination but is slow; the
    most-negative rule is fast but can cycle on degenerate bases. The
    stall counter hands over to Bland permanently once the objective has
    not moved for 2(m+1) consecutive pivots, keeping both properties.
    """
    used = 0
    ncols = T.shape[1] - 1
    stall_limit = 2 * T.shape[0]
    stalled = 0
    bland = False
    while used < limit:
        zrow = T[-1, :ncols]
        if bland:
            improving = np.nonzero(zrow < -_PIVOT_TOL)[0]
            if improving.size == 0:
                return "optimal", used
            col = int(improving[0])
        else:
            col = int(np.argmin(zrow))
            if zrow[col] >= -_PIVOT_TOL:
                return "optimal", used
        ratios = np.full(T.shape[0] - 1, np.inf)
        positive = T[:-1, col] > _PIVOT_TOL
        ratios[positive] = T[:-1, -1][positive] / T[:-1, col][positive]
        best = np.min(ratios)
        if not np.isfinite(best):
            return "unbounded", used
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        row = int(min(ties, key=lambda r: basis[r]))
        before = T[-1, -1]
        _pivot(T, row, col)
        basis[row] = col
        used += 1
        if not bland:
            stalled = stalled + 1 if T[-1, -1] <= before + 1e-12 else 0
            if stalled >= stall_limit:
                bland = True
    return "max_iter", used


def simplex_solve(
    c: np.ndarray,
    A_ub: np.ndarray | None = None,
    b_ub: np.ndarray | None = None,
    A_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    max_pivots: int = 50_000,
) -> tuple[SolveStatus, np.ndarray, int]:
    """Maximize c^T v over A_ub v <= b_ub, A_eq v = b_eq, v >= 0."""
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, dtype=float))
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, dtype=float))

    rows = []
    senses = []
    for ai, bi in zip(A_ub, b_ub):
        if bi < 0:
            rows.append((-ai, -bi, "ge"))
        else:
            rows.append((ai, bi, "le"))
        senses.append(rows[-1][2])
    for ai, bi in zip(A_eq, b_eq):
        if bi < 0:
            rows.append((-ai, -bi, "eq"))
        else:
            rows.append((ai, bi, "eq"))
        senses.append("eq")
    m = len(rows)

    ns = sum(1 for r in rows if r[2] == "le")
    nt = sum(1 for r in rows if r[2] == "ge")
    na = sum(1 for r in rows if r[2] in ("ge", "eq"))
    total = nv + ns + nt + na
    T = np.zeros((m + 1, total + 1))
    sbase, tbase, abase = nv, nv + ns, nv + ns + nt
    si = ti = ai_ = 0
    basis: list[int] = []
    for i, (arow, rhs, sense) in enumerate(rows):
        T[i, :nv] = arow
        T[i, -1] = rhs
        if sense == "le":
            T[i, sbase + si] = 1.0
            basis.append(sbase + si)
            si += 1
        elif sense == "ge":
            T[i, tbase + ti] = -1.0
            T[i, abase + ai_] = 1.0
            basis.append(abase + ai_)
            ti += 1
            ai_ += 1
        else:
            T[i, abase + ai_] = 1.0
            basis.append(abase + ai_)
            ai_ += 1

    pivots = 0
    if na:
        # phase 1: maximize minus the artificial sum
        for r, bc in enumerate(basis):
            if bc >= abase:
                T[-1] -= T[r]
        T[-1, abase : abase + na] += 1.0
        outcome, used = _run_simplex(T, basis, max_pivots)
        pivots += used
        if outcome != "optimal":
            return SolveStatus.MAX_ITER, _extract(T, basis, nv), pivots
        if T[-1, -1] < -1e-7:
            return SolveStatus.INFEASIBLE, _extract(T, basis, nv), pivots
        # drive artificial variables out of the basis; rows that cannot be
        # pivoted are redundant and dropped with their artificial basic
        for r, bc in enumerate(basis):
            if bc >= abase:
                candidates = np.nonzero(np.abs(T[r, :abase]) > _PIVOT_TOL)[0]
                if candidates.size:
                    _pivot(T, r, int(candidates[0]))
                    basis[r] = int(candidates[0])
        keep_rows = [r for r, bc in enumerate(basis) if bc < abase]
        col_idx = list(range(abase)) + [T.shape[1] - 1]
        T = np.vstack([T[keep_rows][:, col_idx], np.zeros(abase + 1)])
        basis = [basis[r] for r in keep_rows]

    # phase 2
    T[-1, :] = 0.0
    T[-1, :nv] = -c
    for r, bc in enumerate(basis):
        if bc < nv and abs(c[bc]) > 0.0:
            T[-1] += c[bc] * T[r]
    outcome, used = _run_simplex(T, basis, max_pivots)
    pivots += used
    x = _extract(T, basis, nv)
    if outcome == "unbounded":
        return SolveStatus.UNBOUNDED, x, pivots
    if outcome == "max_iter":
        return SolveStatus.MAX_ITER, x, pivots
    return SolveStatus.OPTIMAL, x, pivots


def _extract(T: np.ndarray, basis: list[int], nv: int) -> np.ndarray:
    x = np.zeros(T.shape[1] - 1)
    for r, bc in enumerate(basis):
        x[bc] = T[r, -1]
    return np.maximum(x[:nv], 0.0)


# ---------------------------------------------------------------------------
# Epigraph rewrites


def _slack_lp(problem: ProblemInstance):
    """LP data (c, A_ub, b_ub, A_eq, b_eq) for the slack rewrite of the instance."""
    n, m1, m2, m3 = problem.n, problem.m1, problem.m2, problem.m3
    if problem.family is Family.LINEAR:
        nv = n + m3
        c = np.concatenate([problem.theta, -problem.alpha])
        A_ub = np.zeros((m1 + m3, nv))
        A_ub[:m1, :n] = problem.A
        A_ub[m1:, :n] = problem.C
        A_ub[m1:, n:] = -np.eye(m3)
        b_ub = np.concatenate([problem.b, problem.d])
    elif problem.family is Family.ASYMMETRIC:
        nv = n + 2 * m3
        c = np.concatenate([np.zeros(n), -problem.alpha, -problem.alpha2])
        A_ub = np.zeros((m1 + 2 * m3, nv))
        A_ub[:m1, :n] = problem.A
        A_ub[m1 : m1 + m3, :n] = problem.C
        A_ub[m1 : m1 + m3, n : n + m3] = -np.eye(m3)
        A_ub[m1 + m3 :, :n] = -problem.C
        A_ub[m1 + m3 :, n + m3 :] = -np.eye(m3)
        b_ub = np.concatenate([problem.b, problem.d, -problem.d])
    else:
        raise ValueError("slack LP rewrite applies to the linear and asymmetric families")
    A_eq = np.zeros((m2, nv))
    A_eq[:, :n] = problem.B
    return c, A_ub, b_ub, A_eq, problem.c.copy()


def extended_cost_vector(problem: ProblemInstance, theta: np.ndarray) -> np.ndarray:
    """Cost vector of the slack LP with a substituted theta block."""
    if problem.family is not Family.LINEAR:
        raise ValueError("extended cost vectors exist for the linear family only")
    return np.concatenate([np.asarray(theta, dtype=float), -problem.alpha])


def solve_extended_lp(problem: ProblemInstance, cost: np.ndarray) -> np.ndarray:
    """Solve the slack LP under an arbitrary extended cost; returns the full v."""
    _, A_ub, b_ub, A_eq, b_eq = _slack_lp(problem)
    status, v, _ = simplex_solve(cost, A_ub, b_ub, A_eq, b_eq)
    if status is not SolveStatus.OPTIMAL:
        raise RuntimeError(f"extended LP solve failed with status {status.value}")
    return v


# ---------------------------------------------------------------------------
# Projection onto {x >= 0} intersected with one nonnegative equality row


def project_affine_nonneg(y: np.ndarray, w: np.ndarray | None = None, rhs: float = 0.0) -> np.ndarray:
    """Euclidean projection onto {x >= 0, w^T x = rhs} (w entrywise >= 0).

    Exact waterline algorithm over the sorted breakpoints y_i / w_i; with
    no equality row this is a clip at zero. Coordinates with w_i = 0 are
    unaffected by the equality and clip independently.
    """
    y = np.asarray(y, dtype=float)
    if w is None:
        return np.maximum(y, 0.0)
    w = np.asarray(w, dtype=float)
    active = w > 0.0
    x = np.maximum(y, 0.0)
    if not np.any(active):
        if abs(rhs) > 1e-12:
            raise ValueError("equality row with all-zero weights cannot meet a nonzero rhs")
        return x
    ya, wa = y[active], w[active]
    # find lam with sum_i w_i * max(y_i - lam*w_i, 0) = rhs
    breaks = ya / wa
    order = np.argsort(breaks)
    yo, wo, bo = ya[order], wa[order], breaks[order]
    # with lam below bo[k], entries k.. are positive
    wy_suffix = np.cumsum((wo * yo)[::-1])[::-1]
    ww_suffix = np.cumsum((wo * wo)[::-1])[::-1]
    lam = None
    for k in range(len(bo)):
        cand = (wy_suffix[k] - rhs) / ww_suffix[k]
        lo = -np.inf if k == 0 else bo[k - 1]
        if lo - 1e-12 <= cand <= bo[k] + 1e-12:
            lam = cand
            break
    if lam is None:
        lam = (wy_suffix[0] - rhs) / ww_suffix[0]
    x[active] = np.maximum(ya - lam * wa, 0.0)
    return x


# ---------------------------------------------------------------------------
# Quadratic-family reference solver


def _qp_objective(problem: ProblemInstance, x: np.ndarray) -> float:
    return -true_objective(problem, x)


def _qp_subgradient(problem: ProblemInstance, x: np.ndarray) -> np.ndarray:
    sigma = (problem.C @ x - problem.d > 0.0).astype(float)
    g = 2.0 * problem.Q @ x - problem.theta
    if problem.m3:
        g = g + problem.C.T @ (problem.alpha * sigma)
    return g


def _qp_pattern_gradient(problem: ProblemInstance, x: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    g = 2.0 * problem.Q @ x - problem.theta
    if problem.m3:
        g = g + problem.C.T @ (problem.alpha * sigma)
    return g


def _qp_projection_args(problem: ProblemInstance):
    if problem.m2 == 0:
        return None, 0.0
    if problem.m2 == 1:
        return problem.B[0], float(problem.c[0])
    raise NotImplementedError("projected-gradient reference solving supports at most one equality row")


def _qp_kkt_residual(problem: ProblemInstance, x: np.ndarray, band: float = 1e-7, xtol: float = 1e-9) -> float:
    """Minimum-norm stationarity violation over admissible KKT multipliers."""
    n = problem.n
    soft = problem.C @ x - problem.d if problem.m3 else np.zeros(0)
    sigma0 = (soft > band).astype(float)
    boundary = np.nonzero(np.abs(soft) <= band)[0]
    base = 2.0 * problem.Q @ x - problem.theta
    if problem.m3:
        base = base + problem.C.T @ (problem.alpha * sigma0)

    cols = []
    lower = []
    upper = []
    for j in boundary:
        cols.append(problem.alpha[j] * problem.C[j])
        lower.append(0.0)
        upper.append(1.0)
    for r in range(problem.m2):
        cols.append(problem.B[r])
        lower.append(-np.inf)
        upper.append(np.inf)
    for i in np.nonzero(x <= xtol)[0]:
        e = np.zeros(n)
        e[i] = -1.0
        cols.append(e)
        lower.append(0.0)
        upper.append(np.inf)
    if not cols:
        return float(np.max(np.abs(base)))
    A_ls = np.array(cols).T
    res = scipy.optimize.lsq_linear(A_ls, -base, bounds=(np.array(lower), np.array(upper)))
    return float(np.max(np.abs(A_ls @ res.x + base)))


def _solve_quadratic(problem: ProblemInstance, tol: float) -> SolveReport:
    n = problem.n
    w, rhs = _qp_projection_args(problem)
    if w is None:
        x = np.zeros(n)
    else:
        x = project_affine_nonneg(np.full(n, rhs / max(np.sum(w), 1e-12)), w, rhs)
    L = 2.0 * float(np.linalg.eigvalsh(problem.Q)[-1]) + 1.0
    if problem.m3:
        L += float(np.sum(problem.alpha * np.linalg.norm(problem.C, axis=1) ** 2))
    step = 1.0 / L
    fx = _qp_objective(problem, x)
    iters = 0
    max_outer = 40
    for _ in range(max_outer):
        # damped projected subgradient descent until progress stalls
        stall = 0
        for _ in range(4000):
            iters += 1
            g = _qp_subgradient(problem, x)
            t = step
            moved = False
            while t > 1e-18:
                cand = project_affine_nonneg(x - t * g, w, rhs)
                fc = _qp_objective(problem, cand)
                if fc <= fx - 1e-14 * max(1.0, abs(fx)):
                    x, fx = cand, fc
                    moved = True
                    step = min(t * 1.5, 1.0 / L * 1e3)
                    break
                t *= 0.5
            if not moved:
                stall += 1
                if stall >= 2:
                    break
            else:
                stall = 0
        # active-pattern polish: minimize the smooth minorant, keep on true descent
        sigma = (problem.C @ x - problem.d >= 0.0).astype(float) if problem.m3 else np.zeros(0)
        y, ty = x.copy(), 1.0
        xp = x.copy()
        tp = 1.0 / L
        for _ in range(5000):
            iters += 1
            g = _qp_pattern_gradient(problem, y, sigma)
            xn = project_affine_nonneg(y - tp * g, w, rhs)
            tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * ty * ty))
            y = xn + (ty - 1.0) / tn * (xn - xp)
            if np.linalg.norm(xn - xp, np.inf) < tol * 1e-2:
                xp = xn
                break
            xp, ty = xn, tn
        fp = _qp_objective(problem, xp)
        if fp < fx - 1e-15:
            x, fx = xp, fp
        residual = _qp_kkt_residual(problem, x)
        if residual <= tol:
            return SolveReport(
                x_opt=x,
                objective=true_objective(problem, x),
                iterations=iters,
                status=SolveStatus.OPTIMAL,
                residual=residual,
            )
    residual = _qp_kkt_residual(problem, x)
    status = SolveStatus.OPTIMAL if residual <= tol else SolveStatus.MAX_ITER
    return SolveReport(
        x_opt=x,
        objective=true_objective(problem, x),
        iterations=iters,
        status=status,
        residual=residual,
    )


def solve_original(problem: ProblemInstance, tol: float = 1e-8) -> SolveReport:
    """Solve the original constrained problem exactly (reference optimum)."""
    if problem.family is Family.QUADRATIC:
        return _solve_quadratic(problem, tol)
    c, A_ub, b_ub, A_eq, b_eq = _slack_lp(problem)
    status, v, pivots = simplex_solve(c, A_ub, b_ub, A_eq, b_eq)
    x = v[: problem.n]
    if status is SolveStatus.OPTIMAL:
        residual = feasibility_violation(problem, x)
        if residual > tol:
            status = SolveStatus.MAX_ITER
    else:
        residual = feasibility_violation(problem, x)
    return SolveReport(
        x_opt=x,
        objective=true_objective(problem, x),
        iterations=pivots,
        status=status,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# Surrogate solver


def solve_surrogate(
    uf: UnifiedForm,
    problem: ProblemInstance,
    K: float,
    tol: float = 1e-8,
    max_newton: int = 500,
    max_fallback: int = 50_000,
) -> tuple[SolveReport, SegmentState]:
    """Maximize the smoothed penalized objective.

    Segment-fixing Newton: classify segments at the iterate, solve the
    frozen linear system, re-classify; converged when the assignment is a
    fixed point and the gradient is below tol. Cycling and singular
    mid-path systems alternate with bounded bursts of damped gradient
    ascent (globally convergent on this concave C^1 objective); a final
    frozen-segment polish lands optima that sit exactly on a breakpoint.
    """
    x = np.zeros(problem.n)
    iters = 0

    def objective(x):
        return surrogate_objective(uf, problem, x, K)

    def gradient(x):
        return surrogate_grad_x(uf, problem, x, K)

    def report(x, status):
        return (
            SolveReport(
                x_opt=x,
                objective=objective(x),
                iterations=iters,
                status=status,
                residual=float(np.max(np.abs(gradient(x)))),
            ),
            segment_state(uf.Cp @ x - uf.dp, K),
        )

    ray_limit = 1e3
    g0 = float(np.max(np.abs(gradient(x))))
    fx = objective(x)
    for _ in range(max_newton):
        iters += 1
        state = segment_state(uf.Cp @ x - uf.dp, K)
        g = gradient(x)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            break
        if np.linalg.norm(x) > ray_limit and gnorm >= 0.5 * g0:
            return report(x, SolveStatus.UNBOUNDED)
        H = _system_matrix(uf, problem, state)
        try:
            direction = _guarded_inverse(H, problem.n) @ g
            exact_jump = True
        except SingularSystem:
            # Levenberg-style damping sized so directions without band
            # curvature move a gradient-scale step, not an exploding one
            mu = max(1e-12, float(np.linalg.norm(g)) / (1.0 + float(np.linalg.norm(x))))
            direction = np.linalg.solve(H + mu * np.eye(problem.n), g)
            exact_jump = False
        dnorm = float(np.linalg.norm(direction))
        cap = 1e3 * (1.0 + float(np.linalg.norm(x)))
        if dnorm > cap:
            direction *= cap / dnorm
            exact_jump = False
        slope = float(g @ direction)
        t, moved = 1.0, False
        while t > 1e-18:
            cand = x + t * direction
            fc = objective(cand)
            if fc >= fx + 1e-4 * t * slope:
                if exact_jump and t == 1.0:
                    new_state = segment_state(uf.Cp @ cand - uf.dp, K)
                    if new_state.same_as(state) and float(np.max(np.abs(gradient(cand)))) <= tol:
                        # segment fixed point: the closed-form landing is exact
                        iters += 1
                        return report(cand, SolveStatus.OPTIMAL)
                x, fx, moved = cand, fc, True
                break
            t *= 0.5
        if not moved:
            break

    if float(np.max(np.abs(gradient(x)))) <= tol:
        return report(x, SolveStatus.OPTIMAL)

    # plain damped gradient ascent as the terminal fallback
    step = 1.0
    for _ in range(max_fallback):
        iters += 1
        g = gradient(x)
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            break
        if np.linalg.norm(x) > ray_limit and gnorm >= 0.5 * g0:
            return report(x, SolveStatus.UNBOUNDED)
        t, moved = step, False
        while t > 1e-18:
            cand = x + t * g
            fc = objective(cand)
            if fc >= fx + 1e-4 * t * float(g @ g):
                x, fx, moved = cand, fc, True
                step = t * 2.0
                break
            t *= 0.5
        if not moved:
            break

    # frozen-segment polish: ascent stalls on the float plateau when the
    # optimum sits exactly on a breakpoint; the linear solve lands it
    for _ in range(5):
        state = segment_state(uf.Cp @ x - uf.dp, K)
        try:
            x_new = closed_form_x(uf, problem, state, K)
        except SingularSystem:
            break
        iters += 1
        if objective(x_new) < objective(x) - 1e-12:
            break
        x = x_new
        if float(np.max(np.abs(gradient(x)))) <= tol:
            break

    status = SolveStatus.OPTIMAL if float(np.max(np.abs(gradient(x)))) <= tol else SolveStatus.MAX_ITER
    return report(x, status)


# ---------------------------------------------------------------------------
# Brute-force grid oracle


def brute_force_oracle(
    problem: ProblemInstance,
    lo,
    hi,
    steps: int,
    mode: str = "constrained",
    uf: UnifiedForm | None = None,
    feas_tol: float = 1e-9,
) -> np.ndarray:
    """Exhaustive grid argmax; ties resolve to the lexicographically smallest point.

    ``constrained`` maximizes the true objective over feasible grid points;
    ``penalized`` maximizes g(x) - gamma^T max(Cp x - dp, 0) over the whole
    grid (requires ``uf``). Only for n <= 3 and steps <= 2000 per axis.
    """
    n = problem.n
    if n > 3:
        raise ValueError("grid oracle supports n <= 3")
    if steps > 2000:
        raise ValueError("grid oracle supports at most 2000 steps per axis")
    if mode not in ("constrained", "penalized"):
        raise ValueError("mode must be 'constrained' or 'penalized'")
    if mode == "penalized" and uf is None:
        raise ValueError("penalized mode requires the unified form")
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    axes = [np.linspace(lo[i], hi[i], steps + 1) for i in range(n)]

    def batch_value(P: np.ndarray) -> np.ndarray:
        if mode == "penalized":
            z = P @ uf.Cp.T - uf.dp
            vals = -np.maximum(z, 0.0) @ uf.gamma
            if problem.family is not Family.ASYMMETRIC:
                vals += P @ problem.theta
            if problem.family is Family.QUADRATIC:
                vals -= np.einsum("ij,ij->i", P @ problem.Q, P)
            return vals
        soft = P @ problem.C.T - problem.d if problem.m3 else np.zeros((len(P), 0))
        if problem.family is Family.ASYMMETRIC:
            vals = -np.maximum(soft, 0.0) @ problem.alpha - np.maximum(-soft, 0.0) @ problem.alpha2
        else:
            vals = P @ problem.theta - np.maximum(soft, 0.0) @ problem.alpha
            if problem.family is Family.QUADRATIC:
                vals -= np.einsum("ij,ij->i", P @ problem.Q, P)
        viol = np.maximum(np.max(-P, axis=1), 0.0)
        if problem.m1:
            viol = np.maximum(viol, np.max((P @ problem.A.T - problem.b) * problem.a_row_scale, axis=1))
        if problem.m2:
            viol = np.maximum(viol, np.max(np.abs(P @ problem.B.T - problem.c) * problem.b_row_scale, axis=1))
        return np.where(viol <= feas_tol, vals, -np.inf)

    best_val = -np.inf
    best_x = None
    if n == 1:
        P = axes[0][:, None]
        vals = batch_value(P)
        k = int(np.argmax(vals))
        return P[k].copy()
    tail = np.stack([g.ravel() for g in np.meshgrid(*axes[1:], indexing="ij")], axis=1)
    for x0 in axes[0]:
        P = np.column_stack([np.full(len(tail), x0), tail])
        vals = batch_value(P)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = vals[k]
            best_x = P[k].copy()
    if best_x is None or not np.isfinite(best_val):
        raise RuntimeError("no feasible grid point found")
    return best_x
