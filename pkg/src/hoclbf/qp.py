"""Per-step quadratic programs and a small dense primal active-set solver.

The problem solved is

    minimize    z^T H z + l^T z
    subject to  a_j . z + c_j >= 0      (barrier rows)
                lower <= z <= upper     (control box; slacks are free)

with H diagonal and positive. Sizes are tiny (one control plus a few
slacks), so everything is dense numpy.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .barrier import ConstraintRow
from .dynamics import AffineSystem

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
PHASE1_TOL = 1e-8


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class QpProblem:
    hessian: np.ndarray  # diagonal entries
    linear: np.ndarray
    rows_a: np.ndarray  # (R, dim)
    rows_c: np.ndarray  # (R,)
    lower: np.ndarray
    upper: np.ndarray
    n_controls: int = 1
    owners: tuple = ()

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        dim = h.size
        a = np.asarray(self.rows_a, dtype=float).reshape(-1, dim)
        for name, val in (("hessian", h), ("linear", np.asarray(self.linear, dtype=float)),
                          ("rows_a", a), ("rows_c", np.asarray(self.rows_c, dtype=float).reshape(-1)),
                          ("lower", np.asarray(self.lower, dtype=float)),
                          ("upper", np.asarray(self.upper, dtype=float))):
            object.__setattr__(self, name, val)
        if np.any(h <= 0):
            raise ValueError("hessian diagonal must be positive")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")
        if self.rows_c.size != a.shape[0]:
            raise ValueError("rows_a and rows_c disagree in length")

    @property
    def dim(self) -> int:
        return self.hessian.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(z @ (self.hessian * z) + self.linear @ z)

    def inequalities(self):
        """All constraints stacked as G z >= b (rows first, then finite box sides)."""
        dim = self.dim
        eye = np.eye(dim)
        G = [self.rows_a]
        b = [-self.rows_c]
        lo = np.isfinite(self.lower)
        hi = np.isfinite(self.upper)
        G.append(eye[lo])
        b.append(self.lower[lo])
        G.append(-eye[hi])
        b.append(-self.upper[hi])
        return np.vstack(G), np.concatenate(b)


@dataclass
class QpSolution:
    z: np.ndarray
    objective: float
    active_set: tuple
    status: Status
    multipliers: np.ndarray = field(default=None, repr=False)
    iterations: int = 0
    phase1: float = 0.0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class QpConfig:
    slack_weight: float = 1000.0


def assemble(sys: AffineSystem, rows: list[ConstraintRow], slack_assignment: dict | None = None,
             config: QpConfig | None = None) -> QpProblem:
    """Build the QP for one control step.

    ``slack_assignment`` maps row index -> slack index (dense from 0); a
    relaxed row reads a.u + c - delta_k >= 0.
    """
    config = config or QpConfig()
    slack_assignment = dict(slack_assignment or {})
    k = len(set(slack_assignment.values()))
    if sorted(set(slack_assignment.values())) != list(range(k)):
        raise ValueError("slack indices must be dense 0..k-1")
    qn = sys.q
    dim = qn + k
    A = np.zeros((len(rows), dim))
    c = np.zeros(len(rows))
    for j, row in enumerate(rows):
        A[j, :qn] = np.asarray(row.a, dtype=float).reshape(qn)
        c[j] = row.c
        if j in slack_assignment:
            A[j, qn + slack_assignment[j]] = -1.0
    hess = np.concatenate([np.ones(qn), np.full(k, float(config.slack_weight))])
    lower = np.concatenate([np.asarray(sys.u_min, dtype=float), np.full(k, -np.inf)])
    upper = np.concatenate([np.asarray(sys.u_max, dtype=float), np.full(k, np.inf)])
    return QpProblem(hess, np.zeros(dim), A, c, lower, upper, qn, tuple(r.owner for r in rows))


def _eq_step(Q, g, Aw):
    """Solve min 1/2 p'Qp + g'p s.t. Aw p = 0; returns (p, lambda) with Q(z+p)+l = Aw' lambda."""
    n = Q.shape[0]
    k = Aw.shape[0]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = Q
    K[:n, n:] = -Aw.T
    K[n:, :n] = Aw
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def _active_set(Q, l, G, b, z, working, max_iter, tol=1e-11):
    """Primal active-set iterations from a feasible z. Q may be semidefinite."""
    working = list(working)
    n = Q.shape[0]
    for it in range(max_iter):
        g = Q @ z + l
        Aw = G[working] if working else np.zeros((0, n))
        p, lam = _eq_step(Q, g, Aw)
        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(z)):
            if not working:
                return z, working, lam, it
            j = int(np.argmin(lam))
            if lam[j] >= -tol:
                return z, working, lam, it
            working.pop(j)
            continue
        alpha = 1.0
        block = None
        slack = G @ z - b
        Gp = G @ p
        for i in range(G.shape[0]):
            if i in working or Gp[i] >= -1e-14:
                continue
            step = max(0.0, slack[i] / -Gp[i])
            if step < alpha:
                alpha = step
                block = i
        z = z + alpha * p
        if block is not None:
            working.append(block)
    raise _IterationLimit(z, working)


class _IterationLimit(Exception):
    def __init__(self, z, working):
        super().__init__("active-set iteration limit reached")
        self.z = z
        self.working = working


def phase1(problem: QpProblem, z0=None):
    """Minimize the largest row violation over the box; returns (t*, z)."""
    G, b = problem.inequalities()
    R = problem.rows_c.size
    dim = problem.dim
    # extended variable (z, t): rows get +t, box rows unchanged, plus t >= 0
    Ge = np.zeros((G.shape[0] + 1, dim + 1))
    Ge[:, :dim][: G.shape[0]] = G
    Ge[:R, dim] = 1.0
    Ge[-1, dim] = 1.0
    be = np.concatenate([b, [0.0]])
    z = np.zeros(dim) if z0 is None else np.asarray(z0, dtype=float).copy()
    z = np.clip(z, problem.lower, problem.upper)
    viol = b[:R] - problem.rows_a @ z if R else np.zeros(0)
    t0 = max(0.0, float(viol.max())) if R else 0.0
    Q = np.zeros((dim + 1, dim + 1))
    Q[dim, dim] = 1.0
    w = np.concatenate([z, [t0]])
    w, working, _, iters = _active_set(Q, np.zeros(dim + 1), Ge, be, w, [], 100 * (dim + 1))
    return max(0.0, float(w[dim])), w[:dim], iters


def solve(problem: QpProblem, warm_start=None) -> QpSolution:
    """Solve a strictly convex QP; Infeasible when phase 1 cannot zero the violation.

    ``warm_start`` is an active set from a previous solve (indices into
    :meth:`QpProblem.inequalities`); it is used when it yields a feasible point.
    """
    G, b = problem.inequalities()
    Q = np.diag(2.0 * problem.hessian)
    l = problem.linear
    dim = problem.dim
    z = None
    working: list = []
    iters0 = 0
    t_star = 0.0
    if warm_start:
        ws = [i for i in warm_start if 0 <= i < G.shape[0]]
        if ws:
            Aw = G[ws]
            if np.linalg.matrix_rank(Aw) == len(ws):
                # min 1/2 z'Qz + l'z  s.t. Aw z = bw
                n = dim
                K = np.zeros((n + len(ws), n + len(ws)))
                K[:n, :n] = Q
                K[:n, n:] = -Aw.T
                K[n:, :n] = Aw
                sol = np.linalg.solve(K, np.concatenate([-l, b[ws]]))
                cand = sol[:n]
                if np.all(G @ cand - b >= -FEAS_TOL):
                    z, working = cand, ws
    if z is None:
        try:
            t_star, z, iters0 = phase1(problem)
        except _IterationLimit:
            return QpSolution(np.zeros(dim), np.nan, (), Status.INFEASIBLE, message="IterationLimit in phase 1")
        if t_star > PHASE1_TOL:
            return QpSolution(z, np.nan, (), Status.INFEASIBLE, phase1=t_star,
                              message=f"phase-1 optimum {t_star:.3e} > {PHASE1_TOL:g}")
        working = [i for i in range(G.shape[0]) if abs(G[i] @ z - b[i]) <= 1e-12]
        # keep a linearly independent subset
        keep: list = []
        for i in working:
            if np.linalg.matrix_rank(G[keep + [i]]) == len(keep) + 1:
                keep.append(i)
        working = keep
    try:
        z, working, lam, iters = _active_set(Q, l, G, b, z, working, 100 * dim)
    except _IterationLimit as exc:
        log.warning("QP iteration limit after %d pivots", 100 * dim)
        return QpSolution(exc.z, np.nan, tuple(exc.working), Status.INFEASIBLE, message="IterationLimit")
    mult = np.zeros(G.shape[0])
    if working:
        mult[working] = lam
    return QpSolution(z, problem.objective(z), tuple(sorted(working)), Status.OPTIMAL, mult,
                      iters0 + iters, t_star)


def kkt_residuals(problem: QpProblem, sol: QpSolution) -> dict:
    """Stationarity, primal/dual feasibility and complementarity residuals (max-abs)."""
    G, b = problem.inequalities()
    z = sol.z
    lam = sol.multipliers if sol.multipliers is not None else np.zeros(G.shape[0])
    grad = 2.0 * problem.hessian * z + problem.linear
    slack = G @ z - b
    return {
        "stationarity": float(np.max(np.abs(grad - G.T @ lam), initial=0.0)),
        "primal": float(max(0.0, -np.min(slack, initial=0.0))),
        "dual": float(max(0.0, -np.min(lam, initial=0.0))),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
    }


def dump(problem: QpProblem) -> str:
    """Plain-text normalized form, stable for golden tests."""
    lines = [f"dim {problem.dim}", "minimize z'Hz + l'z",
             "H " + " ".join(f"{h:.6g}" for h in problem.hessian),
             "l " + " ".join(f"{v:.6g}" for v in problem.linear)]
    for j, (a, c) in enumerate(zip(problem.rows_a, problem.rows_c)):
        owner = problem.owners[j] if j < len(problem.owners) else ""
        terms = " ".join(f"{v:+.6g}*z{i}" for i, v in enumerate(a) if v != 0) or "0"
        lines.append(f"row {j} [{owner}] {terms} {c:+.6g} >= 0")
    for i, (lo, hi) in enumerate(zip(problem.lower, problem.upper)):
        lines.append(f"box z{i} [{lo:.6g}, {hi:.6g}]")
    return "\n".join(lines)
