"""Dense linear-program descriptor and solver backend.

Every set query (support, containment, emptiness) and every one-step
control solve in this package reduces to a call into this module.  The
actual solve is delegated to HiGHS via ``scipy.optimize.linprog``;
results are re-validated against the feasibility contract before being
reported as optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-8
GAP_TOL = 1e-8


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


class LpError(Exception):
    """Raised by callers that cannot proceed past a solver failure."""


def _as_matrix(M, n_cols):
    if M is None:
        return sp.csr_matrix((0, n_cols))
    if sp.issparse(M):
        return M.tocsr()
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return sp.csr_matrix(M)


@dataclass
class LinearProgram:
    """minimize c_obj'x  s.t.  E x = f,  H x <= g,  lb <= x <= ub.

    E and H may be dense arrays or scipy sparse matrices; bounds may use
    +-inf.  Zero-row blocks are allowed.
    """

    c_obj: np.ndarray
    E: object = None
    f: np.ndarray = None
    H: object = None
    g: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c_obj = np.asarray(self.c_obj, dtype=float).ravel()
        n = self.c_obj.size
        self.E = _as_matrix(self.E, n)
        self.H = _as_matrix(self.H, n)
        self.f = np.zeros(0) if self.f is None else np.asarray(self.f, dtype=float).ravel()
        self.g = np.zeros(0) if self.g is None else np.asarray(self.g, dtype=float).ravel()
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.E.shape[1] != n or self.H.shape[1] != n:
            raise ValueError("constraint matrix column count does not match objective length")
        if self.E.shape[0] != self.f.size or self.H.shape[0] != self.g.size:
            raise ValueError("constraint row count does not match rhs length")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound length does not match objective length")

    @property
    def n_vars(self) -> int:
        return self.c_obj.size


@dataclass
class LpSolution:
    status: LpStatus
    x_opt: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    eq_duals: Optional[np.ndarray] = None
    ineq_duals: Optional[np.ndarray] = None
    lower_duals: Optional[np.ndarray] = None
    upper_duals: Optional[np.ndarray] = None


def _row_scale(M, rhs):
    """Residual scale per row: max(1, inf-norm of the row and rhs)."""
    if M.shape[0] == 0:
        return np.zeros(0)
    row_max = np.abs(M).max(axis=1)
    row_max = np.asarray(row_max.todense()).ravel() if sp.issparse(row_max) else np.ravel(row_max)
    return np.maximum(1.0, np.maximum(row_max, np.abs(rhs)))


def _feasibility_residual(prob: LinearProgram, x: np.ndarray) -> float:
    res = 0.0
    if prob.E.shape[0]:
        r = np.abs(prob.E @ x - prob.f) / _row_scale(prob.E, prob.f)
        res = max(res, float(r.max()))
    if prob.H.shape[0]:
        r = (prob.H @ x - prob.g) / _row_scale(prob.H, prob.g)
        res = max(res, float(r.max()))
    lo = prob.lb - x
    hi = x - prob.ub
    scale = np.maximum(1.0, np.abs(x))
    res = max(res, float(np.max(lo / scale, initial=0.0)))
    res = max(res, float(np.max(hi / scale, initial=0.0)))
    return res


def solve_lp(prob: LinearProgram, method: str = "highs") -> LpSolution:
    """Solve an LP, classifying the outcome.

    method selects the backend variant ("highs" lets the solver choose;
    "highs-ipm" forces the interior-point path, which is much faster on
    the large sparse programs built by the set-erosion routine).

    An OPTIMAL result is only reported after the returned point has been
    re-checked against the row-scaled feasibility tolerance; a point that
    fails the check is downgraded to NUMERICAL_FAILURE rather than being
    passed along.  A numerical failure triggers one deterministic retry
    with the alternate HiGHS algorithm (simplex <-> interior point)
    before the failure is reported, since degenerate boundary problems
    occasionally defeat one algorithm but not the other.
    """
    sol = _solve_once(prob, method)
    if sol.status == LpStatus.NUMERICAL_FAILURE:
        fallback = "highs-ds" if method == "highs-ipm" else "highs-ipm"
        sol = _solve_once(prob, fallback)
    return sol


def _solve_once(prob: LinearProgram, method: str) -> LpSolution:
    n = prob.n_vars
    if n == 0:
        feasible = (prob.f.size == 0 or np.all(np.abs(prob.f) <= FEAS_TOL)) and (
            prob.g.size == 0 or np.all(prob.g >= -FEAS_TOL)
        )
        if feasible:
            return LpSolution(LpStatus.OPTIMAL, np.zeros(0), 0.0, np.zeros(prob.f.size), np.zeros(prob.g.size))
        return LpSolution(LpStatus.INFEASIBLE)

    res = linprog(
        prob.c_obj,
        A_ub=prob.H if prob.H.shape[0] else None,
        b_ub=prob.g if prob.g.size else None,
        A_eq=prob.E if prob.E.shape[0] else None,
        b_eq=prob.f if prob.f.size else None,
        bounds=np.column_stack([prob.lb, prob.ub]),
        method=method,
        options={
            "primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9,
        },
    )
    if res.status == 2:
        return LpSolution(LpStatus.INFEASIBLE)
    if res.status == 3:
        return LpSolution(LpStatus.UNBOUNDED)
    if res.status != 0 or res.x is None:
        return LpSolution(LpStatus.NUMERICAL_FAILURE)

    x = np.asarray(res.x, dtype=float)
    if _feasibility_residual(prob, x) > FEAS_TOL:
        return LpSolution(LpStatus.NUMERICAL_FAILURE)
    eq_duals = np.asarray(res.eqlin.marginals, dtype=float) if prob.E.shape[0] else np.zeros(0)
    ineq_duals = np.asarray(res.ineqlin.marginals, dtype=float) if prob.H.shape[0] else np.zeros(0)
    return LpSolution(
        LpStatus.OPTIMAL,
        x,
        float(prob.c_obj @ x),
        eq_duals,
        ineq_duals,
        np.asarray(res.lower.marginals, dtype=float),
        np.asarray(res.upper.marginals, dtype=float),
    )


def check_feasibility(prob: LinearProgram) -> LpSolution:
    """Feasibility-only variant: solve with a zero objective."""
    zero = LinearProgram(
        np.zeros(prob.n_vars), prob.E, prob.f, prob.H, prob.g, prob.lb, prob.ub
    )
    return solve_lp(zero)


def dump_lp(prob: LinearProgram, path) -> None:
    """Write a plain-text standard form for diffing against other solvers."""
    with open(path, "w") as fh:
        fh.write("minimize\n")
        fh.write(" ".join(f"{v:.17g}" for v in prob.c_obj) + "\n")
        fh.write(f"equalities {prob.E.shape[0]}\n")
        E = prob.E.toarray() if sp.issparse(prob.E) else np.asarray(prob.E)
        for row, rhs in zip(E, prob.f):
            fh.write(" ".join(f"{v:.17g}" for v in row) + f" = {rhs:.17g}\n")
        fh.write(f"inequalities {prob.H.shape[0]}\n")
        H = prob.H.toarray() if sp.issparse(prob.H) else np.asarray(prob.H)
        for row, rhs in zip(H, prob.g):
            fh.write(" ".join(f"{v:.17g}" for v in row) + f" <= {rhs:.17g}\n")
        fh.write("bounds\n")
        for lo, hi in zip(prob.lb, prob.ub):
            fh.write(f"{lo:.17g} {hi:.17g}\n")
