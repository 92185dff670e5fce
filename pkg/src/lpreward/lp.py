"""Dense two-phase simplex and polyhedron helpers.

Problems are stated as

    maximize  c @ x
    s.t.      A_ineq @ x <= b_ineq
              A_eq   @ x == b_eq
              lower <= x <= upper        (entries may be +-inf)

and solved on a dense tableau. Entering columns follow Dantzig's rule with
lowest-index tie breaking; after a run of degenerate pivots the solver falls
back to Bland's rule, which cannot cycle. Optimal points are basic feasible
solutions of the standard-form problem, so repeated solves of the same
problem return the same vertex.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels

TOL_FEAS = 1e-9
PIVOT_TOL = 1e-10
OPT_TOL = 1e-10
BLAND_AFTER = 50


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC_FAILURE = "numeric_failure"


class LpError(RuntimeError):
    """Raised by callers that need an optimal point but got another status."""

    def __init__(self, status: LpStatus, message: str = ""):
        super().__init__(message or f"LP solve ended with status {status.value}")
        self.status = status


def _as_matrix(a, n):
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else np.zeros((0, n))
    return a


def _as_vector(b, m):
    if b is None:
        return np.zeros(m)
    return np.atleast_1d(np.asarray(b, dtype=float))


def _check_blocks(n, A_ineq, b_ineq, A_eq, b_eq, lower, upper):
    if A_ineq.shape[1] != n or A_eq.shape[1] != n:
        raise ValueError(
            f"constraint matrices need {n} columns, got {A_ineq.shape[1]} and {A_eq.shape[1]}"
        )
    if A_ineq.shape[0] != b_ineq.shape[0]:
        raise ValueError("A_ineq and b_ineq row counts differ")
    if A_eq.shape[0] != b_eq.shape[0]:
        raise ValueError("A_eq and b_eq row counts differ")
    if lower.shape != (n,) or upper.shape != (n,):
        raise ValueError("bounds must have one entry per variable")
    if np.isnan(lower).any() or np.isnan(upper).any():
        raise ValueError("bounds must not be NaN")


@dataclass
class ConstraintSystem:
    """Polyhedron ``{x : A_ineq x <= b_ineq, A_eq x = b_eq, lower <= x <= upper}``."""

    A_ineq: np.ndarray
    b_ineq: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.lower)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.A_ineq = _as_matrix(self.A_ineq, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ineq = _as_vector(self.b_ineq, self.A_ineq.shape[0])
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        _check_blocks(n, self.A_ineq, self.b_ineq, self.A_eq, self.b_eq, self.lower, self.upper)
        if not self.names:
            self.names = [f"x{j}" for j in range(n)]
        elif len(self.names) != n:
            raise ValueError("one name per variable")

    @classmethod
    def box(cls, lower, upper, names=None) -> "ConstraintSystem":
        lower = np.asarray(lower, dtype=float)
        n = lower.shape[0]
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros((0, n)), np.zeros(0),
                   lower, np.asarray(upper, dtype=float), list(names or []))

    @property
    def n_vars(self) -> int:
        return self.lower.shape[0]

    def with_rows(self, A_ineq=None, b_ineq=None, A_eq=None, b_eq=None) -> "ConstraintSystem":
        """Copy of this system with extra rows appended."""
        n = self.n_vars
        Ai = np.vstack([self.A_ineq, _as_matrix(A_ineq, n)])
        bi = np.concatenate([self.b_ineq, _as_vector(b_ineq, Ai.shape[0] - self.A_ineq.shape[0])])
        Ae = np.vstack([self.A_eq, _as_matrix(A_eq, n)])
        be = np.concatenate([self.b_eq, _as_vector(b_eq, Ae.shape[0] - self.A_eq.shape[0])])
        return ConstraintSystem(Ai, bi, Ae, be, self.lower.copy(), self.upper.copy(), list(self.names))

    def to_dict(self) -> dict:
        def bound(v):
            return [None if not np.isfinite(x) else float(x) for x in v]

        return {
            "names": list(self.names),
            "A_ineq": self.A_ineq.tolist(),
            "b_ineq": self.b_ineq.tolist(),
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "lower": bound(self.lower),
            "upper": bound(self.upper),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ConstraintSystem":
        lower = np.array([-np.inf if x is None else x for x in data["lower"]], dtype=float)
        upper = np.array([np.inf if x is None else x for x in data["upper"]], dtype=float)
        n = lower.shape[0]
        return cls(
            np.asarray(data["A_ineq"], dtype=float).reshape(-1, n),
            np.asarray(data["b_ineq"], dtype=float),
            np.asarray(data["A_eq"], dtype=float).reshape(-1, n),
            np.asarray(data["b_eq"], dtype=float),
            lower,
            upper,
            list(data.get("names", [])),
        )


@dataclass
class LpProblem:
    """Maximize ``objective @ x`` over a :class:`ConstraintSystem`-shaped region."""

    objective: np.ndarray
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.objective = np.atleast_1d(np.asarray(self.objective, dtype=float))
        n = self.objective.shape[0]
        self.A_ineq = _as_matrix(self.A_ineq, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ineq = _as_vector(self.b_ineq, self.A_ineq.shape[0])
        self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0])
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        _check_blocks(n, self.A_ineq, self.b_ineq, self.A_eq, self.b_eq, self.lower, self.upper)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @classmethod
    def over(cls, cs: ConstraintSystem, objective) -> "LpProblem":
        return cls(objective, cs.A_ineq, cs.b_ineq, cs.A_eq, cs.b_eq, cs.lower, cs.upper)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective_value: float
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def require(self) -> np.ndarray:
        if not self.ok:
            raise LpError(self.status)
        return self.x


def _fail(status, iterations=0):
    value = {LpStatus.UNBOUNDED: np.inf, LpStatus.INFEASIBLE: -np.inf}.get(status, np.nan)
    return LpSolution(status, None, value, iterations)


class _StandardForm:
    """``x = T @ y + t0`` with ``y >= 0``; rows ``G y <= g`` and ``E y = e``."""

    def __init__(self, p: LpProblem):
        n = p.n_vars
        lo, hi = p.lower, p.upper
        cols = []  # (variable, sign)
        t0 = np.zeros(n)
        ub_rows = []  # (column index, bound)
        for j in range(n):
            if np.isfinite(lo[j]) and np.isfinite(hi[j]) and lo[j] == hi[j]:
                t0[j] = lo[j]
            elif np.isfinite(lo[j]):
                t0[j] = lo[j]
                cols.append((j, 1.0))
                if np.isfinite(hi[j]):
                    ub_rows.append((len(cols) - 1, hi[j] - lo[j]))
            elif np.isfinite(hi[j]):
                t0[j] = hi[j]
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        T = np.zeros((n, len(cols)))
        for k, (j, sgn) in enumerate(cols):
            T[j, k] = sgn
        self.T, self.t0 = T, t0
        self.c = p.objective @ T
        self.c0 = float(p.objective @ t0)
        ny = len(cols)
        G = [p.A_ineq @ T]
        g = [p.b_ineq - p.A_ineq @ t0]
        if ub_rows:
            U = np.zeros((len(ub_rows), ny))
            for i, (k, b) in enumerate(ub_rows):
                U[i, k] = 1.0
            G.append(U)
            g.append(np.array([b for _, b in ub_rows]))
        self.G = np.vstack(G) if G else np.zeros((0, ny))
        self.g = np.concatenate(g)
        self.E = p.A_eq @ T
        self.e = p.b_eq - p.A_eq @ t0

    def recover(self, y):
        return self.T @ y + self.t0


def _presolve_rows(A, b, tol, equality):
    """Drop empty and duplicated rows; flag infeasible empty rows."""
    if A.shape[0] == 0:
        return A, b, True
    scale = np.abs(A).max(axis=1)
    empty = scale == 0.0
    if equality:
        if np.any(np.abs(b[empty]) > tol):
            return A, b, False
    elif np.any(b[empty] < -tol):
        return A, b, False
    A, b = A[~empty], b[~empty]
    if A.shape[0] == 0:
        return A, b, True
    _, first, inverse = np.unique(A, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    if len(first) == A.shape[0]:
        return A, b, True
    keep = np.sort(first)
    if equality:
        for i in range(A.shape[0]):
            if abs(b[i] - b[first[inverse[i]]]) > tol * max(1.0, abs(b[i])):
                return A, b, False
        return A[keep], b[keep], True
    tight = np.full(len(first), np.inf)
    np.minimum.at(tight, inverse, b)
    pos = np.empty(len(first), dtype=np.int64)
    pos[np.argsort(first)] = np.arange(len(first))
    out_b = np.empty(len(first))
    out_b[pos] = tight
    return A[keep], out_b, True


def solve_lp(p: LpProblem, *, max_iter: int | None = None) -> LpSolution:
    """Solve ``p`` and classify it as optimal, infeasible or unbounded."""
    if np.any(p.lower > p.upper):
        return _fail(LpStatus.INFEASIBLE)
    sf = _StandardForm(p)
    G, g, ok_g = _presolve_rows(sf.G, sf.g, TOL_FEAS, equality=False)
    E, e, ok_e = _presolve_rows(sf.E, sf.e, TOL_FEAS, equality=True)
    if not (ok_g and ok_e):
        return _fail(LpStatus.INFEASIBLE)
    ny = sf.c.shape[0]
    mi, me = G.shape[0], E.shape[0]
    m = mi + me
    if max_iter is None:
        max_iter = 50 * (m + ny) + 1000

    # standard form: [G I; E 0] [y; s] = [g; e], all variables >= 0
    n_real = ny + mi
    A = np.zeros((m, n_real))
    A[:mi, :ny] = G
    A[:mi, ny:] = np.eye(mi)
    A[mi:, :ny] = E
    b = np.concatenate([g, e])
    flip = b < 0
    A[flip] *= -1.0
    b = np.abs(b)

    basis = np.full(m, -1, dtype=np.int64)
    slack_rows = np.nonzero(~flip[:mi])[0]
    basis[slack_rows] = ny + slack_rows
    art_rows = np.nonzero(basis < 0)[0]
    n_art = art_rows.size
    n_cols = n_real + n_art
    tab = np.zeros((m + 1, n_cols + 1))
    tab[:m, :n_real] = A
    tab[:m, -1] = b
    for k, i in enumerate(art_rows):
        tab[i, n_real + k] = 1.0
        basis[i] = n_real + k
    iters = 0
    bscale = max(1.0, float(np.abs(b).max())) if m else 1.0

    if n_art:
        tab[m, n_real:n_cols] = 1.0
        tab[m] -= tab[art_rows].sum(axis=0)
        status, it = kernels.simplex_iterate(tab, basis, n_cols, OPT_TOL, PIVOT_TOL, max_iter, BLAND_AFTER)
        iters += it
        if status != kernels.SIMPLEX_OPTIMAL:
            return _fail(LpStatus.NUMERIC_FAILURE, iters)
        if tab[m, -1] < -TOL_FEAS * bscale:
            return _fail(LpStatus.INFEASIBLE, iters)
        # drive artificial variables out of the basis
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] < n_real:
                continue
            row = tab[i, :n_real]
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > 1e-7:
                kernels.pivot(tab, i, j)
                basis[i] = j
            else:
                keep[i] = False
        if not keep.all():
            rows = np.concatenate([np.nonzero(keep)[0], [m]])
            tab = tab[rows]
            basis = basis[keep]
            A = A[keep]
            b = b[keep]
            m = basis.shape[0]
        tab = np.ascontiguousarray(np.delete(tab, np.s_[n_real:n_cols], axis=1))

    c_std = np.concatenate([sf.c, np.zeros(mi)])
    tab[m, :] = 0.0
    tab[m, :n_real] = -c_std
    for i in range(m):
        cb = c_std[basis[i]]
        if cb != 0.0:
            tab[m] += cb * tab[i]
    status, it = kernels.simplex_iterate(tab, basis, n_real, OPT_TOL, PIVOT_TOL, max_iter, BLAND_AFTER)
    iters += it
    if status == kernels.SIMPLEX_UNBOUNDED:
        return _fail(LpStatus.UNBOUNDED, iters)
    if status != kernels.SIMPLEX_OPTIMAL:
        return _fail(LpStatus.NUMERIC_FAILURE, iters)

    z = np.zeros(n_real)
    z[basis] = tab[:m, -1]
    if m:
        try:
            refined = np.linalg.solve(A[:, basis], b)
            if np.all(np.isfinite(refined)) and np.max(np.abs(refined - z[basis])) < 1e-6 * bscale:
                z[basis] = refined
        except np.linalg.LinAlgError:
            pass
    z = np.maximum(z, 0.0)
    x = sf.recover(z[:ny])
    x = np.clip(x, p.lower, p.upper)
    if not _satisfies(p, x, TOL_FEAS * 100):
        return _fail(LpStatus.NUMERIC_FAILURE, iters)
    return LpSolution(LpStatus.OPTIMAL, x, float(p.objective @ x), iters)


def _violation(A_ineq, b_ineq, A_eq, b_eq, lower, upper, x):
    """Largest constraint violation, each row scaled by its magnitude."""
    worst = 0.0
    ax = np.abs(x)
    if A_ineq.shape[0]:
        scale = 1.0 + np.abs(b_ineq) + np.abs(A_ineq) @ ax
        worst = max(worst, float(np.max((A_ineq @ x - b_ineq) / scale)))
    if A_eq.shape[0]:
        scale = 1.0 + np.abs(b_eq) + np.abs(A_eq) @ ax
        worst = max(worst, float(np.max(np.abs(A_eq @ x - b_eq) / scale)))
    with np.errstate(invalid="ignore"):
        worst = max(worst, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
    return worst


def _satisfies(p, x, tol):
    return _violation(p.A_ineq, p.b_ineq, p.A_eq, p.b_eq, p.lower, p.upper, x) <= tol


def check_feasible(cs: ConstraintSystem, x, tol: float = TOL_FEAS) -> bool:
    """True iff ``x`` satisfies every row and bound of ``cs`` within ``tol`` (absolute)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (cs.n_vars,):
        raise ValueError(f"expected a vector of length {cs.n_vars}")
    if cs.A_ineq.shape[0] and np.any(cs.A_ineq @ x - cs.b_ineq > tol):
        return False
    if cs.A_eq.shape[0] and np.any(np.abs(cs.A_eq @ x - cs.b_eq) > tol):
        return False
    return bool(np.all(x >= cs.lower - tol) and np.all(x <= cs.upper + tol))


def optimize_over(cs: ConstraintSystem, objective) -> LpSolution:
    """Maximize ``objective`` over ``cs``."""
    return solve_lp(LpProblem.over(cs, objective))
