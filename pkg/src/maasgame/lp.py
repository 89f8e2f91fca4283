"""Dense linear-program solver used by path-flow recovery, the stable-outcome
problem, and the subsidy problem.

Two-phase primal simplex on a dense tableau. Entering variables follow
Dantzig's rule until the objective stalls on degenerate pivots, then switch
to Bland's rule (which guarantees termination); ties in the ratio test always
break by smallest basis index. Problem sizes here are small (hundreds of rows),
so exactness and determinism matter more than speed.

Row generation is served by ``warm_resolve``: new rows enter the optimal
tableau and dual-simplex pivots restore feasibility. The warm start is an
optimization only; its result equals a cold ``solve_lp`` on the augmented
program, and it silently falls back to one when it cannot make progress.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

TOL_FEAS = 1e-7   # feasibility tolerance on constraint residuals
TOL_PIVOT = 1e-9  # pivot / reduced-cost tolerance
STALL_LIMIT = 50  # degenerate pivots before switching to Bland's rule

RELATIONS = ("<=", "=", ">=")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

Coefs = Union[Mapping[Union[str, int], float], Sequence[float]]


class LpError(ValueError):
    pass


@dataclass
class Row:
    coefs: dict[int, float]
    rel: str
    rhs: float


@dataclass
class LinearProgram:
    minimize: bool = True
    names: list[str] = field(default_factory=list)
    obj: list[float] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[Optional[float]] = field(default_factory=list)
    rows: list[Row] = field(default_factory=list)
    _index: dict[str, int] = field(default_factory=dict)

    def add_variable(self, name: str, obj: float = 0.0, lb: float = 0.0,
                     ub: Optional[float] = None) -> int:
        if name in self._index:
            raise LpError(f"duplicate variable {name!r}")
        if not np.isfinite(lb):
            raise LpError(f"variable {name!r}: lower bound must be finite")
        idx = len(self.names)
        self.names.append(name)
        self.obj.append(float(obj))
        self.lb.append(float(lb))
        self.ub.append(None if ub is None else float(ub))
        self._index[name] = idx
        return idx

    def var(self, name: str) -> int:
        return self._index[name]

    def _resolve(self, coefs: Coefs) -> dict[int, float]:
        out: dict[int, float] = {}
        if isinstance(coefs, Mapping):
            items = coefs.items()
        else:
            items = enumerate(coefs)
        for key, val in items:
            idx = self._index[key] if isinstance(key, str) else int(key)
            if idx < 0 or idx >= len(self.names):
                raise LpError(f"row references unknown variable {key!r}")
            v = float(val)
            if not np.isfinite(v):
                raise LpError("row coefficients must be finite")
            if v != 0.0:
                out[idx] = out.get(idx, 0.0) + v
        return out

    def add_constraint(self, coefs: Coefs, rel: str, rhs: float) -> int:
        if rel not in RELATIONS:
            raise LpError(f"unknown relation {rel!r}")
        if not np.isfinite(rhs):
            raise LpError("right-hand side must be finite")
        self.rows.append(Row(self._resolve(coefs), rel, float(rhs)))
        return len(self.rows) - 1

    @property
    def n_vars(self) -> int:
        return len(self.names)


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    _state: Optional["_Tableau"] = None

    def value(self, lp: LinearProgram, name: str) -> float:
        return float(self.x[lp.var(name)])

    def values(self, lp: LinearProgram) -> dict[str, float]:
        return {n: float(v) for n, v in zip(lp.names, self.x)}

    def dual_objective(self) -> float:
        """y.b from the final basis; equals the primal objective at optimality."""
        if self._state is None or self.status != OPTIMAL:
            raise LpError("dual objective only available for optimal solutions")
        st = self._state
        val = float(st.basis_duals() @ st.b)
        return val * (1.0 if st.lp_minimize else -1.0) + st.obj_shift


# ---------------------------------------------------------------------------
# internal equality-form tableau
# ---------------------------------------------------------------------------

class _Tableau:
    """min c.x  s.t.  A x = b, x >= 0, after shifting user lower bounds to 0
    and materializing upper bounds as explicit rows."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        lb = np.array(lp.lb, dtype=float)
        rows: list[tuple[dict[int, float], str, float]] = [
            (r.coefs, r.rel, r.rhs) for r in lp.rows
        ]
        for j, ub in enumerate(lp.ub):
            if ub is not None:
                rows.append(({j: 1.0}, "<=", float(ub)))
        m = len(rows)
        A = np.zeros((m, n))
        b = np.zeros(m)
        rels = []
        for i, (coefs, rel, rhs) in enumerate(rows):
            for j, v in coefs.items():
                A[i, j] = v
            # shift x = lb + x'
            b[i] = rhs - sum(v * lb[j] for j, v in coefs.items())
            rels.append(rel)

        c = np.array(lp.obj, dtype=float)
        self.lp_minimize = lp.minimize
        sign = 1.0 if lp.minimize else -1.0
        c = sign * c
        self.obj_shift = float(np.dot(np.array(lp.obj), lb))  # added back on extract
        # slack/surplus columns
        n_slack = sum(1 for r in rels if r != "=")
        total = n + n_slack
        Aeq = np.zeros((m, total))
        Aeq[:, :n] = A
        self.slack_col_of_row: dict[int, int] = {}
        col = n
        for i, rel in enumerate(rels):
            if rel == "<=":
                Aeq[i, col] = 1.0
                self.slack_col_of_row[i] = col
                col += 1
            elif rel == ">=":
                Aeq[i, col] = -1.0
                self.slack_col_of_row[i] = col
                col += 1
        # normalize b >= 0
        self.row_flip = np.ones(m)
        for i in range(m):
            if b[i] < 0:
                Aeq[i, :] *= -1.0
                b[i] = -b[i]
                self.row_flip[i] = -1.0
        ceq = np.zeros(total)
        ceq[:n] = c
        self.n_user = n
        self.n_user_rows = len(lp.rows)
        self.lb = lb
        self.A = Aeq
        self.b = b
        self.c = ceq
        self.m = m
        self.basis: list[int] = []
        self.T: Optional[np.ndarray] = None  # (m+1) x (total+1); last row reduced costs

    # -- simplex machinery ------------------------------------------------

    def _pivot(self, T: np.ndarray, row: int, col: int) -> None:
        T[row, :] /= T[row, col]
        factors = T[:, col].copy()
        factors[row] = 0.0
        T -= np.outer(factors, T[row, :])
        T[:, col] = 0.0
        T[row, col] = 1.0

    def _primal_simplex(self, T: np.ndarray, basis: list[int], max_iter: int = 200_000) -> str:
        m = self.m
        stall = 0
        last_obj = T[-1, -1]
        bland = False
        for _ in range(max_iter):
            z = T[-1, :-1]
            if bland:
                cands = np.flatnonzero(z < -TOL_PIVOT)
                if cands.size == 0:
                    return OPTIMAL
                col = int(cands[0])
            else:
                col = int(np.argmin(z))
                if z[col] >= -TOL_PIVOT:
                    return OPTIMAL
            colvals = T[:m, col]
            pos = np.flatnonzero(colvals > TOL_PIVOT)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / colvals[pos]
            best = np.min(ratios)
            tied = pos[ratios <= best + TOL_PIVOT]
            row = int(min(tied, key=lambda i: basis[i]))
            self._pivot(T, row, col)
            basis[row] = col
            # tableau stores -objective in the corner; progress = increase
            if T[-1, -1] <= last_obj + TOL_PIVOT:
                stall += 1
                if stall >= STALL_LIMIT:
                    bland = True
            else:
                stall = 0
                bland = False
            last_obj = T[-1, -1]
        raise LpError("simplex iteration limit exceeded")

    def solve(self) -> tuple[str, float]:
        """Two-phase solve. Returns (status, phase1 residual)."""
        m, total = self.m, self.A.shape[1]
        # phase 1 with one artificial per row
        T = np.zeros((m + 1, total + m + 1))
        T[:m, :total] = self.A
        T[:m, total:total + m] = np.eye(m)
        T[:m, -1] = self.b
        basis = [total + i for i in range(m)]
        # phase-1 objective: min sum of artificials -> price out the basis
        T[-1, :total] = -self.A.sum(axis=0)
        T[-1, -1] = -self.b.sum()
        status = self._primal_simplex(T, basis)
        if status == UNBOUNDED:  # cannot happen: phase-1 objective bounded below by 0
            raise LpError("phase-1 reported unbounded")
        residual = -T[-1, -1]
        if residual > TOL_FEAS:
            return INFEASIBLE, residual
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= total:
                row_vals = T[i, :total]
                cand = np.flatnonzero(np.abs(row_vals) > TOL_PIVOT)
                if cand.size:
                    self._pivot(T, i, int(cand[0]))
                    basis[i] = int(cand[0])
        # drop redundant all-zero rows still pinned to artificials
        keep = [i for i in range(m) if basis[i] < total]
        if len(keep) < m:
            rows = keep + [m]
            T = T[rows, :]
            basis = [basis[i] for i in keep]
            self.A = self.A[keep, :]
            self.b = self.b[keep]
            self.row_flip = self.row_flip[keep]
            kept_rows = {old: new for new, old in enumerate(keep)}
            self.slack_col_of_row = {
                kept_rows[i]: cst for i, cst in self.slack_col_of_row.items() if i in kept_rows
            }
            self.m = len(keep)
            m = self.m
        # phase 2
        T2 = np.zeros((m + 1, total + 1))
        T2[:m, :total] = T[:m, :total]
        T2[:m, -1] = T[:m, -1]
        T2[-1, :total] = self.c
        for i, bc in enumerate(basis):
            if abs(self.c[bc]) > 0.0:
                T2[-1, :] -= self.c[bc] * T2[i, :]
        status = self._primal_simplex(T2, basis)
        self.T = T2
        self.basis = basis
        return status, residual

    def extract(self, lp: LinearProgram) -> np.ndarray:
        assert self.T is not None
        xfull = np.zeros(self.A.shape[1])
        for i, bc in enumerate(self.basis):
            xfull[bc] = self.T[i, -1]
        return xfull[: self.n_user] + self.lb

    def objective_value(self, lp: LinearProgram, x: np.ndarray) -> float:
        return float(np.dot(np.array(lp.obj), x))

    def basis_duals(self) -> np.ndarray:
        """y solving B^T y = c_B against the (normalized) equality system."""
        B = self.A[:, self.basis]
        cB = self.c[self.basis]
        return np.linalg.solve(B.T, cB)

    # -- warm restart ------------------------------------------------------

    def add_rows_dual(self, lp: LinearProgram, new_rows: list[Row], max_iter: int = 100_000) -> str:
        """Append rows to the optimal tableau and restore primal feasibility
        with dual-simplex pivots. Requires an optimal tableau; equality rows
        are not supported (caller falls back to a cold solve)."""
        assert self.T is not None
        for r in new_rows:
            if r.rel == "=":
                raise LpError("warm restart does not take equality rows")
        m_old, total = self.m, self.A.shape[1]
        k = len(new_rows)
        A2 = np.zeros((m_old + k, total + k))
        A2[:m_old, :total] = self.A
        b2 = np.concatenate([self.b, np.zeros(k)])
        T2 = np.zeros((m_old + k + 1, total + k + 1))
        T2[:m_old, :total] = self.T[:m_old, :total]
        T2[:m_old, -1] = self.T[:m_old, -1]
        T2[-1, :total] = self.T[-1, :total]
        T2[-1, -1] = self.T[-1, -1]
        basis = list(self.basis)
        for t, r in enumerate(new_rows):
            i = m_old + t
            sgn = 1.0 if r.rel == "<=" else -1.0  # >= rows enter negated
            rhs = r.rhs - sum(v * self.lb[j] for j, v in r.coefs.items())
            for j, v in r.coefs.items():
                A2[i, j] = sgn * v
            A2[i, total + t] = 1.0
            b2[i] = sgn * rhs
            self.slack_col_of_row[i] = total + t
            T2[i, :total] = A2[i, :total]
            T2[i, total + t] = 1.0
            T2[i, -1] = b2[i]
            # price out current basic variables from the new row
            for brow, bc in enumerate(basis):
                factor = T2[i, bc]
                if abs(factor) > 0.0:
                    T2[i, :] -= factor * T2[brow, :]
            basis.append(total + t)
        self.A = A2
        self.b = b2
        self.m = m_old + k
        self.row_flip = np.concatenate([self.row_flip, np.ones(k)])
        # dual simplex: leave most-negative basic, enter by dual ratio test
        for _ in range(max_iter):
            rhs = T2[: self.m, -1]
            row = int(np.argmin(rhs))
            if rhs[row] >= -TOL_FEAS:
                self.T = T2
                self.basis = basis
                return OPTIMAL
            rowvals = T2[row, : total + k]
            cand = np.flatnonzero(rowvals < -TOL_PIVOT)
            if cand.size == 0:
                self.T = T2
                self.basis = basis
                return INFEASIBLE
            z = T2[-1, : total + k]
            ratios = z[cand] / (-rowvals[cand])
            best = np.min(ratios)
            tied = cand[ratios <= best + TOL_PIVOT]
            col = int(tied[0])
            self._pivot(T2, row, col)
            basis[row] = col
        raise LpError("dual simplex iteration limit exceeded")


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve to optimality / detect infeasibility or unboundedness."""
    for row in lp.rows:
        for j in row.coefs:
            if j >= lp.n_vars:
                raise LpError("constraint references undeclared variable")
    tab = _Tableau(lp)
    status, _ = tab.solve()
    if status != OPTIMAL:
        return LpSolution(status=status, x=np.zeros(lp.n_vars), objective=float("nan"))
    x = tab.extract(lp)
    return LpSolution(status=OPTIMAL, x=x, objective=tab.objective_value(lp, x), _state=tab)


def warm_resolve(lp: LinearProgram, new_rows: Iterable[tuple[Coefs, str, float]],
                 prior: Optional[LpSolution] = None) -> LpSolution:
    """Append rows to ``lp`` and re-solve, reusing the prior optimal basis
    when possible. Semantically identical to ``solve_lp`` on the augmented
    program."""
    added: list[Row] = []
    for coefs, rel, rhs in new_rows:
        idx = lp.add_constraint(coefs, rel, rhs)
        added.append(lp.rows[idx])
    if (
        prior is None
        or prior.status != OPTIMAL
        or prior._state is None
        or any(r.rel == "=" for r in added)
    ):
        return solve_lp(lp)
    tab = prior._state
    try:
        status = tab.add_rows_dual(lp, added)
    except LpError:
        return solve_lp(lp)
    if status == INFEASIBLE:
        # confirm with a cold solve; the warm tableau is spent either way
        return solve_lp(lp)
    x = tab.extract(lp)
    return LpSolution(status=OPTIMAL, x=x, objective=tab.objective_value(lp, x), _state=tab)


def residuals(lp: LinearProgram, x: np.ndarray) -> float:
    """Max constraint violation of x against lp (user rows and bounds)."""
    worst = 0.0
    for row in lp.rows:
        lhs = sum(v * x[j] for j, v in row.coefs.items())
        if row.rel == "<=":
            worst = max(worst, lhs - row.rhs)
        elif row.rel == ">=":
            worst = max(worst, row.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - row.rhs))
    for j in range(lp.n_vars):
        worst = max(worst, lp.lb[j] - x[j])
        if lp.ub[j] is not None:
            worst = max(worst, x[j] - lp.ub[j])
    return float(worst)


def dump_mps(lp: LinearProgram, path) -> None:
    """Fixed-format MPS dump for cross-checking against external solvers."""
    def vname(j: int) -> str:
        raw = lp.names[j].replace(" ", "_")
        return (raw[:7] + str(j)) if len(raw) > 8 else raw

    rel_tag = {"<=": " L ", ">=": " G ", "=": " E "}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("NAME          MAASLP\n")
        fh.write("ROWS\n")
        fh.write(" N  COST\n")
        for i, row in enumerate(lp.rows):
            fh.write(f"{rel_tag[row.rel]} R{i}\n")
        fh.write("COLUMNS\n")
        sign = 1.0 if lp.minimize else -1.0
        for j in range(lp.n_vars):
            if lp.obj[j] != 0.0:
                fh.write(f"    {vname(j):<10}COST      {sign * lp.obj[j]:<12g}\n")
            for i, row in enumerate(lp.rows):
                if j in row.coefs:
                    fh.write(f"    {vname(j):<10}R{i:<9}{row.coefs[j]:<12g}\n")
        fh.write("RHS\n")
        for i, row in enumerate(lp.rows):
            if row.rhs != 0.0:
                fh.write(f"    RHS       R{i:<9}{row.rhs:<12g}\n")
        fh.write("BOUNDS\n")
        for j in range(lp.n_vars):
            if lp.lb[j] != 0.0:
                fh.write(f" LO BND       {vname(j):<10}{lp.lb[j]:<12g}\n")
            if lp.ub[j] is not None:
                fh.write(f" UP BND       {vname(j):<10}{lp.ub[j]:<12g}\n")
        fh.write("ENDATA\n")
