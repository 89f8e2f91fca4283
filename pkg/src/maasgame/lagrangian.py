"""Subgradient optimization of the capacity and strong-forcing multipliers,
integer-variable recovery, path-flow recovery, and the branch objective.

One call to :func:`solve_branch` runs the whole per-branch pipeline: the
subgradient loop (each iteration one Frank-Wolfe solve), the path-flow
recovery LP over the accumulated path set, the y/v recovery, and the true
objective evaluation. The best Lagrangian dual value seen across iterations
is a certified lower bound for the branch (Frank-Wolfe contributes its
linearized bound so early stopping never invalidates pruning).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import BranchFixings, BranchNetwork, FWResult, frank_wolfe
from .lp import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp
from .network import ExpandedNetwork

MATCH_TOL = 1e-9          # path flow below this is "unmatched"
CAPACITY_SLACK = 0.005    # relative violation that triggers the repair solve


@dataclass
class Multipliers:
    gamma: np.ndarray            # capacity multipliers, one per link (gamma_l)
    beta: np.ndarray             # strong-forcing multipliers (beta_sl)
    iterations: int = 0
    converged: bool = True

    @staticmethod
    def zeros(branch: BranchNetwork) -> "Multipliers":
        L = len(branch.t)
        return Multipliers(np.zeros(L), np.zeros((branch.n_groups, L)))

    def copy(self) -> "Multipliers":
        return Multipliers(self.gamma.copy(), self.beta.copy(), self.iterations, self.converged)


def dual_constants(branch: BranchNetwork, gamma: np.ndarray, beta: np.ndarray) -> float:
    """Constant terms of the relaxed objective for the branch at (gamma, beta).

    Capacity relaxation contributes -sum gamma_l w_l; free links contribute
    min(c_l(beta), 0) from minimizing c_l(beta) * y over the y interval;
    forced-open links contribute c_l(beta); forced-open MOD nodes q_i.
    """
    const = 0.0
    i = branch.idx_fixed
    if i.size:
        const -= float((gamma[i] * branch.cap[i]).sum())
    cb = branch.cbeta(beta)
    if branch.idx_fixed_free.size:
        const += float(np.minimum(cb[branch.idx_fixed_free], 0.0).sum())
    if branch.idx_fixed_forced.size:
        const += float(cb[branch.idx_fixed_forced].sum())
    for node in branch.fixings.v_one:
        const += branch.net.mod_nodes[node].opening_cost
    return const


@dataclass
class SubgradientResult:
    multipliers: Multipliers
    fw: FWResult
    r_hat: list
    dual_bound: float
    converged: bool
    iterations: int
    log: list = field(default_factory=list)  # (iteration, delta_norm, dual)


def subgradient(
    branch: BranchNetwork,
    eps: float = 0.05,
    max_iter: int = 500,
    fw_eps: float = 0.01,
    fw_consec: int = 5,
    fw_max_iter: int = 5000,
    warm: Optional[Multipliers] = None,
    keep_log: bool = False,
) -> SubgradientResult:
    """Projected subgradient loop on (gamma, beta) with step 1/iteration.

    Stops when the L2 norm of the multiplier change between consecutive
    iterations drops below ``eps``; on the iteration cap the best multipliers
    are returned flagged unconverged (the dual bound stays valid).
    """
    L = len(branch.t)
    if warm is not None:
        gamma, beta = warm.gamma.copy(), warm.beta.copy()
    else:
        gamma, beta = np.zeros(L), np.zeros((branch.n_groups, L))

    r_hat = [[] for _ in range(branch.n_groups)]
    best_dual = -np.inf
    log: list = []
    fw = None
    converged = False
    it = 0
    idx = branch.idx_fixed
    while it < max_iter:
        it += 1
        fw = frank_wolfe(branch, gamma, beta, eps=fw_eps, consec=fw_consec,
                         max_iter=fw_max_iter, r_hat=r_hat)
        best_dual = max(best_dual, fw.lower_bound + dual_constants(branch, gamma, beta))
        theta = 1.0 / it
        delta_sq = 0.0
        if idx.size:
            new_gamma = np.maximum(0.0, gamma[idx] + theta * (fw.X[idx] - branch.cap[idx]))
            new_beta = np.maximum(
                0.0, beta[:, idx] + theta * (fw.x[:, idx] - branch.b_sl[:, idx])
            )
            delta_sq = float(((new_gamma - gamma[idx]) ** 2).sum()) + float(
                ((new_beta - beta[:, idx]) ** 2).sum()
            )
            gamma[idx] = new_gamma
            beta[:, idx] = new_beta
        delta = delta_sq ** 0.5
        if keep_log:
            log.append((it, delta, best_dual))
        if delta < eps:
            converged = True
            break

    assert fw is not None
    return SubgradientResult(
        multipliers=Multipliers(gamma, beta, it, converged),
        fw=fw,
        r_hat=r_hat,
        dual_bound=best_dual,
        converged=converged,
        iterations=it,
        log=log,
    )


# ---------------------------------------------------------------------------
# integer recovery (y from flows/capacity, v from node throughput)
# ---------------------------------------------------------------------------

def recover_integers(
    branch: BranchNetwork, X: np.ndarray, beta: np.ndarray
) -> tuple[dict[int, float], dict[int, float]]:
    """y_hat per active fixed-route link, v_hat per active MOD node.

    Free links follow the flow/capacity ratio unless c_l(beta) went negative
    (then the relaxation opens them outright); free nodes spread total
    outbound flow over total demand (q_i(eta) stays q_i >= 0, so the
    "else 1" arm never fires for nodes). Fixed variables keep their fixing.
    """
    y_hat: dict[int, float] = {}
    cb = branch.cbeta(beta)
    for i in branch.idx_fixed_free:
        i = int(i)
        y_hat[i] = float(X[i] / branch.cap[i]) if cb[i] >= 0.0 else 1.0
    for i in branch.idx_fixed_forced:
        y_hat[int(i)] = 1.0

    v_hat: dict[int, float] = {}
    net = branch.net
    for node in net.mod_nodes:
        if node in branch.fixings.v_zero:
            continue
        if node in branch.fixings.v_one:
            v_hat[node] = 1.0
            continue
        outflow = sum(
            float(X[idx]) for idx, _ in net.graph.out_links[node] if branch.active[idx]
        )
        v_hat[node] = outflow / branch.total_demand
    return y_hat, v_hat


# ---------------------------------------------------------------------------
# path-flow recovery LP
# ---------------------------------------------------------------------------

class RecoveryError(RuntimeError):
    pass


@dataclass
class RecoveredFlows:
    path_flows: list            # per group: list of (path, flow)
    x: np.ndarray               # per-group link flows
    X: np.ndarray               # aggregate link flows
    capacity_repaired: bool
    capacity_violation: float   # residual relative violation after repair


def recover_path_flows(
    branch: BranchNetwork,
    r_hat: list,
    fw: FWResult,
    gamma: np.ndarray,
    beta: np.ndarray,
) -> RecoveredFlows:
    """Distribute demand over the accumulated path sets by LP.

    Minimizes total adjusted cost (coefficients of the relaxed objective at
    the final multipliers, access links at their final marginal cost) subject
    to per-group demand equalities and per-MOD-link aggregate flows pinned to
    the final subgradient flows.
    """
    lin = branch.base_linear_cost(gamma, beta)
    marg = branch.access_marginal(fw.X)
    w_full = lin.copy()
    w_full[branch.idx_access] = marg

    mod_used = sorted(
        {int(l) for paths in r_hat for p in paths for l in p}
        & {int(i) for i in branch.idx_mod}
    )

    def build_lp(paths_per_group, with_capacity_rows: bool) -> tuple[LinearProgram, list]:
        lp = LinearProgram(minimize=True)
        names = []
        for s, paths in enumerate(paths_per_group):
            w_s = w_full.copy()
            if branch.idx_fixed.size:
                w_s[branch.idx_fixed] += beta[s, branch.idx_fixed]
            w_s[branch.dummy_idx[s]] = branch.dummy_cost[s]
            for k, path in enumerate(paths):
                cost = float(sum(w_s[l] for l in path))
                lp.add_variable(f"x[{s}][{k}]", obj=cost)
                names.append((s, k, path))
        for s, paths in enumerate(paths_per_group):
            lp.add_constraint(
                {f"x[{s}][{k}]": 1.0 for k in range(len(paths))}, "=", float(branch.demand[s])
            )
        for l in mod_used:
            coefs = {}
            for s, paths in enumerate(paths_per_group):
                for k, path in enumerate(paths):
                    if l in path:
                        coefs[f"x[{s}][{k}]"] = coefs.get(f"x[{s}][{k}]", 0.0) + 1.0
            lp.add_constraint(coefs, "=", float(fw.X[l]))
        if with_capacity_rows:
            for i in branch.idx_fixed:
                i = int(i)
                coefs = {}
                for s, paths in enumerate(paths_per_group):
                    for k, path in enumerate(paths):
                        if i in path:
                            coefs[f"x[{s}][{k}]"] = 1.0
                if coefs:
                    lp.add_constraint(coefs, "<=", float(branch.cap[i]))
        return lp, names

    paths_per_group = [list(paths) for paths in r_hat]
    lp, names = build_lp(paths_per_group, with_capacity_rows=False)
    sol = solve_lp(lp)
    if sol.status == INFEASIBLE:
        # r_hat too small to reproduce the pinned flows: add one more AON pass
        from .assignment import all_or_nothing

        extra, chosen = all_or_nothing(branch, w_full, beta, fw.X)
        for s, path in enumerate(chosen):
            if path not in paths_per_group[s]:
                paths_per_group[s].append(path)
        lp, names = build_lp(paths_per_group, with_capacity_rows=False)
        sol = solve_lp(lp)
        if sol.status != OPTIMAL:
            raise RecoveryError("path-flow recovery LP infeasible")
    elif sol.status != OPTIMAL:
        raise RecoveryError(f"path-flow recovery LP {sol.status}")

    def assemble(solution) -> tuple[list, np.ndarray]:
        flows = [[] for _ in range(branch.n_groups)]
        x = np.zeros((branch.n_groups, len(branch.t)))
        for (s, k, path), val in zip(names, solution.x):
            v = float(val)
            if v > MATCH_TOL:
                flows[s].append((path, v))
                for l in path:
                    x[s, l] += v
        return flows, x

    flows, x = assemble(sol)
    X = x.sum(axis=0)

    repaired = False
    violation = 0.0
    if branch.idx_fixed.size:
        rel = (X[branch.idx_fixed] - branch.cap[branch.idx_fixed]) / branch.cap[branch.idx_fixed]
        violation = float(np.max(rel)) if rel.size else 0.0
        if violation > CAPACITY_SLACK:
            lp2, names2 = build_lp(paths_per_group, with_capacity_rows=True)
            sol2 = solve_lp(lp2)
            if sol2.status == OPTIMAL:
                names = names2
                flows, x = assemble(sol2)
                X = x.sum(axis=0)
                repaired = True
                rel = (X[branch.idx_fixed] - branch.cap[branch.idx_fixed]) / branch.cap[
                    branch.idx_fixed
                ]
                violation = float(np.max(rel)) if rel.size else 0.0

    return RecoveredFlows(
        path_flows=flows, x=x, X=X, capacity_repaired=repaired,
        capacity_violation=max(violation, 0.0),
    )


# ---------------------------------------------------------------------------
# the true (unrelaxed) objective
# ---------------------------------------------------------------------------

def branch_objective(
    branch: BranchNetwork,
    X: np.ndarray,
    y_hat: dict[int, float],
    v_hat: dict[int, float],
) -> float:
    """System cost at (X, y, v): travel + congestion + operating + opening."""
    t_flow = float((branch.t * X).sum())  # dummy links carry t_s as travel cost
    congestion = branch.access_objective(X)
    operating = sum(branch.c_op[i] * y for i, y in y_hat.items())
    mod_ops = float((branch.m[branch.idx_mod] * X[branch.idx_mod]).sum()) if branch.idx_mod.size else 0.0
    opening = sum(
        branch.net.mod_nodes[node].opening_cost * v for node, v in v_hat.items()
    )
    return t_flow + congestion + operating + mod_ops + opening


# ---------------------------------------------------------------------------
# one branch end to end
# ---------------------------------------------------------------------------

@dataclass
class BranchSolution:
    net: ExpandedNetwork
    fixings: BranchFixings
    path_flows: list                 # per group: list of (link tuple, flow)
    x: np.ndarray
    X: np.ndarray
    y_hat: dict[int, float]
    v_hat: dict[int, float]
    objective: float                 # true objective at the recovered solution
    mu: np.ndarray                   # capacity prices (converged gamma)
    beta: np.ndarray
    dual_bound: float
    sg_converged: bool
    fw_converged: bool
    r_hat: list
    capacity_violation: float
    sg_iterations: int

    def fractional_vars(self, tol: float) -> list[tuple[str, int, float]]:
        """(kind, id, value) for every y/v strictly between 0 and 1."""
        out = []
        for i, y in sorted(self.y_hat.items()):
            if tol < y < 1.0 - tol:
                out.append(("y", i, y))
        for n, v in sorted(self.v_hat.items()):
            if tol < v < 1.0 - tol:
                out.append(("v", n, v))
        return out

    def is_integral(self, tol: float) -> bool:
        return not self.fractional_vars(tol)

    def rounded_design(self, tol: float) -> tuple[dict[int, float], dict[int, float]]:
        y = {i: (1.0 if v > 0.5 else 0.0) for i, v in self.y_hat.items()}
        v = {n: (1.0 if val > 0.5 else 0.0) for n, val in self.v_hat.items()}
        return y, v


def solve_branch(
    net: ExpandedNetwork,
    fixings: BranchFixings,
    eps_sg: float = 0.05,
    sg_max_iter: int = 500,
    fw_eps: float = 0.01,
    fw_consec: int = 5,
    fw_max_iter: int = 5000,
    warm: Optional[Multipliers] = None,
    keep_log: bool = False,
) -> BranchSolution:
    """Algorithm-1 pipeline for one branch: subgradient + recovery + objective."""
    branch = BranchNetwork(net, fixings)
    sg = subgradient(
        branch, eps=eps_sg, max_iter=sg_max_iter, fw_eps=fw_eps,
        fw_consec=fw_consec, fw_max_iter=fw_max_iter, warm=warm, keep_log=keep_log,
    )
    gamma, beta = sg.multipliers.gamma, sg.multipliers.beta
    rec = recover_path_flows(branch, sg.r_hat, sg.fw, gamma, beta)
    y_hat, v_hat = recover_integers(branch, rec.X, beta)
    obj = branch_objective(branch, rec.X, y_hat, v_hat)
    return BranchSolution(
        fixings=fixings,
        path_flows=rec.path_flows,
        x=rec.x,
        X=rec.X,
        y_hat=y_hat,
        v_hat=v_hat,
        objective=obj,
        mu=gamma,
        beta=beta,
        dual_bound=sg.dual_bound,
        sg_converged=sg.converged,
        fw_converged=sg.fw.converged,
        r_hat=sg.r_hat,
        capacity_violation=rec.capacity_violation,
        sg_iterations=sg.iterations,
    )
