"""Relaxed convex assignment solved by a modified Frank-Wolfe method.

For a fixed branch (design variables fixed or relaxed) and fixed capacity /
strong-forcing multipliers (gamma, beta), the remaining problem is a convex
multicommodity assignment whose only nonlinearity is the congested
access-link term. Shortest paths are taken against marginal access costs;
the line search zeroes the directional derivative via bisection (the
derivative is monotone by convexity, so bisection is exact).

Adjusted link-cost coefficients are branch-fixing-aware: links forced open
pay their operating cost as a constant, not per unit of flow (see the
lagrangian module for the matching constant terms in the dual bound).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import (
    DUMMY,
    FIXED_ROUTE,
    MOD_ACCESS,
    MOD_EGRESS,
    MOD_LINK,
    TRANSFER,
    WALKING,
    ExpandedNetwork,
)
from .paths import GraphView

LINESEARCH_TOL = 1e-10
LINESEARCH_MAX_ITER = 100
GAP_EXACT_TOL = 1e-12
FLOW_TOL = 1e-9


@dataclass(frozen=True)
class BranchFixings:
    """Design-variable fixings of one branch-and-bound node.

    y_one/y_zero hold fixed-route link indices, v_one/v_zero MOD node
    indices. v_one membership requires all same-operator nodes with a
    different fleet size to sit in v_zero (use ``with_v``, which closes the
    set automatically).
    """

    y_one: frozenset[int] = frozenset()
    y_zero: frozenset[int] = frozenset()
    v_one: frozenset[int] = frozenset()
    v_zero: frozenset[int] = frozenset()

    def with_y(self, link_idx: int, value: int) -> "BranchFixings":
        if value:
            return BranchFixings(self.y_one | {link_idx}, self.y_zero, self.v_one, self.v_zero)
        return BranchFixings(self.y_one, self.y_zero | {link_idx}, self.v_one, self.v_zero)

    def with_v(self, net: ExpandedNetwork, node: int, value: int) -> "BranchFixings":
        if value:
            siblings = frozenset(net.mod_siblings_other_fleet(node))
            return BranchFixings(
                self.y_one, self.y_zero, self.v_one | {node}, self.v_zero | siblings
            )
        return BranchFixings(self.y_one, self.y_zero, self.v_one, self.v_zero | {node})


def validate_fixings(net: ExpandedNetwork, fx: BranchFixings) -> None:
    if fx.y_one & fx.y_zero:
        raise ValueError("y fixed to both 0 and 1")
    if fx.v_one & fx.v_zero:
        raise ValueError("v fixed to both 0 and 1")
    for node in fx.v_one:
        missing = set(net.mod_siblings_other_fleet(node)) - fx.v_zero
        if missing:
            raise ValueError(f"v_one node {node} without fleet-exclusive v_zero set")


class BranchNetwork:
    """Expanded network filtered by branch fixings, with dense cost arrays."""

    def __init__(self, net: ExpandedNetwork, fixings: BranchFixings = BranchFixings()):
        validate_fixings(net, fixings)
        self.net = net
        self.fixings = fixings
        L = len(net.links)
        active = np.ones(L, dtype=bool)
        for idx in fixings.y_zero:
            active[idx] = False
        for idx in fixings.y_one:
            for sib in net.sibling_options(idx):
                active[sib] = False
        for node in fixings.v_zero:
            for idx, _ in net.graph.out_links[node]:
                active[idx] = False
            for l in net.links:
                if l.head == node:
                    active[l.idx] = False
        self.active = active

        links = net.links
        self.kind = np.array([l.kind for l in links])
        self.t = np.array([l.travel_cost for l in links])
        self.cap = np.array([l.capacity for l in links])
        self.c_op = np.array([l.operating_cost for l in links])
        self.m = np.array([l.unit_operating_cost for l in links])
        self.q_tail = np.array([l.tail_node_cost for l in links])

        kinds = self.kind
        self.idx_fixed = np.flatnonzero(active & (kinds == FIXED_ROUTE))
        self.idx_fixed_forced = np.array(
            sorted(i for i in fixings.y_one if active[i]), dtype=int
        )
        forced = set(self.idx_fixed_forced.tolist())
        self.idx_fixed_free = np.array(
            [i for i in self.idx_fixed if i not in forced], dtype=int
        )
        self.idx_access = np.flatnonzero(active & (kinds == MOD_ACCESS))
        self.idx_mod = np.flatnonzero(active & (kinds == MOD_LINK))
        self.idx_egress = np.flatnonzero(active & (kinds == MOD_EGRESS))
        self.idx_dummy = np.flatnonzero(active & (kinds == DUMMY))

        self.access_a1 = np.array([links[int(i)].access.a1 for i in self.idx_access])
        self.access_b1 = np.array([links[int(i)].access.b1 for i in self.idx_access])
        self.access_b2 = np.array([links[int(i)].access.b2 for i in self.idx_access])
        self.access_h = np.array([float(links[int(i)].fleet_size) for i in self.idx_access])

        self.groups = list(net.scenario.traveler_groups)
        self.n_groups = len(self.groups)
        self.demand = np.array([g.demand for g in self.groups])
        self.total_demand = max(float(self.demand.sum()), 1e-12)
        self.origin = np.array([net.node_index[g.origin] for g in self.groups])
        self.dest = np.array([net.node_index[g.destination] for g in self.groups])
        self.dummy_idx = np.array([net.dummy_of_group[g.id] for g in self.groups])
        self.dummy_cost = np.array([g.dummy_cost for g in self.groups])

        # strong-forcing bounds b_sl = min(d_s, w_l) on fixed-route links
        self.b_sl = np.minimum.outer(self.demand, self.cap)

        # node-cost spreading q_i / total demand on outbound links of free MOD
        # nodes; forced-open nodes pay q_i as a constant instead
        self.q_term = np.zeros(L)
        for i in np.concatenate([self.idx_mod, self.idx_egress]):
            tail = links[int(i)].tail
            if tail not in fixings.v_one:
                self.q_term[int(i)] = self.q_tail[int(i)] / self.total_demand

        # routing graph excludes dummies: the opt-out arc is compared directly
        act_idx = np.flatnonzero(active & (kinds != DUMMY))
        self.route_idx = act_idx
        self.graph = GraphView(
            len(net.node_ids),
            [links[int(i)].tail for i in act_idx],
            [links[int(i)].head for i in act_idx],
        )

    # -- cost vectors ----------------------------------------------------

    def cbeta(self, beta: np.ndarray) -> np.ndarray:
        """c_l(beta) = c_l - sum_s b_sl beta_sl on fixed-route links (full-length)."""
        out = np.zeros(len(self.t))
        idx = self.idx_fixed
        if idx.size:
            out[idx] = self.c_op[idx] - (self.b_sl[:, idx] * beta[:, idx]).sum(axis=0)
        return out

    def base_linear_cost(self, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Group-independent linear coefficients (access columns stay 0; the
        access term enters via marginal costs / the nonlinear objective)."""
        lin = np.zeros(len(self.t))
        k = self.kind
        walkish = np.flatnonzero(self.active & ((k == WALKING) | (k == TRANSFER)))
        lin[walkish] = self.t[walkish]
        if self.idx_fixed_free.size:
            i = self.idx_fixed_free
            cb = self.cbeta(beta)
            lin[i] = self.t[i] + gamma[i] + np.maximum(cb[i], 0.0) / self.cap[i]
        if self.idx_fixed_forced.size:
            i = self.idx_fixed_forced
            lin[i] = self.t[i] + gamma[i]
        if self.idx_mod.size:
            i = self.idx_mod
            lin[i] = self.t[i] + self.m[i] + self.q_term[i]
        if self.idx_egress.size:
            i = self.idx_egress
            lin[i] = self.q_term[i]
        return lin

    def access_marginal(self, X: np.ndarray) -> np.ndarray:
        """Marginal cost d(tau * X)/dX on active access links."""
        xa = X[self.idx_access]
        return self.access_a1 * (self.access_b1 + 1.0) * xa ** self.access_b1 * (
            self.access_h ** self.access_b2
        )

    def access_objective(self, X: np.ndarray) -> float:
        xa = X[self.idx_access]
        return float(
            (self.access_a1 * xa ** (self.access_b1 + 1.0) * self.access_h ** self.access_b2).sum()
        )

    def group_linear(self, lin: np.ndarray, beta: np.ndarray, s: int) -> np.ndarray:
        w = lin.copy()
        if self.idx_fixed.size:
            w[self.idx_fixed] += beta[s, self.idx_fixed]
        w[self.dummy_idx[s]] = self.dummy_cost[s]
        return w

    def objective(self, x: np.ndarray, lin: np.ndarray, beta: np.ndarray) -> float:
        """Relaxed objective at per-group flows x (dummies priced per group)."""
        X = x.sum(axis=0)
        val = float((lin * X).sum())
        if self.idx_fixed.size:
            val += float((beta[:, self.idx_fixed] * x[:, self.idx_fixed]).sum())
        val += float((self.dummy_cost * x[np.arange(self.n_groups), self.dummy_idx]).sum())
        return val + self.access_objective(X)

    def conservation_residual(self, x: np.ndarray) -> float:
        """Max absolute node imbalance of per-group flows against demands."""
        worst = 0.0
        n_nodes = len(self.net.node_ids)
        tails = np.array([l.tail for l in self.net.links])
        heads = np.array([l.head for l in self.net.links])
        for s in range(self.n_groups):
            bal = np.zeros(n_nodes)
            np.add.at(bal, tails, x[s])
            np.add.at(bal, heads, -x[s])
            bal[self.origin[s]] -= self.demand[s]
            bal[self.dest[s]] += self.demand[s]
            worst = max(worst, float(np.abs(bal).max()))
        return worst


def adjusted_cost(
    branch: BranchNetwork,
    link_idx: int,
    group: int,
    gamma: np.ndarray,
    beta: np.ndarray,
    X: Optional[np.ndarray] = None,
) -> float:
    """Adjusted cost coefficient of one link for one group (tests/debugging).

    Access links require current aggregate flows X and return the marginal
    cost; every other kind returns its linear coefficient.
    """
    kind = branch.kind[link_idx]
    if kind == MOD_ACCESS:
        if X is None:
            raise ValueError("access links need aggregate flows")
        marg = branch.access_marginal(X)
        pos = int(np.flatnonzero(branch.idx_access == link_idx)[0])
        return float(marg[pos])
    lin = branch.base_linear_cost(gamma, beta)
    w = branch.group_linear(lin, beta, group)
    return float(w[link_idx])


@dataclass
class FWResult:
    x: np.ndarray                  # per-group link flows (S, L)
    X: np.ndarray                  # aggregate link flows (L,)
    objective: float               # relaxed objective at the final flows
    lower_bound: float             # best linearized bound on the relaxed optimum
    iterations: int
    converged: bool
    final_gap: float
    paths: list                    # per-group paths discovered (R-hat)


def all_or_nothing(branch: BranchNetwork, lin: np.ndarray, beta: np.ndarray, X: np.ndarray):
    """Assign each group's demand to its minimum-adjusted-cost path.

    Returns (per-group auxiliary flows, per-group chosen path). The opt-out
    dummy always provides a finite fallback, so every group is routable.
    """
    S, L = branch.n_groups, len(branch.t)
    F = np.zeros((S, L))
    chosen: list[tuple[int, ...]] = []

    weights_full = lin.copy()
    weights_full[branch.idx_access] = branch.access_marginal(X)
    w_local_base = weights_full[branch.route_idx]
    beta_static = not branch.idx_fixed.size or not np.any(beta[:, branch.idx_fixed])

    tree_cache: dict[int, tuple[list, list]] = {}
    for s in range(branch.n_groups):
        src, dst = int(branch.origin[s]), int(branch.dest[s])
        if beta_static:
            if src not in tree_cache:
                tree_cache[src] = branch.graph.shortest_tree(w_local_base, src)
            dist, pred = tree_cache[src]
        else:
            w_local = w_local_base + beta[s, branch.route_idx]
            dist, pred = branch.graph.shortest_tree(w_local, src)
        net_cost = dist[dst]
        dummy = int(branch.dummy_idx[s])
        dummy_cost = float(branch.dummy_cost[s])
        if net_cost < dummy_cost - 1e-12:
            use_dummy = False
        elif net_cost > dummy_cost + 1e-12:
            use_dummy = True
        else:
            local_seq = branch.graph.path_from_tree(pred, src, dst)
            seq = tuple(int(branch.route_idx[i]) for i in local_seq)
            use_dummy = not seq or (dummy,) < seq
        if use_dummy:
            path = (dummy,)
        else:
            local_seq = branch.graph.path_from_tree(pred, src, dst)
            path = tuple(int(branch.route_idx[i]) for i in local_seq)
            assert path, "destination unreachable despite dummy fallback"
        for idx in path:
            F[s, idx] += branch.demand[s]
        chosen.append(path)
    return F, chosen


def line_search(
    branch: BranchNetwork,
    x: np.ndarray,
    y: np.ndarray,
    lin: np.ndarray,
    beta: np.ndarray,
) -> float:
    """Zero of the directional derivative of the relaxed objective along
    (y - x), clamped to [0, 1]."""
    D = y - x
    Dagg = D.sum(axis=0)
    lin_dot = float((lin * Dagg).sum())
    if branch.idx_fixed.size:
        lin_dot += float((beta[:, branch.idx_fixed] * D[:, branch.idx_fixed]).sum())
    lin_dot += float((branch.dummy_cost * D[np.arange(branch.n_groups), branch.dummy_idx]).sum())

    Xa = x.sum(axis=0)[branch.idx_access]
    Da = Dagg[branch.idx_access]

    def g(alpha: float) -> float:
        xa = np.clip(Xa + alpha * Da, 0.0, None)
        marg = branch.access_a1 * (branch.access_b1 + 1.0) * xa ** branch.access_b1 * (
            branch.access_h ** branch.access_b2
        )
        return lin_dot + float((marg * Da).sum())

    if g(0.0) >= 0.0:
        return 0.0
    if g(1.0) <= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(LINESEARCH_MAX_ITER):
        mid = 0.5 * (lo + hi)
        val = g(mid)
        if abs(val) < LINESEARCH_TOL:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def frank_wolfe(
    branch: BranchNetwork,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 0.01,
    consec: int = 5,
    max_iter: int = 5000,
    r_hat: Optional[list] = None,
    trace: Optional[list] = None,
) -> FWResult:
    """Modified Frank-Wolfe solve of the relaxed assignment.

    Starts from all demand on the opt-out dummies; stops when the step size
    alpha stays below ``eps`` for ``consec`` consecutive iterations, or
    immediately once the linearized gap certifies optimality. Newly
    discovered shortest paths accumulate into ``r_hat`` without duplicates.
    """
    S, L = branch.n_groups, len(branch.t)
    lin = branch.base_linear_cost(gamma, beta)

    x = np.zeros((S, L))
    x[np.arange(S), branch.dummy_idx] = branch.demand

    if r_hat is None:
        r_hat = [[] for _ in range(S)]
    seen = [set(paths) for paths in r_hat]
    for s in range(S):
        dummy_path = (int(branch.dummy_idx[s]),)
        if dummy_path not in seen[s]:
            r_hat[s].append(dummy_path)
            seen[s].add(dummy_path)

    best_lb = -np.inf
    count = 0
    converged = False
    gap = np.inf
    it = 0
    obj = branch.objective(x, lin, beta)
    while it < max_iter:
        it += 1
        X = x.sum(axis=0)
        y, chosen = all_or_nothing(branch, lin, beta, X)
        for s, path in enumerate(chosen):
            if path not in seen[s]:
                r_hat[s].append(path)
                seen[s].add(path)
        # linearized optimality bound: Z(x) + grad(x).(y - x) <= Z*
        D = y - x
        Dagg = D.sum(axis=0)
        grad_dot = float((lin * Dagg).sum())
        if branch.idx_fixed.size:
            grad_dot += float((beta[:, branch.idx_fixed] * D[:, branch.idx_fixed]).sum())
        grad_dot += float((branch.dummy_cost * D[np.arange(S), branch.dummy_idx]).sum())
        grad_dot += float((branch.access_marginal(X) * Dagg[branch.idx_access]).sum())
        best_lb = max(best_lb, obj + grad_dot)
        gap = obj - best_lb
        if grad_dot >= -GAP_EXACT_TOL:
            converged = True
            if trace is not None:
                trace.append((it, 0.0, obj))
            break
        alpha = line_search(branch, x, y, lin, beta)
        x = x + alpha * D
        np.clip(x, 0.0, None, out=x)
        obj = branch.objective(x, lin, beta)
        if trace is not None:
            trace.append((it, alpha, obj))
        if alpha < eps:
            count += 1
            if count >= consec:
                converged = True
                break
        else:
            count = 0

    X = x.sum(axis=0)
    X[np.abs(X) < FLOW_TOL] = 0.0
    return FWResult(
        x=x,
        X=X,
        objective=obj,
        lower_bound=best_lb,
        iterations=it,
        converged=converged,
        final_gap=max(gap, 0.0),
        paths=r_hat,
    )
