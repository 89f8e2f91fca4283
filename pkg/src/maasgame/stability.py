"""Stable-outcome allocation, instability diagnostics, and minimum subsidies.

Given an integral matching (flows, operated links, opened MOD nodes), this
module builds the cost-allocation constraint system over traveler payoffs u_s
and link fares p_l:

* operator rationality rows (fare revenue covers operating cost; MOD revenue
  is counted on access links, per the formulation),
* utility-conservation equalities per matched path,
* lazily generated local-stability rows: a separation oracle searches the
  full expanded network (branch-free) for the alternative path that most
  overpays the group's current payoff, pricing unoperated infrastructure at
  its entry cost and congested access at one extra user.

Fare variables exist on operator-owned matched links only (fixed-route, MOD
access/link/egress). Walking, transfer, and opt-out links never carry fares.

The buyer-/seller-optimal vertices bound the stable outcome lattice; when the
lattice is empty, the minimum-subsidy program adds per-path per-user payments
a_r that restore feasibility at minimum total cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import BranchFixings, BranchNetwork
from .lagrangian import BranchSolution
from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, solve_lp, warm_resolve
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

SEP_TOL = 1e-6        # stability violation tolerance (absolute)
ROW_TOL = 1e-7        # feasibility tolerance when verifying outcomes
MATCH_FLOW_TOL = 1e-6  # path flow below this is not a matched path
TRIVIAL_RHS_TOL = 1e-9
MAX_ROUNDS = 1000

FARE_KINDS = (FIXED_ROUTE, MOD_ACCESS, MOD_LINK, MOD_EGRESS)

BUYER = "buyer_optimal"
SELLER = "seller_optimal"


class StabilizationError(RuntimeError):
    """An operator operates at positive cost with zero fare-able flow; no
    subsidy to travelers can make it whole (only reachable on branches that
    force open unused infrastructure)."""


@dataclass
class StableOutcome:
    vertex: str
    feasible: bool
    u: dict[str, float] = field(default_factory=dict)          # per group id
    p: dict[int, float] = field(default_factory=dict)          # per fare link
    objective: float = float("nan")
    rounds: int = 0
    binding_alt_paths: list = field(default_factory=list)      # (group_id, path)

    def payoff_total(self, demands: dict[str, float]) -> float:
        return sum(demands[g] * u for g, u in self.u.items())


@dataclass
class SubsidyPlan:
    per_path: dict = field(default_factory=dict)  # (group_id, path) -> a_r per user
    total: float = 0.0

    def of(self, group_id: str, path: tuple) -> float:
        return self.per_path.get((group_id, path), 0.0)


@dataclass
class Eq8Diagnostic:
    lhs: float
    rhs: float
    holds: bool  # True means the matched path is unstable w.r.t. the alternative


# ---------------------------------------------------------------------------
# allocation model
# ---------------------------------------------------------------------------

class AllocationModel:
    """Constraint system over (u, p[, a]) for one integral matching."""

    def __init__(
        self,
        net: ExpandedNetwork,
        sol: BranchSolution,
        subsidy_vars: bool = False,
        fixed_subsidies: Optional[SubsidyPlan] = None,
    ):
        self.net = net
        self.sol = sol
        self.subsidy_vars = subsidy_vars
        self.fixed_subsidies = fixed_subsidies or SubsidyPlan()
        self.root = BranchNetwork(net, BranchFixings())
        self.groups = self.root.groups
        self.gid = [g.id for g in self.groups]

        y_round, v_round = sol.rounded_design(0.5)
        self.y_val = y_round
        self.v_val = v_round
        self.mu = sol.mu

        # matched paths and links
        self.matched: list[list[tuple[tuple, float]]] = []
        for flows in sol.path_flows:
            self.matched.append([(p, f) for p, f in flows if f > MATCH_FLOW_TOL])
        self.matched_sets = [set(p for p, _ in flows) for flows in self.matched]
        self.X = sol.X
        links = net.links
        matched_links = sorted({l for flows in self.matched for p, _ in flows for l in p})
        self.fare_links = [l for l in matched_links if links[l].kind in FARE_KINDS]
        self.fare_set = set(self.fare_links)

        self.cost_unrecoverable: list[str] = []
        self.lp, self.path_vars = self._build_lp()
        self.alt_rows: list[tuple[str, tuple]] = []  # (group_id, path) of generated rows
        self._alt_const = self._build_alt_const()

    # -- path costs -----------------------------------------------------

    def path_travel_cost(self, path: tuple) -> float:
        """Travel disutility of a path at the matched flows (access links at
        tau(X*), one term per link)."""
        root, net = self.root, self.net
        total = 0.0
        for l in path:
            link = net.links[l]
            if link.kind == MOD_ACCESS:
                pos = int(np.flatnonzero(root.idx_access == l)[0])
                xa = float(self.X[l])
                total += float(
                    root.access_a1[pos] * xa ** root.access_b1[pos]
                    * root.access_h[pos] ** root.access_b2[pos]
                )
            else:
                total += link.travel_cost
        return total

    # -- LP construction --------------------------------------------------

    def _build_lp(self):
        lp = LinearProgram(minimize=True)  # objective set per vertex solve
        for g in self.groups:
            lp.add_variable(f"u[{g.id}]")
        for l in self.fare_links:
            lp.add_variable(f"p[{l}]")
        path_vars = {}
        if self.subsidy_vars:
            for s, flows in enumerate(self.matched):
                for k, (path, flow) in enumerate(flows):
                    name = f"a[{self.gid[s]}][{k}]"
                    lp.add_variable(name)
                    path_vars[(self.gid[s], path)] = (name, flow)

        net = self.net
        # operator rationality: fixed-route (4a)
        for op in net.scenario.fixed_route_operators:
            own = net.owner_links(op.id)
            rhs = sum(net.links[l].operating_cost * self.y_val.get(l, 0.0) for l in own)
            if rhs <= TRIVIAL_RHS_TOL:
                continue
            coefs = {f"p[{l}]": float(self.X[l]) for l in own if l in self.fare_set and self.X[l] > 0}
            if not coefs:
                self.cost_unrecoverable.append(op.id)
                coefs = {f"u[{self.gid[0]}]": 0.0}  # constant row 0 >= rhs: infeasible
            lp.add_constraint(coefs, ">=", rhs)
        # operator rationality: MOD (4b), revenue counted on access links
        for op in net.scenario.mod_operators:
            own = net.owner_links(op.id)
            rhs = 0.0
            for l in own:
                link = net.links[l]
                if link.kind == MOD_LINK:
                    rhs += link.unit_operating_cost * float(self.X[l])
            for node, info in net.mod_nodes.items():
                if info.operator == op.id:
                    rhs += info.opening_cost * self.v_val.get(node, 0.0)
            if rhs <= TRIVIAL_RHS_TOL:
                continue
            coefs = {
                f"p[{l}]": float(self.X[l])
                for l in own
                if l in self.fare_set and net.links[l].kind == MOD_ACCESS and self.X[l] > 0
            }
            if not coefs:
                self.cost_unrecoverable.append(op.id)
                coefs = {f"u[{self.gid[0]}]": 0.0}
            lp.add_constraint(coefs, ">=", rhs)
        # utility conservation per matched path (4c / 11d)
        for s, flows in enumerate(self.matched):
            g = self.groups[s]
            for k, (path, flow) in enumerate(flows):
                coefs = {f"u[{g.id}]": 1.0}
                for l in path:
                    if l in self.fare_set:
                        coefs[f"p[{l}]"] = coefs.get(f"p[{l}]", 0.0) + 1.0
                rhs = g.trip_utility - self.path_travel_cost(path)
                if self.subsidy_vars:
                    coefs[f"a[{g.id}][{k}]"] = -1.0
                else:
                    rhs += self.fixed_subsidies.of(g.id, path)
                lp.add_constraint(coefs, "=", rhs)
        return lp, path_vars

    # -- separation oracle -------------------------------------------------

    def _build_alt_const(self) -> np.ndarray:
        """Fare-free composite single-switcher entry costs (group-independent
        up to the opt-out arc, which is patched in per group)."""
        net, root = self.net, self.root
        L = len(net.links)
        w = np.empty(L)
        kinds = root.kind
        t = root.t
        for l in range(L):
            kind = kinds[l]
            if kind == FIXED_ROUTE:
                w[l] = t[l] + self.mu[l] + net.links[l].operating_cost * (
                    1.0 - self.y_val.get(l, 0.0)
                )
            elif kind in (WALKING, TRANSFER):
                w[l] = t[l]
            elif kind == MOD_LINK:
                w[l] = t[l] + root.m[l]
            elif kind == MOD_EGRESS:
                w[l] = 0.0
            elif kind == MOD_ACCESS:
                pos = int(np.flatnonzero(root.idx_access == l)[0])
                xa = float(self.X[l]) + 1.0
                w[l] = float(
                    root.access_a1[pos] * xa ** root.access_b1[pos]
                    * root.access_h[pos] ** root.access_b2[pos]
                )
            else:  # dummy: only the group's own opt-out arc is usable
                w[l] = float("inf")
        # fold node opening costs of unopened MOD nodes onto outbound links
        for l in range(L):
            if kinds[l] in (MOD_LINK, MOD_EGRESS):
                tail = net.links[l].tail
                w[l] += net.mod_nodes[tail].opening_cost * (1.0 - self.v_val.get(tail, 0.0))
        return w

    def alternative_weights(self, p: dict[int, float], group_idx: int) -> np.ndarray:
        """Composite entry costs for one group at fares p."""
        w = self._alt_const.copy()
        w[self.net.dummy_of_group[self.gid[group_idx]]] = self.groups[group_idx].dummy_cost
        for l, val in p.items():
            w[l] += val
        return w

    def separate_group(self, group_idx: int, u_val: float, p: dict[int, float]):
        """Most violated unmatched path for one group, or None."""
        net = self.net
        g = self.groups[group_idx]
        w = self.alternative_weights(p, group_idx)
        src = net.node_index[g.origin]
        dst = net.node_index[g.destination]
        cost, path = net.graph.shortest_path(w, src, dst)
        if not path:
            return None
        violation = (g.trip_utility - cost) - u_val
        if violation <= SEP_TOL:
            return None
        if path in self.matched_sets[group_idx]:
            # matched paths cannot violate by construction; hitting this means
            # the matching itself is inconsistent (wisp flows on unopened
            # links); surface no row rather than loop
            return None
        fare_sum = sum(p.get(l, 0.0) for l in path)
        const = cost - fare_sum
        return path, const, violation

    def _vals(self, solution) -> tuple[list[float], dict[int, float]]:
        u = [max(0.0, solution.value(self.lp, f"u[{g.id}]")) for g in self.groups]
        p = {l: max(0.0, solution.value(self.lp, f"p[{l}]")) for l in self.fare_links}
        return u, p

    def _row_for(self, group_idx: int, path: tuple, const: float):
        g = self.groups[group_idx]
        coefs = {f"u[{g.id}]": 1.0}
        for l in path:
            if l in self.fare_set:
                coefs[f"p[{l}]"] = coefs.get(f"p[{l}]", 0.0) + 1.0
        return coefs, ">=", g.trip_utility - const

    def generate(self, solution):
        """Row-generation loop from an initial LP solution; returns the final
        solution (possibly infeasible) once no stability row is violated."""
        rounds = 0
        while True:
            if solution.status != OPTIMAL:
                return solution, rounds
            u, p = self._vals(solution)
            new_rows = []
            for s in range(len(self.groups)):
                hit = self.separate_group(s, u[s], p)
                if hit is not None:
                    path, const, _ = hit
                    new_rows.append(self._row_for(s, path, const))
                    self.alt_rows.append((self.gid[s], path))
            if not new_rows:
                return solution, rounds
            rounds += 1
            if rounds > MAX_ROUNDS:
                raise RuntimeError("stability row generation did not terminate")
            solution = warm_resolve(self.lp, new_rows, solution)

    def set_objective(self, kind: str) -> None:
        lp = self.lp
        obj = [0.0] * lp.n_vars
        if kind == BUYER:
            for g in self.groups:
                obj[lp.var(f"u[{g.id}]")] = 1.0
            lp.minimize = False
        elif kind == SELLER:
            for l in self.fare_links:
                obj[lp.var(f"p[{l}]")] = float(self.X[l])
            lp.minimize = False
        elif kind == "min_subsidy":
            for (gid, path), (name, flow) in self.path_vars.items():
                obj[lp.var(name)] = flow
            lp.minimize = True
        else:
            raise ValueError(kind)
        lp.obj = obj


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def solve_vertex(
    net: ExpandedNetwork,
    sol: BranchSolution,
    vertex: str,
    fixed_subsidies: Optional[SubsidyPlan] = None,
    model: Optional[AllocationModel] = None,
) -> StableOutcome:
    """One vertex of the stable outcome set (buyer- or seller-optimal); the
    feasible flag is False when the outcome set is empty."""
    if model is None:
        model = AllocationModel(net, sol, fixed_subsidies=fixed_subsidies)
    model.set_objective(vertex)
    solution = solve_lp(model.lp)
    solution, rounds = model.generate(solution)
    if solution.status == INFEASIBLE:
        return StableOutcome(vertex=vertex, feasible=False, rounds=rounds)
    if solution.status == UNBOUNDED:
        raise AssertionError(
            "stable-outcome LP unbounded; payoffs are bounded by trip utilities"
        )
    u, p = model._vals(solution)
    # binding alternative rows: re-evaluate generated rows at the solution
    binding = []
    for gid, path in model.alt_rows:
        s = model.gid.index(gid)
        g = model.groups[s]
        w = model.alternative_weights(p, s)
        cost = sum(w[l] for l in path)
        if abs((g.trip_utility - cost) - u[s]) <= 1e-7:
            binding.append((gid, path))
    return StableOutcome(
        vertex=vertex,
        feasible=True,
        u={g.id: val for g, val in zip(model.groups, u)},
        p=p,
        objective=float(solution.objective),
        rounds=rounds,
        binding_alt_paths=binding,
    )


def stable_outcomes(net: ExpandedNetwork, sol: BranchSolution):
    """(buyer-optimal, seller-optimal) outcomes; both infeasible when the
    stable outcome set is empty."""
    buyer = solve_vertex(net, sol, BUYER)
    if not buyer.feasible:
        return buyer, StableOutcome(vertex=SELLER, feasible=False)
    seller = solve_vertex(net, sol, SELLER)
    return buyer, seller


def min_subsidy(net: ExpandedNetwork, sol: BranchSolution):
    """Minimum total subsidy stabilizing the matching, plus the subsidized
    buyer/seller outcomes. Raises StabilizationError when an operator's cost
    is unrecoverable by any fare (zero fare-able flow)."""
    probe = AllocationModel(net, sol, subsidy_vars=True)
    if probe.cost_unrecoverable:
        raise StabilizationError(
            "operators with positive cost but no fare-able matched flow: "
            + ", ".join(sorted(set(probe.cost_unrecoverable)))
        )
    probe.set_objective("min_subsidy")
    solution = solve_lp(probe.lp)
    solution, _ = probe.generate(solution)
    assert solution.status == OPTIMAL, "minimum-subsidy LP cannot be infeasible"
    plan = SubsidyPlan()
    total = 0.0
    for (gid, path), (name, flow) in probe.path_vars.items():
        a = solution.value(probe.lp, name)
        if a > 1e-12:
            plan.per_path[(gid, path)] = float(a)
            total += float(a) * flow
    plan.total = total

    # allocation at the fixed subsidies (both vertices), reusing the
    # generated stability rows
    def vertex_with_plan(kind: str) -> StableOutcome:
        model = AllocationModel(net, sol, fixed_subsidies=plan)
        for gid, path in probe.alt_rows:
            s = model.gid.index(gid)
            w0 = model.alternative_weights({l: 0.0 for l in model.fare_links}, s)
            const = sum(w0[l] for l in path)
            model.lp.add_constraint(*model._row_for(s, path, const))
            model.alt_rows.append((gid, path))
        return solve_vertex(net, sol, kind, model=model)

    buyer = vertex_with_plan(BUYER)
    seller = vertex_with_plan(SELLER)
    assert buyer.feasible and seller.feasible, "subsidized allocation must be feasible"
    return plan, buyer, seller


def instability_condition(
    net: ExpandedNetwork,
    sol: BranchSolution,
    group_id: str,
    matched_path: tuple,
    alt_path: tuple,
) -> Eq8Diagnostic:
    """Closed-form instability test of a matched path against one alternative
    under the fare floor implied by operator rationality.

    The fare floor charges each operator's operated cost uniformly per unit
    of flow across its matched fare-able links.
    """
    model = AllocationModel(net, sol)
    links = net.links
    s = model.gid.index(group_id)
    flows = dict(model.matched[s])
    if matched_path not in flows:
        raise ValueError("matched_path carries no flow for this group")
    x_r = flows[matched_path]

    # per-operator uniform fare floor on matched fare links
    floor: dict[int, float] = {l: 0.0 for l in model.fare_links}
    for op in net.scenario.fixed_route_operators:
        own = net.owner_links(op.id)
        cost = sum(links[l].operating_cost * model.y_val.get(l, 0.0) for l in own)
        flow = sum(float(model.X[l]) for l in own if l in model.fare_set)
        if cost > 0 and flow > 0:
            rate = cost / flow
            for l in own:
                if l in model.fare_set:
                    floor[l] = rate
    for op in net.scenario.mod_operators:
        own = net.owner_links(op.id)
        cost = sum(
            links[l].unit_operating_cost * float(model.X[l])
            for l in own
            if links[l].kind == MOD_LINK
        )
        cost += sum(
            info.opening_cost * model.v_val.get(node, 0.0)
            for node, info in net.mod_nodes.items()
            if info.operator == op.id
        )
        flow = sum(float(model.X[l]) for l in own if l in model.fare_set)
        if cost > 0 and flow > 0:
            rate = cost / flow
            for l in own:
                if l in model.fare_set:
                    floor[l] = rate

    all_matched_other = {
        p for s2, flows2 in enumerate(model.matched) for p, _ in flows2 if p != matched_path
    }
    lhs = x_r * sum(floor.get(l, 0.0) for l in matched_path) - sum(
        links[l].operating_cost for l in matched_path
    )
    shared = [
        l
        for l in matched_path
        if links[l].operating_cost > 0 and any(l in p for p in all_matched_other)
    ]
    not_operated = [
        l
        for l in alt_path
        if links[l].kind == FIXED_ROUTE and model.y_val.get(l, 0.0) < 0.5
    ]
    rhs = (
        x_r * sum(model.mu[l] for l in alt_path)
        + x_r * sum(floor.get(l, 0.0) for l in alt_path)
        - sum(links[l].operating_cost for l in shared)
        + (x_r - 1.0) * sum(links[l].operating_cost for l in not_operated)
    )
    return Eq8Diagnostic(lhs=lhs, rhs=rhs, holds=bool(lhs > rhs))


# ---------------------------------------------------------------------------
# verification (audit) helpers
# ---------------------------------------------------------------------------

@dataclass
class OutcomeAudit:
    ok: bool
    max_row_residual: float
    violated_paths: list  # (group_id, path, violation)
    notes: list


def verify_outcome(
    net: ExpandedNetwork,
    sol: BranchSolution,
    outcome: StableOutcome,
    subsidies: Optional[SubsidyPlan] = None,
) -> OutcomeAudit:
    """Re-check Eqs. 4a-4f (or the subsidized system) at a stored outcome and
    run a fresh full separation pass."""
    model = AllocationModel(net, sol, fixed_subsidies=subsidies)
    notes: list[str] = []
    if model.cost_unrecoverable:
        notes.append(
            "operator-rationality violation: no fare-able flow for "
            + ", ".join(model.cost_unrecoverable)
        )
    worst = 0.0
    # rebuild x vector in the model's variable order
    x = np.zeros(model.lp.n_vars)
    for g in model.groups:
        x[model.lp.var(f"u[{g.id}]")] = outcome.u.get(g.id, 0.0)
    for l in model.fare_links:
        x[model.lp.var(f"p[{l}]")] = outcome.p.get(l, 0.0)
    for row in model.lp.rows:
        lhs = sum(v * x[j] for j, v in row.coefs.items())
        if row.rel == ">=":
            worst = max(worst, row.rhs - lhs)
        elif row.rel == "<=":
            worst = max(worst, lhs - row.rhs)
        else:
            worst = max(worst, abs(lhs - row.rhs))
    for g in model.groups:
        worst = max(worst, -outcome.u.get(g.id, 0.0))
    for l in model.fare_links:
        worst = max(worst, -outcome.p.get(l, 0.0))

    violated = []
    p = {l: outcome.p.get(l, 0.0) for l in model.fare_links}
    for s, g in enumerate(model.groups):
        hit = model.separate_group(s, outcome.u.get(g.id, 0.0), p)
        if hit is not None:
            path, _, violation = hit
            violated.append((g.id, path, violation))
    ok = worst <= ROW_TOL and not violated and not model.cost_unrecoverable
    return OutcomeAudit(ok=ok, max_row_residual=float(worst), violated_paths=violated, notes=notes)


def operator_revenues(net: ExpandedNetwork, sol: BranchSolution, outcome: StableOutcome):
    """Fare revenue per operator at an outcome; None marks a non-operating
    operator (the "Not Operating" rows of the revenue tables)."""
    y_round, v_round = sol.rounded_design(0.5)
    out: dict[str, Optional[float]] = {}
    for op in [o.id for o in net.scenario.fixed_route_operators] + [
        o.id for o in net.scenario.mod_operators
    ]:
        own = net.owner_links(op)
        operating = any(
            y_round.get(l, 0.0) > 0.5
            for l in own
            if net.links[l].kind == FIXED_ROUTE
        ) or any(
            v > 0.5 for n, v in v_round.items() if net.mod_nodes[n].operator == op
        )
        if not operating:
            out[op] = None
            continue
        out[op] = sum(outcome.p.get(l, 0.0) * float(sol.X[l]) for l in own)
    return out


def conservation_identity(
    net: ExpandedNetwork,
    sol: BranchSolution,
    outcome: StableOutcome,
    subsidies: Optional[SubsidyPlan] = None,
) -> tuple[float, float]:
    """(lhs, rhs) of the surplus conservation identity: total payoff + total
    fares + system travel cost - total subsidies == total trip utility."""
    model = AllocationModel(net, sol, fixed_subsidies=subsidies)
    demands = {g.id: g.demand for g in model.groups}
    payoff = sum(demands[gid] * u for gid, u in outcome.u.items())
    fares = sum(outcome.p.get(l, 0.0) * float(sol.X[l]) for l in model.fare_links)
    travel = 0.0
    for s, flows in enumerate(model.matched):
        for path, flow in flows:
            travel += flow * model.path_travel_cost(path)
    sub_total = 0.0
    if subsidies is not None:
        for s, flows in enumerate(model.matched):
            for path, flow in flows:
                sub_total += flow * subsidies.of(model.gid[s], path)
    lhs = payoff + fares + travel - sub_total
    rhs = sum(g.demand * g.trip_utility for g in model.groups)
    return lhs, rhs
