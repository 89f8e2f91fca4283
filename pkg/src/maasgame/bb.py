"""Branch-and-bound search over operated links and MOD nodes.

Two modes share one best-bound search:

* exact: finds the system-optimal matching. Integral branch solutions update
  the upper bound; branches close when their Lagrangian dual bound reaches
  the incumbent.
* heuristic: every integral solution is stability-checked. Feasible
  allocations enter the locally stable set with zero subsidy; empty outcome
  sets are priced by the minimum-subsidy program and the subsidized cost
  competes for the incumbent. Integral-but-worse candidates whose raw cost
  still beats the incumbent stay on a deferred queue for reporting. Because
  pruning compares the (smaller) matching bound against the (larger)
  subsidized incumbent, the returned cost is bounded by the optimal matching
  cost plus its minimum subsidy.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import BranchFixings, BranchNetwork
from .lagrangian import BranchSolution, Multipliers, branch_objective, solve_branch
from .network import ExpandedNetwork
from .stability import (
    BUYER,
    SELLER,
    StabilizationError,
    StableOutcome,
    SubsidyPlan,
    min_subsidy,
    stable_outcomes,
)

EXACT = "exact"
HEURISTIC = "heuristic"

ALL_CLOSED = "all_closed"
GAP_REACHED = "gap_reached"
BRANCH_CAP = "branch_cap"
TIME_CAP = "time_cap"


@dataclass
class SolveOptions:
    eps_sg: float = 0.05
    sg_max_iter: int = 500
    eps_fw: float = 0.01
    fw_consec: int = 5
    fw_max_iter: int = 5000
    integrality_tol: float = 1e-4
    gap_tol: Optional[float] = None       # relative (upper - lower) / |lower|
    max_branches: Optional[int] = None
    max_time: Optional[float] = None      # seconds
    prune_rel: float = 1e-6
    threads: int = 1                      # reserved for separation parallelism
    keep_solutions: bool = False          # retain every branch solution (tests)


@dataclass
class _Node:
    bound: float
    counter: int
    fixings: BranchFixings
    warm: Optional[Multipliers]
    depth: int

    def __lt__(self, other: "_Node") -> bool:
        return (self.bound, self.counter) < (other.bound, other.counter)


def branch_select(sol: BranchSolution, tol: float) -> tuple[str, int]:
    """Most fractional y/v (closest to 0.5); ties by larger cost coefficient
    (c_l or q_i), then lowest id. Raises on integral solutions."""
    fracs = sol.fractional_vars(tol)
    if not fracs:
        raise ValueError("branch_select called on an integral solution")

    def cost_of(kind: str, ident: int) -> float:
        if kind == "y":
            return 0.0  # replaced below by the capturing closure
        return 0.0

    def key(item):
        kind, ident, val = item
        if kind == "y":
            cost = _net_of_sol.links[ident].operating_cost
            kind_rank = 0
        else:
            cost = _net_of_sol.mod_nodes[ident].opening_cost
            kind_rank = 1
        return (abs(val - 0.5), -cost, kind_rank, ident)

    global _net_of_sol
    _net_of_sol = sol_net(sol)
    kind, ident, _ = min(fracs, key=key)
    return kind, ident


def sol_net(sol: BranchSolution) -> ExpandedNetwork:
    # BranchSolution carries no network reference; the search attaches one
    return sol._net  # type: ignore[attr-defined]


@dataclass
class StableCandidate:
    objective: float          # matching cost of the integral solution
    subsidized: float         # objective + total subsidy (== objective when stable)
    stable_without_subsidy: bool
    fixings: BranchFixings
    solution: Optional[BranchSolution] = None


@dataclass
class SearchResult:
    mode: str
    best: Optional[BranchSolution]
    upper: float
    lower: float
    status: str
    branches: int
    wall_time: float
    records: list = field(default_factory=list)
    # heuristic-mode extras
    buyer: Optional[StableOutcome] = None
    seller: Optional[StableOutcome] = None
    subsidy: Optional[SubsidyPlan] = None
    locally_stable: list = field(default_factory=list)   # StableCandidate
    deferred_queue: list = field(default_factory=list)   # StableCandidate

    @property
    def gap(self) -> float:
        if self.upper == float("inf"):
            return float("inf")
        return max(0.0, self.upper - self.lower)

    @property
    def relative_gap(self) -> float:
        if self.upper == float("inf"):
            return float("inf")
        return self.gap / max(abs(self.lower), 1e-12)


def _rounded_objective(root: BranchNetwork, sol: BranchSolution) -> float:
    y, v = sol.rounded_design(0.5)
    return branch_objective(root, sol.X, y, v)


def _search(net: ExpandedNetwork, mode: str, options: SolveOptions) -> SearchResult:
    t0 = time.monotonic()
    root_branch = BranchNetwork(net, BranchFixings())
    heap: list[_Node] = []
    counter = 0
    heapq.heappush(heap, _Node(-float("inf"), counter, BranchFixings(), None, 0))

    incumbent_value = float("inf")
    best: Optional[BranchSolution] = None
    best_buyer = best_seller = None
    best_plan: Optional[SubsidyPlan] = None
    locally_stable: list[StableCandidate] = []
    deferred: list[StableCandidate] = []
    records: list[dict] = []
    lower = -float("inf")
    status = ALL_CLOSED
    branches = 0

    def prune_eps() -> float:
        if incumbent_value == float("inf"):
            return 0.0
        return options.prune_rel * max(1.0, abs(incumbent_value))

    while heap:
        if options.max_time is not None and time.monotonic() - t0 > options.max_time:
            status = TIME_CAP
            break
        if options.max_branches is not None and branches >= options.max_branches:
            status = BRANCH_CAP
            break
        node = heapq.heappop(heap)
        lower = max(lower, node.bound) if node.bound > -float("inf") else lower
        if node.bound >= incumbent_value - prune_eps():
            records.append(
                {"node": node.counter, "status": "pruned", "lb": node.bound,
                 "fixings": _fix_summary(net, node.fixings)}
            )
            continue
        if (
            options.gap_tol is not None
            and incumbent_value < float("inf")
            and lower > -float("inf")
            and (incumbent_value - lower) / max(abs(lower), 1e-12) <= options.gap_tol
        ):
            heapq.heappush(heap, node)  # still open; reflected in the bound
            status = GAP_REACHED
            break

        branches += 1
        sol = solve_branch(
            net,
            node.fixings,
            eps_sg=options.eps_sg,
            sg_max_iter=options.sg_max_iter,
            fw_eps=options.eps_fw,
            fw_consec=options.fw_consec,
            fw_max_iter=options.fw_max_iter,
            warm=node.warm,
        )
        sol._net = net  # type: ignore[attr-defined]
        lb = max(node.bound, sol.dual_bound)
        record = {
            "node": node.counter,
            "depth": node.depth,
            "lb": lb,
            "objective": sol.objective,
            "fixings": _fix_summary(net, node.fixings),
            "sg_converged": sol.sg_converged,
        }

        if lb >= incumbent_value - prune_eps():
            record["status"] = "bound_closed"
            records.append(record)
            continue

        if sol.is_integral(options.integrality_tol):
            ub_obj = _rounded_objective(root_branch, sol)
            record["integral"] = True
            record["objective"] = ub_obj
            if mode == EXACT:
                if ub_obj < incumbent_value:
                    incumbent_value = ub_obj
                    best = sol
                record["status"] = "integral"
            else:
                record["status"] = "integral"
                try:
                    buyer, seller = stable_outcomes(net, sol)
                    if buyer.feasible:
                        cand = StableCandidate(
                            objective=ub_obj, subsidized=ub_obj,
                            stable_without_subsidy=True, fixings=node.fixings,
                            solution=sol if options.keep_solutions else None,
                        )
                        locally_stable.append(cand)
                        record["stable"] = True
                        record["subsidy"] = 0.0
                        if ub_obj < incumbent_value:
                            incumbent_value = ub_obj
                            best, best_buyer, best_seller, best_plan = (
                                sol, buyer, seller, SubsidyPlan()
                            )
                    else:
                        plan, sub_buyer, sub_seller = min_subsidy(net, sol)
                        z_sub = ub_obj + plan.total
                        record["stable"] = False
                        record["subsidy"] = plan.total
                        if z_sub < incumbent_value:
                            incumbent_value = z_sub
                            best, best_buyer, best_seller, best_plan = (
                                sol, sub_buyer, sub_seller, plan
                            )
                        elif ub_obj < incumbent_value:
                            deferred.append(
                                StableCandidate(
                                    objective=ub_obj, subsidized=z_sub,
                                    stable_without_subsidy=False, fixings=node.fixings,
                                    solution=sol if options.keep_solutions else None,
                                )
                            )
                            record["deferred"] = True
                except StabilizationError as exc:
                    record["status"] = "unstabilizable"
                    record["note"] = str(exc)
            records.append(record)
            continue

        kind, ident = branch_select(sol, options.integrality_tol)
        record["status"] = "branched"
        record["branch_on"] = f"{kind}:{ident}"
        records.append(record)
        for value in (1, 0):
            counter += 1
            if kind == "y":
                child = node.fixings.with_y(ident, value)
            else:
                child = node.fixings.with_v(net, ident, value)
            heapq.heappush(
                heap, _Node(lb, counter, child, sol_multipliers(sol), node.depth + 1)
            )

    if not heap and status == ALL_CLOSED:
        lower = incumbent_value

    if mode == EXACT and best is None and status == ALL_CLOSED:
        raise AssertionError(
            "no integral branch found; unreachable when opt-out dummies exist"
        )

    return SearchResult(
        mode=mode,
        best=best,
        upper=incumbent_value,
        lower=lower,
        status=status,
        branches=branches,
        wall_time=time.monotonic() - t0,
        records=records,
        buyer=best_buyer,
        seller=best_seller,
        subsidy=best_plan,
        locally_stable=locally_stable,
        deferred_queue=deferred,
    )


def sol_multipliers(sol: BranchSolution) -> Multipliers:
    return Multipliers(sol.mu.copy(), sol.beta.copy())


def _fix_summary(net: ExpandedNetwork, fx: BranchFixings) -> dict:
    return {
        "y1": sorted(fx.y_one),
        "y0": sorted(fx.y_zero),
        "v1": sorted(net.node_ids[n] for n in fx.v_one),
        "v0": sorted(net.node_ids[n] for n in fx.v_zero),
    }


def solve_matching(net: ExpandedNetwork, options: Optional[SolveOptions] = None) -> SearchResult:
    """Exact branch-and-bound for the system-optimal matching."""
    return _search(net, EXACT, options or SolveOptions())


def solve_stable(net: ExpandedNetwork, options: Optional[SolveOptions] = None) -> SearchResult:
    """Bounded heuristic: best locally stable (possibly subsidized) solution.

    Guarantee: the returned subsidized cost is at most the optimal matching
    cost plus the minimum subsidy at that matching.
    """
    return _search(net, HEURISTIC, options or SolveOptions())
