import numpy as np
import pytest

from maasgame import datasets
from maasgame.assignment import (
    BranchFixings,
    BranchNetwork,
    adjusted_cost,
    all_or_nothing,
    frank_wolfe,
    line_search,
)
from maasgame.network import DUMMY, FIXED_ROUTE, MOD_ACCESS, MOD_LINK, expand
from maasgame.scenario import (
    AccessCostParams,
    ModLinkCostRule,
    ModOperator,
    Node,
    OperatingCostParams,
    Scenario,
    TravelerGroup,
    WalkLink,
)


def zeros_multipliers(branch):
    L = len(branch.t)
    return np.zeros(L), np.zeros((branch.n_groups, L))


def fig2_branch(y_value=None):
    net = expand(datasets.build_fig2())
    fixed = net.fixed_route_links()[0]
    fx = BranchFixings()
    if y_value is not None:
        fx = fx.with_y(fixed, y_value)
    return net, BranchNetwork(net, fx), fixed


def congested_scenario(dummy_cost=10.0, a1=0.1, demand=100.0):
    """One OD pair; opting out costs `dummy_cost`; the alternative is a MOD
    ride whose access link congests as a1 * x (zone pair connected by an
    expensive walk so the factor rule has a base path)."""
    return Scenario(
        name="congested",
        nodes=(Node("o"), Node("d")),
        walk_links=(WalkLink("o", "d", 50.0), WalkLink("d", "o", 50.0)),
        mod_operators=(
            ModOperator(
                "m",
                ("o", "d"),
                (1,),
                AccessCostParams(a1=a1, b1=1.0, b2=0.0),
                OperatingCostParams(a2=1e-9, b3=1.0),
                {},
                ModLinkCostRule(mode="matrix", matrix={("o", "d"): 0.0, ("d", "o"): 0.0}),
            ),
        ),
        traveler_groups=(
            TravelerGroup("g", "o", "d", demand, 100.0, optout_disutility=dummy_cost),
        ),
    )


# ---------------------------------------------------------------------------
# adjusted costs
# ---------------------------------------------------------------------------

def test_adjusted_cost_zero_multipliers_fixed_link():
    net, branch, fixed = fig2_branch()
    gamma, beta = zeros_multipliers(branch)
    # t + c/w with capacity defaulted to total demand (200)
    assert adjusted_cost(branch, fixed, 0, gamma, beta) == pytest.approx(12.0 + 480.0 / 200.0)


def test_adjusted_cost_clamps_negative_cbeta():
    net, branch, fixed = fig2_branch()
    gamma, beta = zeros_multipliers(branch)
    gamma[fixed] = 0.7
    beta[:, fixed] = 100.0  # sum b_sl * beta >> c_l
    for s in range(branch.n_groups):
        expected = 12.0 + 0.7 + 0.0 + 100.0
        assert adjusted_cost(branch, fixed, s, gamma, beta) == pytest.approx(expected)


def test_adjusted_cost_mod_link_spreads_node_cost():
    s = datasets.build_sioux_falls()
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    # find an op5 mod link (q=10) with travel cost 6 and unit cost 4h^2
    target = None
    for i in branch.idx_mod:
        l = net.links[int(i)]
        if l.owner == "op5" and l.fleet_size == 1 and abs(l.travel_cost - 6.0) < 1e-12:
            target = l
            break
    assert target is not None
    got = adjusted_cost(branch, target.idx, 0, gamma, beta)
    assert got == pytest.approx(6.0 + 4.0 + 10.0 / 9700.0)
    assert got == pytest.approx(10.00103, abs=5e-5)


def test_adjusted_cost_forced_open_drops_capacity_charge():
    net, branch_free, fixed = fig2_branch()
    _, branch_forced, _ = fig2_branch(y_value=1)
    gamma, beta = zeros_multipliers(branch_free)
    assert adjusted_cost(branch_free, fixed, 0, gamma, beta) == pytest.approx(14.4)
    assert adjusted_cost(branch_forced, fixed, 0, gamma, beta) == pytest.approx(12.0)


# ---------------------------------------------------------------------------
# all-or-nothing
# ---------------------------------------------------------------------------

def test_aon_dummy_cheapest_takes_dummy():
    s = Scenario(
        name="optout",
        nodes=(Node("o"), Node("d")),
        walk_links=(WalkLink("o", "d", 50.0),),
        traveler_groups=(TravelerGroup("g", "o", "d", 100.0, 60.0, optout_disutility=0.5),),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    F, chosen = all_or_nothing(branch, lin, beta, np.zeros(len(branch.t)))
    assert chosen[0] == (int(branch.dummy_idx[0]),)
    assert F[0, branch.dummy_idx[0]] == pytest.approx(100.0)


def test_aon_picks_cheaper_parallel_link():
    s = Scenario(
        name="parallel",
        nodes=(Node("a"), Node("b")),
        walk_links=(WalkLink("a", "b", 5.0), WalkLink("a", "b", 3.0)),
        traveler_groups=(TravelerGroup("g", "a", "b", 7.0, 50.0),),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    F, chosen = all_or_nothing(branch, lin, beta, np.zeros(len(branch.t)))
    link = net.links[chosen[0][0]]
    assert link.travel_cost == 3.0
    assert F[0].sum() == pytest.approx(7.0)


def test_aon_fig2_forced_branch_uses_transit_path():
    net, branch, fixed = fig2_branch(y_value=1)
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    F, chosen = all_or_nothing(branch, lin, beta, np.zeros(len(branch.t)))
    od13 = chosen[0]
    kinds = [net.links[i].kind for i in od13]
    assert kinds == [FIXED_ROUTE, "walking"]
    cost = sum(net.links[i].travel_cost for i in od13)
    assert cost == pytest.approx(18.0)
    assert cost < 20.0


# ---------------------------------------------------------------------------
# line search
# ---------------------------------------------------------------------------

def test_line_search_equal_states_returns_zero():
    net, branch, _ = fig2_branch()
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    x = np.zeros((branch.n_groups, len(branch.t)))
    x[np.arange(branch.n_groups), branch.dummy_idx] = branch.demand
    assert line_search(branch, x, x.copy(), lin, beta) == 0.0


def test_line_search_linear_improvement_returns_one():
    net, branch, _ = fig2_branch(y_value=1)
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    x = np.zeros((branch.n_groups, len(branch.t)))
    x[np.arange(branch.n_groups), branch.dummy_idx] = branch.demand
    y, _ = all_or_nothing(branch, lin, beta, x.sum(axis=0))
    assert line_search(branch, x, y, lin, beta) == 1.0


def test_line_search_congested_hand_value():
    # moving 10 units from a fixed-cost path (4) onto an access link with
    # tau = 0.5x: marginal a1(b1+1)(alpha*10) = 4 -> alpha = 0.4
    s = congested_scenario(dummy_cost=4.0, a1=0.5, demand=10.0)
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    lin = branch.base_linear_cost(gamma, beta)
    x = np.zeros((branch.n_groups, len(branch.t)))
    x[0, branch.dummy_idx[0]] = 10.0
    y, chosen = all_or_nothing(branch, lin, beta, x.sum(axis=0))
    kinds = {net.links[i].kind for i in chosen[0]}
    assert MOD_ACCESS in kinds
    alpha = line_search(branch, x, y, lin, beta)
    assert alpha == pytest.approx(0.4, abs=1e-9)


# ---------------------------------------------------------------------------
# frank-wolfe
# ---------------------------------------------------------------------------

def test_fw_dummy_only_converges_first_iteration():
    s = Scenario(
        name="dummies",
        nodes=(Node("a"), Node("b")),
        traveler_groups=(TravelerGroup("g", "a", "b", 5.0, 10.0),),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    res = frank_wolfe(branch, gamma, beta)
    assert res.converged and res.iterations == 1
    assert res.X[branch.dummy_idx[0]] == pytest.approx(5.0)


def test_fw_linear_network_is_exact_after_two_iterations():
    net, branch, _ = fig2_branch(y_value=1)
    gamma, beta = zeros_multipliers(branch)
    trace = []
    res = frank_wolfe(branch, gamma, beta, trace=trace)
    assert res.converged
    assert res.iterations == 2
    assert trace[0][1] == 1.0  # first step takes the full AON jump
    assert res.final_gap <= 1e-9
    # flows: 200 on (1,2), 100 on (2,3)-walking
    fixed = net.fixed_route_links()[0]
    assert res.X[fixed] == pytest.approx(200.0)


def test_fw_congested_instance_matches_hand_solved_qp():
    # min 0.1 x^2 + 10(100 - x) over x in [0,100]: marginal 0.2x = 10 -> x=50
    s = congested_scenario(dummy_cost=10.0, a1=0.1, demand=100.0)
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    res = frank_wolfe(branch, gamma, beta, eps=1e-6, consec=3, max_iter=20000)
    access = branch.idx_access[0]
    assert res.X[access] == pytest.approx(50.0, abs=1e-3)
    assert res.X[branch.dummy_idx[0]] == pytest.approx(50.0, abs=1e-3)
    marg = branch.access_marginal(res.X)[0]
    assert marg <= 10.0 + 1e-3
    assert branch.conservation_residual(res.x) < 1e-9


def test_fw_objective_monotone_and_conservation_every_iteration():
    s = datasets.build_toy()
    net = expand(s)
    branch = BranchNetwork(net)
    gamma, beta = zeros_multipliers(branch)
    trace = []
    res = frank_wolfe(branch, gamma, beta, eps=0.001, consec=3, trace=trace)
    objs = [row[2] for row in trace]
    assert all(b <= a + 1e-7 for a, b in zip(objs, objs[1:]))
    assert branch.conservation_residual(res.x) < 1e-9
    assert res.objective >= res.lower_bound - 1e-9


def test_fw_accumulates_deduplicated_paths():
    net, branch, _ = fig2_branch(y_value=1)
    gamma, beta = zeros_multipliers(branch)
    r_hat = [[] for _ in range(branch.n_groups)]
    frank_wolfe(branch, gamma, beta, r_hat=r_hat)
    frank_wolfe(branch, gamma, beta, r_hat=r_hat)
    for paths in r_hat:
        assert len(paths) == len(set(paths))


def test_branch_modification_rules():
    net = expand(datasets.build_toy())
    # rule 1: y in Y0 removes the link
    some_fixed = net.fixed_route_links()[0]
    b0 = BranchNetwork(net, BranchFixings().with_y(some_fixed, 0))
    assert not b0.active[some_fixed]
    # rule 2: y in Y1 removes sibling frequency options (none here: 1 option)
    assert net.sibling_options(some_fixed) == []
    # rules 3+4: v fixed to 1 excludes same-operator other-fleet nodes
    node = net.mod_layers["op7"][1][0]
    fx = BranchFixings().with_v(net, node, 1)
    b1 = BranchNetwork(net, fx)
    for other in net.mod_siblings_other_fleet(node):
        for idx, _ in net.graph.out_links[other]:
            assert not b1.active[idx]
    # forced-open node drops the q spreading on its outbound links
    for idx, _ in net.graph.out_links[node]:
        if b1.kind[idx] in (MOD_LINK, "mod_egress"):
            assert b1.q_term[idx] == 0.0
