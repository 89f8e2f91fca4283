import numpy as np
import pytest

from maasgame import datasets
from maasgame.assignment import BranchFixings, BranchNetwork
from maasgame.lagrangian import (
    Multipliers,
    branch_objective,
    dual_constants,
    recover_integers,
    recover_path_flows,
    solve_branch,
    subgradient,
)
from maasgame.network import expand
from maasgame.scenario import (
    AccessCostParams,
    FixedRouteLink,
    FixedRouteOperator,
    FrequencyOption,
    ModLinkCostRule,
    ModOperator,
    Node,
    OperatingCostParams,
    Scenario,
    TravelerGroup,
    WalkLink,
)


def fig2_net():
    return expand(datasets.build_fig2())


def test_uncapacitated_branch_converges_one_iteration_zero_multipliers():
    net = fig2_net()
    branch = BranchNetwork(net)
    sg = subgradient(branch)
    assert sg.converged and sg.iterations == 1
    assert not sg.multipliers.gamma.any()
    assert not sg.multipliers.beta.any()
    assert sg.dual_bound == pytest.approx(3440.0, abs=1e-6)


def test_fig2_capacity_prices_zero():
    net = fig2_net()
    sol = solve_branch(net, BranchFixings())
    assert np.allclose(sol.mu, 0.0)


def capacitated_scenario():
    # two groups of 50 share a capacitated link (w=50, t=2) against a
    # 10-cost opt-out; the binding-capacity shadow price is 8
    return Scenario(
        name="cap",
        nodes=(Node("o"), Node("d")),
        fixed_route_operators=(
            FixedRouteOperator(
                "op",
                (FixedRouteLink("o", "d", (FrequencyOption(2.0, 0.0, 50.0),)),),
            ),
        ),
        traveler_groups=(
            TravelerGroup("g1", "o", "d", 50.0, 40.0, optout_disutility=10.0),
            TravelerGroup("g2", "o", "d", 50.0, 40.0, optout_disutility=10.0),
        ),
    )


def test_capacitated_link_shadow_price_and_split():
    net = expand(capacitated_scenario())
    branch = BranchNetwork(net)
    link = net.fixed_route_links()[0]
    sg = subgradient(branch, eps=0.05, max_iter=3000)
    gamma = sg.multipliers.gamma[link]
    assert gamma == pytest.approx(8.0, rel=0.05)
    assert not sg.multipliers.beta.any()  # per-group flows never exceed b_sl
    rec = recover_path_flows(branch, sg.r_hat, sg.fw, sg.multipliers.gamma, sg.multipliers.beta)
    assert rec.X[link] <= 50.0 * 1.005
    total = rec.X[link] + sum(rec.X[net.dummy_of_group[g.id]] for g in net.scenario.traveler_groups)
    assert total == pytest.approx(100.0)


def test_multipliers_never_negative_during_run():
    net = expand(capacitated_scenario())
    branch = BranchNetwork(net)
    gamma = np.zeros(len(branch.t))
    beta = np.zeros((branch.n_groups, len(branch.t)))
    from maasgame.assignment import frank_wolfe

    for k in range(1, 30):
        fw = frank_wolfe(branch, gamma, beta)
        theta = 1.0 / k
        idx = branch.idx_fixed
        gamma[idx] = np.maximum(0.0, gamma[idx] + theta * (fw.X[idx] - branch.cap[idx]))
        beta[:, idx] = np.maximum(0.0, beta[:, idx] + theta * (fw.x[:, idx] - branch.b_sl[:, idx]))
        assert (gamma >= 0).all() and (beta >= 0).all()


# ---------------------------------------------------------------------------
# integer recovery
# ---------------------------------------------------------------------------

def test_recover_integers_ratio_and_caps():
    net = fig2_net()
    branch = BranchNetwork(net)
    link = net.fixed_route_links()[0]
    beta = np.zeros((branch.n_groups, len(branch.t)))
    X = np.zeros(len(branch.t))
    y, v = recover_integers(branch, X, beta)
    assert y[link] == 0.0
    X[link] = branch.cap[link]  # flow exactly at capacity
    y, v = recover_integers(branch, X, beta)
    assert y[link] == pytest.approx(1.0)


def test_recover_integers_fractional_mod_node():
    zones = ("a", "b")
    s = Scenario(
        name="vfrac",
        nodes=(Node("a"), Node("b")),
        walk_links=(WalkLink("a", "b", 5.0), WalkLink("b", "a", 5.0)),
        mod_operators=(
            ModOperator(
                "m", zones, (1,),
                AccessCostParams(0.5, 1.0, -2.0), OperatingCostParams(1.0, 2.0),
                {}, ModLinkCostRule("matrix", matrix={("a", "b"): 1.0, ("b", "a"): 1.0}),
            ),
        ),
        traveler_groups=(
            TravelerGroup("g1", "a", "b", 1000.0, 9.5),
            TravelerGroup("g2", "b", "a", 500.0, 9.5),
        ),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    node_a = net.mod_layers["m"][1][0]
    out_mod = [
        idx for idx, _ in net.graph.out_links[node_a]
        if net.links[idx].kind == "mod_link"
    ]
    X = np.zeros(len(branch.t))
    X[out_mod[0]] = 4.65
    beta = np.zeros((branch.n_groups, len(branch.t)))
    _, v = recover_integers(branch, X, beta)
    assert v[node_a] == pytest.approx(0.0031)
    assert 1e-4 < v[node_a] < 1 - 1e-4  # fractional: triggers branching


def test_recover_integers_respects_fixings():
    net = fig2_net()
    link = net.fixed_route_links()[0]
    branch = BranchNetwork(net, BranchFixings().with_y(link, 1))
    beta = np.zeros((branch.n_groups, len(branch.t)))
    y, _ = recover_integers(branch, np.zeros(len(branch.t)), beta)
    assert y[link] == 1.0


# ---------------------------------------------------------------------------
# path-flow recovery
# ---------------------------------------------------------------------------

def test_recovery_single_path_per_group():
    s = Scenario(
        name="single",
        nodes=(Node("a"), Node("b")),
        walk_links=(WalkLink("a", "b", 3.0),),
        traveler_groups=(TravelerGroup("g", "a", "b", 9.0, 50.0),),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    sg = subgradient(branch)
    rec = recover_path_flows(branch, sg.r_hat, sg.fw, sg.multipliers.gamma, sg.multipliers.beta)
    [(path, flow)] = rec.path_flows[0]
    assert net.links[path[0]].kind == "walking"
    assert flow == pytest.approx(9.0)


def test_recovery_two_equal_cost_paths_split_totals():
    s = Scenario(
        name="tie",
        nodes=(Node("a"), Node("b")),
        walk_links=(WalkLink("a", "b", 3.0), WalkLink("a", "b", 3.0)),
        traveler_groups=(TravelerGroup("g", "a", "b", 10.0, 50.0),),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    sg = subgradient(branch)
    rec = recover_path_flows(branch, sg.r_hat, sg.fw, sg.multipliers.gamma, sg.multipliers.beta)
    assert sum(f for _, f in rec.path_flows[0]) == pytest.approx(10.0)
    cost = sum(f * net.links[p[0]].travel_cost for p, f in rec.path_flows[0])
    assert cost == pytest.approx(30.0)


def test_recovery_fig2_matched_flows():
    net = fig2_net()
    link = net.fixed_route_links()[0]
    sol = solve_branch(net, BranchFixings().with_y(link, 1))
    od13 = dict(sol.path_flows[0])
    transit_path = next(p for p in od13 if len(p) == 2)
    assert od13[transit_path] == pytest.approx(100.0)
    assert sol.X[link] == pytest.approx(200.0)


# ---------------------------------------------------------------------------
# branch objective (system cost)
# ---------------------------------------------------------------------------

def test_fig2_objective_before_and_after_switch():
    net = fig2_net()
    branch = BranchNetwork(net)
    link = net.fixed_route_links()[0]
    walk23 = next(l.idx for l in net.links if l.kind == "walking" and l.travel_cost == 6.0)
    walk13 = next(l.idx for l in net.links if l.kind == "walking" and l.travel_cost == 20.0)
    X = np.zeros(len(branch.t))
    X[link] = 200.0
    X[walk23] = 100.0
    assert branch_objective(branch, X, {link: 1.0}, {}) == pytest.approx(3480.0)
    X2 = np.zeros(len(branch.t))
    X2[link] = 100.0
    X2[walk13] = 100.0
    assert branch_objective(branch, X2, {link: 1.0}, {}) == pytest.approx(3680.0)


def test_all_dummy_objective_is_total_optout_cost():
    s = Scenario(
        name="island",
        nodes=(Node("a"), Node("b"), Node("c")),
        traveler_groups=(
            TravelerGroup("g1", "a", "b", 10.0, 30.0, optout_disutility=7.0),
            TravelerGroup("g2", "b", "c", 4.0, 30.0, optout_disutility=2.5),
        ),
    )
    net = expand(s)
    branch = BranchNetwork(net)
    X = np.zeros(len(branch.t))
    for g in s.traveler_groups:
        X[net.dummy_of_group[g.id]] = g.demand
    assert branch_objective(branch, X, {}, {}) == pytest.approx(10 * 7.0 + 4 * 2.5)


def test_dual_bound_below_integral_completions_fig2():
    net = fig2_net()
    link = net.fixed_route_links()[0]
    root = solve_branch(net, BranchFixings())
    open_b = solve_branch(net, BranchFixings().with_y(link, 1))
    closed_b = solve_branch(net, BranchFixings().with_y(link, 0))
    assert root.dual_bound <= open_b.objective + 1e-6
    assert root.dual_bound <= closed_b.objective + 1e-6
    assert open_b.objective == pytest.approx(3480.0, abs=1e-4)
    assert closed_b.objective == pytest.approx(4500.0, abs=1e-4)


def test_dual_constants_cover_forced_open_links():
    net = fig2_net()
    link = net.fixed_route_links()[0]
    branch = BranchNetwork(net, BranchFixings().with_y(link, 1))
    gamma = np.zeros(len(branch.t))
    beta = np.zeros((branch.n_groups, len(branch.t)))
    assert dual_constants(branch, gamma, beta) == pytest.approx(480.0)
    sol = solve_branch(net, BranchFixings().with_y(link, 1))
    # forced-open branch is solved exactly: dual == objective
    assert sol.dual_bound == pytest.approx(sol.objective, abs=1e-6)
