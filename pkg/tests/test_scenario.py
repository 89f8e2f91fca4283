import dataclasses
import math

import numpy as np
import pytest

from maasgame import datasets
from maasgame.scenario import (
    AccessCostParams,
    ModOperator,
    OperatingCostParams,
    Scenario,
    ScenarioError,
    TravelerGroup,
    mod_access_cost,
    mod_access_marginal_cost,
    mod_unit_operating_cost,
    scenario_from_dict,
    scenario_to_dict,
    validate,
)


def test_fig2_scenario_is_clean():
    assert validate(datasets.build_fig2()) == []


def test_optout_exceeding_utility_is_flagged():
    s = datasets.build_fig2()
    groups = list(s.traveler_groups)
    groups[0] = dataclasses.replace(groups[0], optout_disutility=groups[0].trip_utility + 1.0)
    bad = dataclasses.replace(s, traveler_groups=tuple(groups))
    violations = validate(bad)
    assert any("optout_disutility exceeds trip utility" in v.message for v in violations)


def test_mod_params_definition_bounds():
    s = datasets.build_toy()
    mods = list(s.mod_operators)
    mods[0] = dataclasses.replace(mods[0], operating=OperatingCostParams(a2=0.0, b3=2.0))
    bad = dataclasses.replace(s, mod_operators=tuple(mods))
    violations = validate(bad)
    assert any(v.rule == "a2 > 0 and b3 > 0" for v in violations)


def test_unknown_zone_centroid_flagged():
    s = datasets.build_toy()
    mods = list(s.mod_operators)
    mods[0] = dataclasses.replace(mods[0], zones=mods[0].zones + ("nowhere",))
    bad = dataclasses.replace(s, mod_operators=tuple(mods))
    assert any("unknown centroid" in v.message for v in validate(bad))


def test_negative_demand_and_duplicate_nodes():
    s = datasets.build_fig2()
    groups = list(s.traveler_groups)
    groups[0] = dataclasses.replace(groups[0], demand=-5.0)
    bad = dataclasses.replace(
        s, traveler_groups=tuple(groups), nodes=s.nodes + (s.nodes[0],)
    )
    rules = {v.rule for v in validate(bad)}
    assert "d_s > 0" in rules
    assert "unique ids" in rules


# ---------------------------------------------------------------------------
# cost functions (Definition/Eq. oracles)
# ---------------------------------------------------------------------------

def test_access_cost_hand_values():
    p_toy = AccessCostParams(a1=0.5, b1=1.0, b2=-2.0)
    assert mod_access_cost(4.65, 1, p_toy) == pytest.approx(2.325)
    assert mod_access_cost(0.0, 3, p_toy) == 0.0
    p_sf = AccessCostParams(a1=2.0, b1=1.0, b2=-2.0)
    assert mod_access_cost(10.0, 2, p_sf) == pytest.approx(5.0)


def test_access_marginal_hand_values():
    p = AccessCostParams(a1=0.5, b1=1.0, b2=-2.0)
    assert mod_access_marginal_cost(4.0, 1, p) == pytest.approx(4.0)
    assert mod_access_marginal_cost(0.0, 1, p) == 0.0


def test_access_marginal_matches_finite_differences():
    # central finite differences of tau(x)*x over a parameter grid
    rel_err_max = 0.0
    for a1 in (0.5, 2.0, 1.3):
        for b1 in (0.5, 1.0, 2.0):
            for b2 in (-2.0, -1.0, 0.5):
                for h in (1, 2, 3):
                    p = AccessCostParams(a1, b1, b2)
                    for x in (0.5, 3.0, 11.0):
                        eps = 1e-4 * max(1.0, x)
                        f = lambda v: mod_access_cost(v, h, p) * v
                        fd = (f(x + eps) - f(x - eps)) / (2 * eps)
                        m = mod_access_marginal_cost(x, h, p)
                        rel_err_max = max(rel_err_max, abs(m - fd) / max(1.0, abs(fd)))
    assert rel_err_max < 1e-6


def test_unit_operating_cost_hand_values():
    assert mod_unit_operating_cost(3, OperatingCostParams(1.0, 2.0)) == pytest.approx(9.0)
    assert mod_unit_operating_cost(2, OperatingCostParams(4.0, 2.0)) == pytest.approx(16.0)
    assert mod_unit_operating_cost(1, OperatingCostParams(4.0, 2.0)) == pytest.approx(4.0)


def test_access_cost_monotonicity_property():
    rng = np.random.RandomState(5)
    for _ in range(200):
        p = AccessCostParams(
            a1=float(rng.uniform(0.1, 3)), b1=float(rng.uniform(0.2, 2)),
            b2=float(-rng.uniform(0.2, 2.5)),
        )
        x1, x2 = sorted(rng.uniform(0.01, 20, size=2))
        if x1 == x2:
            continue
        h = int(rng.randint(1, 5))
        assert mod_access_cost(x1, h, p) < mod_access_cost(x2, h, p)
        assert mod_access_cost(x2, h + 1, p) < mod_access_cost(x2, h, p)


def test_json_roundtrip_all_bundled():
    for name, builder in datasets.BUILDERS.items():
        s = builder()
        again = scenario_from_dict(scenario_to_dict(s))
        assert again == s, name


def test_bundled_files_match_builders():
    for name, builder in datasets.BUILDERS.items():
        assert datasets.load_bundled(name) == builder(), name


def test_format_version_guard():
    d = scenario_to_dict(datasets.build_fig2())
    d["format_version"] = 99
    with pytest.raises(ScenarioError):
        scenario_from_dict(d)
