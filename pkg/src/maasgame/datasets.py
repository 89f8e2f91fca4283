"""Bundled scenarios.

* ``fig2`` / ``fig2_variant``: the 3-node instability example. All values come
  from the worked text; the single operator's operating cost 480 is derived
  from the quoted fare floor (2.4 x 200). The variant lowers the walking
  alternative so the matched path needs a 1.4/user subsidy; its stated cost
  18.5 is internally inconsistent with the published subsidy/objective
  (which imply 19.0), so 19.0 ships here (see dataset notes).
* ``toy``: the small illustrative network. Link-level numbers are only in a
  figure, so the bundled values are plausible reconstructions flagged
  unverified; textual facts (demands, utilities, MOD parameters, opening
  costs, transfer links) are honored.
* ``sioux_falls`` + overlays: the 24-node network with 4 transit lines and
  3 MOD operators. Link parameters and OD demand follow the published
  appendix tables; the line-to-operator mapping beyond the blue line and the
  MOD candidate regions are documented inferences (the region split 12/10/7
  uniquely reproduces the published 82-node / 748-link expansion).
"""

from __future__ import annotations

import json
from importlib import resources

from .scenario import (
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
    scenario_from_dict,
)


def _single_option_link(tail, head, t, c, w=None):
    return FixedRouteLink(tail, head, (FrequencyOption(travel_cost=t, operating_cost=c, capacity=w),))


# ---------------------------------------------------------------------------
# Instability example (3 nodes, 2 OD pairs)
# ---------------------------------------------------------------------------

def build_fig2(walk_13: float = 20.0, name: str = "fig2") -> Scenario:
    return Scenario(
        name=name,
        notes=(
            "Two OD pairs (1->3, 1->2) of 100 travelers each, utility 25. "
            "Operator op1 owns link (1,2): travel 12, operating 480 (derived from "
            "the 2.4 fare floor at 200 riders). Walking: (2,3) cost 6, (1,3) cost "
            f"{walk_13:g}. All links uncapacitated; opting out yields payoff 0."
        ),
        nodes=(Node("1"), Node("2"), Node("3")),
        walk_links=(
            WalkLink("2", "3", 6.0),
            WalkLink("1", "3", walk_13),
        ),
        fixed_route_operators=(
            FixedRouteOperator("op1", (_single_option_link("1", "2", 12.0, 480.0),)),
        ),
        traveler_groups=(
            TravelerGroup("od13", "1", "3", 100.0, 25.0),
            TravelerGroup("od12", "1", "2", 100.0, 25.0),
        ),
    )


def build_fig2_variant() -> Scenario:
    # paper text says 18.5, but its subsidy 1.4 and objectives 3620/3580 all
    # imply 19.0; the acceptance values pin 19.0
    return build_fig2(walk_13=19.0, name="fig2_variant")


# ---------------------------------------------------------------------------
# Toy illustrative network (figure-read values: UNVERIFIED)
# ---------------------------------------------------------------------------

def build_toy() -> Scenario:
    stations = ["21", "22", "23"]
    centroids = ["1", "3", "4", "A", "B", "C", "D"]
    coverage = [("A", "1"), ("B", "21"), ("B", "22"), ("B", "23"), ("C", "3"), ("D", "4")]
    walk = []
    for z, st in coverage:
        walk.append(WalkLink(z, st, 0.0, kind="transfer"))
        walk.append(WalkLink(st, z, 0.0, kind="transfer"))
    walk += [
        WalkLink("21", "22", 0.5, kind="transfer"),
        WalkLink("22", "21", 0.5, kind="transfer"),
        WalkLink("21", "23", 0.5, kind="transfer"),
        WalkLink("23", "21", 0.5, kind="transfer"),
        WalkLink("1", "3", 6.0),
        WalkLink("1", "4", 7.0),
    ]

    def _line(op_id, a, b, t, c, w):
        return FixedRouteOperator(
            op_id,
            (_single_option_link(a, b, t, c, w), _single_option_link(b, a, t, c, w)),
        )

    fixed = (
        _line("op1", "1", "21", 2.0, 250.0, 1200.0),
        _line("op2", "1", "22", 2.5, 275.0, 1200.0),
        _line("op3", "23", "4", 2.0, 100.0, 600.0),
        _line("op4", "22", "3", 2.0, 300.0, 1200.0),
        _line("op5", "21", "3", 2.5, 350.0, 1200.0),
        _line("op6", "22", "4", 2.5, 325.0, 900.0),
    )
    access = AccessCostParams(a1=0.5, b1=1.0, b2=-2.0)
    operating = OperatingCostParams(a2=1.0, b3=2.0)
    fleets = (1, 2, 3)
    mods = (
        ModOperator("op7", ("A", "B", "C"), fleets, access, operating,
                    {"A": 3.0, "B": 3.0, "C": 2.0}, ModLinkCostRule(factor=0.75)),
        ModOperator("op8", ("B", "C"), fleets, access, operating,
                    {"B": 2.0, "C": 1.0}, ModLinkCostRule(factor=0.75)),
        ModOperator("op9", ("B", "D"), fleets, access, operating,
                    {"B": 1.0, "D": 3.0}, ModLinkCostRule(factor=0.75)),
    )
    return Scenario(
        name="toy",
        notes=(
            "Small illustrative case: 2 OD pairs (1000 from 1 to 3, 500 from 1 "
            "to 4), utility 9.5, three MOD operators with fleet options {1,2,3}, "
            "access cost 0.5*h^-2*x, unit operating cost h^2, opening costs per "
            "(operator, zone). UNVERIFIED: fixed-route travel/operating costs and "
            "capacity values are figure-only in the source and reconstructed "
            "here; treat solver outputs on this dataset as illustrative."
        ),
        nodes=tuple(Node(i, "centroid") for i in centroids)
        + tuple(Node(i, "station") for i in stations),
        walk_links=tuple(walk),
        fixed_route_operators=fixed,
        mod_operators=mods,
        traveler_groups=(
            TravelerGroup("od13", "1", "3", 1000.0, 9.5),
            TravelerGroup("od14", "1", "4", 500.0, 9.5),
        ),
    )


# ---------------------------------------------------------------------------
# Sioux Falls (24 base nodes, 4 transit lines, 3 MOD operators)
# ---------------------------------------------------------------------------

# (i, j, travel_cost, operating_cost, capacity); operating 400 marks transit
SIOUX_LINKS = [
    (1, 2, 6, 0, 25900), (2, 1, 6, 0, 25900), (3, 4, 4, 0, 17111), (4, 3, 4, 0, 17111),
    (4, 5, 2, 0, 17783), (5, 4, 2, 0, 17783), (5, 6, 4, 0, 4948), (6, 5, 4, 0, 4948),
    (7, 8, 3, 0, 7842), (8, 7, 3, 0, 7842), (8, 9, 10, 0, 5050), (9, 8, 10, 0, 5050),
    (10, 11, 5, 0, 10000), (10, 16, 4, 0, 4855), (10, 17, 8, 0, 4994),
    (11, 10, 5, 0, 10000), (11, 12, 6, 0, 4909), (12, 11, 6, 0, 4909),
    (13, 24, 4, 0, 5091), (14, 15, 5, 0, 5128), (15, 14, 5, 0, 5128),
    (15, 19, 3, 0, 14565), (16, 10, 4, 0, 4855), (16, 18, 3, 0, 19680),
    (17, 10, 8, 0, 4994), (18, 16, 3, 0, 19680), (18, 20, 4, 0, 23403),
    (19, 15, 3, 0, 14565), (20, 18, 4, 0, 23403), (20, 21, 6, 0, 5060),
    (20, 22, 5, 0, 5076), (21, 20, 6, 0, 5060), (21, 24, 3, 0, 4885),
    (22, 20, 5, 0, 5076), (22, 23, 4, 0, 5000), (23, 22, 4, 0, 5000),
    (24, 13, 4, 0, 5091), (24, 21, 3, 0, 4885),
    (1, 3, 4, 400, 23403), (2, 6, 5, 400, 4958), (3, 1, 4, 400, 23403),
    (3, 12, 4, 400, 23403), (4, 11, 6, 400, 4909), (5, 9, 5, 400, 10000),
    (6, 2, 5, 400, 4958), (6, 8, 2, 400, 4899), (8, 6, 2, 400, 4899),
    (8, 16, 5, 400, 5046), (9, 5, 5, 400, 10000), (9, 10, 3, 400, 13916),
    (10, 9, 3, 400, 13916), (10, 15, 6, 400, 13512), (11, 4, 6, 400, 4909),
    (11, 14, 4, 400, 4877), (12, 3, 4, 400, 23403), (12, 13, 3, 400, 25900),
    (13, 12, 3, 400, 25900), (14, 11, 4, 400, 4877), (14, 23, 4, 400, 4925),
    (15, 10, 6, 400, 13512), (15, 22, 3, 400, 9599), (16, 8, 5, 400, 5046),
    (16, 17, 2, 400, 5230), (17, 16, 2, 400, 5230), (17, 19, 2, 400, 4824),
    (19, 17, 2, 400, 4824), (19, 20, 4, 400, 5003), (20, 19, 4, 400, 5003),
    (21, 22, 2, 400, 5230), (22, 15, 3, 400, 9599), (22, 21, 2, 400, 5230),
    (23, 14, 4, 400, 4925), (23, 24, 2, 400, 5079), (24, 23, 2, 400, 5079),
]

# transit lines as undirected node chains; operators 2..4 inferred from the
# $400-link chain structure (blue line is stated: stations 1, 3, 12, 13)
SIOUX_LINES = {
    "op1": [1, 3, 12, 13],             # blue
    "op2": [2, 6, 8, 16, 17, 19, 20],  # pink
    "op3": [4, 11, 14, 23, 24],        # yellow
    "op4": [5, 9, 10, 15, 22, 21],     # green
}

# MOD candidate regions: documented best guess reproducing 82 nodes / 748 links
SIOUX_MOD_REGIONS = {
    "op5": [1, 2, 3, 4, 5, 6, 8, 10, 11, 12, 16, 17],       # purple
    "op6": [13, 14, 15, 18, 19, 20, 21, 22, 23, 24],        # light blue
    "op7": [2, 6, 7, 8, 9, 10, 16],                         # orange
}

SIOUX_MOD_OPEN_COST = {"op5": 10.0, "op6": 5.0, "op7": 15.0}

# OD demand between nodes 1, 2, 12, 18, 13, 20 (9,700 trips total)
SIOUX_DEMAND = [
    (2, 1, 100), (12, 1, 200), (18, 1, 100), (13, 1, 500), (20, 1, 300),
    (1, 2, 100), (12, 2, 100), (18, 2, 100), (13, 2, 300), (20, 2, 100),
    (1, 12, 200), (2, 12, 100), (18, 12, 200), (13, 12, 1300), (20, 12, 500),
    (1, 18, 100), (2, 18, 100), (12, 18, 200), (13, 18, 100), (20, 18, 400),
    (1, 13, 500), (2, 13, 300), (12, 13, 1300), (18, 13, 100), (20, 13, 600),
    (1, 20, 300), (2, 20, 100), (12, 20, 400), (18, 20, 400), (13, 20, 600),
]


def build_sioux_falls(
    name: str = "sioux_falls",
    mod_access_a1: dict[str, float] | None = None,
    mod_operating_a2: dict[str, float] | None = None,
    heterogeneous: bool = False,
) -> Scenario:
    transit_pairs = {}
    for op, chain in SIOUX_LINES.items():
        for a, b in zip(chain, chain[1:]):
            transit_pairs[(a, b)] = op
            transit_pairs[(b, a)] = op

    walk = []
    per_op_links: dict[str, list[FixedRouteLink]] = {op: [] for op in SIOUX_LINES}
    for i, j, t, c, w in SIOUX_LINKS:
        if c == 0:
            walk.append(WalkLink(str(i), str(j), float(t)))
        else:
            op = transit_pairs[(i, j)]
            per_op_links[op].append(_single_option_link(str(i), str(j), float(t), float(c), float(w)))

    a1 = {"op5": 2.0, "op6": 2.0, "op7": 2.0}
    a2 = {"op5": 4.0, "op6": 4.0, "op7": 4.0}
    a1.update(mod_access_a1 or {})
    a2.update(mod_operating_a2 or {})
    mods = tuple(
        ModOperator(
            op,
            tuple(str(z) for z in zones),
            (1, 2),
            AccessCostParams(a1=a1[op], b1=1.0, b2=-2.0),
            OperatingCostParams(a2=a2[op], b3=2.0),
            {str(z): SIOUX_MOD_OPEN_COST[op] for z in zones},
            ModLinkCostRule(mode="shortest_path_factor", factor=0.75),
        )
        for op, zones in SIOUX_MOD_REGIONS.items()
    )

    groups = []
    for o, d, dem in SIOUX_DEMAND:
        if heterogeneous:
            groups.append(TravelerGroup(f"od{o}_{d}_hi", str(o), str(d), dem / 2.0, 24.0))
            groups.append(TravelerGroup(f"od{o}_{d}_lo", str(o), str(d), dem / 2.0, 16.0))
        else:
            groups.append(TravelerGroup(f"od{o}_{d}", str(o), str(d), float(dem), 20.0))

    return Scenario(
        name=name,
        notes=(
            "Sioux Falls with 4 transit lines ($400 operating cost per directed "
            "link) and 3 MOD operators (fleets {1,2}, access 2*h^-2*x, unit "
            "operating 4*h^2, opening costs 10/5/15). MOD link travel cost is "
            "75% of the base-network shortest path. Line-to-operator mapping "
            "beyond the blue line and the MOD candidate regions are documented "
            "inferences; region sizes 12/10/7 reproduce the published 82-node/"
            "748-link expansion."
        ),
        nodes=tuple(Node(str(i), "centroid") for i in range(1, 25)),
        walk_links=tuple(walk),
        fixed_route_operators=tuple(
            FixedRouteOperator(op, tuple(links)) for op, links in per_op_links.items()
        ),
        mod_operators=mods,
        traveler_groups=tuple(groups),
    )


def build_sioux_falls_reduced_a() -> Scenario:
    """Operator 5 costs halved, reading the stated access coefficient as a typo
    (a1: 2 -> 1, a2: 4 -> 2)."""
    return build_sioux_falls(
        name="sioux_falls_reduced_a",
        mod_access_a1={"op5": 1.0},
        mod_operating_a2={"op5": 2.0},
    )


def build_sioux_falls_reduced_b() -> Scenario:
    """Operator 5 operating cost halved with the access coefficient kept at the
    stated value (a1 stays 2, a2: 4 -> 2)."""
    return build_sioux_falls(
        name="sioux_falls_reduced_b",
        mod_operating_a2={"op5": 2.0},
    )


def build_sioux_falls_heterogeneous() -> Scenario:
    """Every OD demand split into equal high/low income halves (U = 24 / 16)."""
    return build_sioux_falls(name="sioux_falls_heterogeneous", heterogeneous=True)


BUILDERS = {
    "fig2": build_fig2,
    "fig2_variant": build_fig2_variant,
    "toy": build_toy,
    "sioux_falls": build_sioux_falls,
    "sioux_falls_reduced_a": build_sioux_falls_reduced_a,
    "sioux_falls_reduced_b": build_sioux_falls_reduced_b,
    "sioux_falls_heterogeneous": build_sioux_falls_heterogeneous,
}


def build(name: str) -> Scenario:
    return BUILDERS[name]()


def load_bundled(name: str) -> Scenario:
    """Load the JSON copy shipped under maasgame/data (identical to build(name))."""
    ref = resources.files("maasgame").joinpath(f"data/{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def bundled_path(name: str):
    return resources.files("maasgame").joinpath(f"data/{name}.json")
