"""Expansion of a scenario into the layered assignment network.

The expanded network carries, per the construction the solver works on:

* one parallel fixed-route link per frequency option (groups of parallel
  options are mutually exclusive),
* walking/transfer links as declared,
* per MOD operator and fleet size h, a complete directed subgraph on copies
  of the candidate zone centroids, with per-unit operating cost m(h),
* access links from each zone centroid into each fleet layer (congested
  wait/access cost) and zero-cost egress links back,
* one uncapacitated dummy (opt-out) link per traveler group.

Node opening costs q_i sit on the MOD layer nodes; every link leaving a MOD
node records its tail's q so path-cost accounting can fold node costs onto
links (a simple path leaves each visited MOD node exactly once).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .paths import GraphView
from .scenario import (
    AccessCostParams,
    Scenario,
    ScenarioError,
    mod_unit_operating_cost,
    require_valid,
)

FIXED_ROUTE = "fixed_route"
TRANSFER = "transfer"
WALKING = "walking"
MOD_LINK = "mod_link"
MOD_ACCESS = "mod_access"
MOD_EGRESS = "mod_egress"
DUMMY = "dummy"

LINK_KINDS = (FIXED_ROUTE, TRANSFER, WALKING, MOD_LINK, MOD_ACCESS, MOD_EGRESS, DUMMY)


@dataclass(frozen=True)
class Link:
    idx: int
    kind: str
    tail: int                 # node index
    head: int
    tail_id: str
    head_id: str
    owner: Optional[str]      # operator id, or None for walking/transfer/dummy
    travel_cost: float        # t_l (0 on access/egress links)
    operating_cost: float = 0.0        # c_l, fixed_route only
    capacity: float = float("inf")     # w_l, fixed_route only
    unit_operating_cost: float = 0.0   # m_l, mod_link only
    access: Optional[AccessCostParams] = None  # mod_access only
    fleet_size: Optional[int] = None   # h, for mod layers
    group: Optional[str] = None        # dummy: owning traveler group id
    option_group: Optional[int] = None  # fixed_route: index into option_groups
    tail_node_cost: float = 0.0        # q_i of tail MOD node (mod_link / mod_egress)


@dataclass(frozen=True)
class ModNode:
    node: int
    node_id: str
    operator: str
    zone: str
    fleet_size: int
    opening_cost: float  # q_i


@dataclass
class ExpandedNetwork:
    scenario: Scenario
    node_ids: list[str]
    node_index: dict[str, int]
    links: list[Link]
    option_groups: list[list[int]]          # parallel fixed-route option sets A_ijf
    mod_nodes: dict[int, ModNode]           # node index -> MOD node info
    mod_layers: dict[str, dict[int, list[int]]]  # operator -> h -> node indices
    dummy_of_group: dict[str, int]          # group id -> dummy link idx
    graph: GraphView = field(init=False)
    total_demand: float = field(init=False)

    def __post_init__(self):
        self.graph = GraphView(
            len(self.node_ids), [l.tail for l in self.links], [l.head for l in self.links]
        )
        self.total_demand = self.scenario.total_demand()

    # convenience index sets ------------------------------------------------

    def links_of_kind(self, kind: str) -> list[int]:
        return [l.idx for l in self.links if l.kind == kind]

    def fixed_route_links(self) -> list[int]:
        return self.links_of_kind(FIXED_ROUTE)

    def owner_links(self, operator_id: str) -> list[int]:
        return [l.idx for l in self.links if l.owner == operator_id]

    def out_links_of_node(self, node: int) -> list[int]:
        return [idx for idx, _ in self.graph.out_links[node]]

    def sibling_options(self, link_idx: int) -> list[int]:
        lk = self.links[link_idx]
        if lk.option_group is None:
            return []
        return [i for i in self.option_groups[lk.option_group] if i != link_idx]

    def mod_siblings_other_fleet(self, node: int) -> list[int]:
        """MOD nodes of the same operator with a different fleet size."""
        info = self.mod_nodes[node]
        layers = self.mod_layers[info.operator]
        return [
            n for h, nodes in layers.items() if h != info.fleet_size for n in nodes
        ]

    def describe(self) -> str:
        kinds = {}
        for l in self.links:
            kinds[l.kind] = kinds.get(l.kind, 0) + 1
        parts = ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
        return f"{len(self.node_ids)} nodes, {len(self.links)} links ({parts})"


def base_shortest_path_costs(scenario: Scenario, sources: list[str]) -> dict[str, dict[str, float]]:
    """All-pairs-from-sources shortest-path travel costs on the base network
    (walking/transfer plus fixed-route links at their cheapest travel cost).
    Used for the factor-based MOD link cost rule."""
    ids = scenario.node_ids()
    index = {nid: i for i, nid in enumerate(ids)}
    tails: list[int] = []
    heads: list[int] = []
    weights: list[float] = []
    for w in scenario.walk_links:
        tails.append(index[w.tail])
        heads.append(index[w.head])
        weights.append(w.travel_cost)
    for op in scenario.fixed_route_operators:
        for lk in op.links:
            tails.append(index[lk.tail])
            heads.append(index[lk.head])
            weights.append(min(o.travel_cost for o in lk.options))
    graph = GraphView(len(ids), tails, heads)
    out: dict[str, dict[str, float]] = {}
    for src in sources:
        dist, _ = graph.shortest_tree(weights, index[src])
        out[src] = {nid: dist[index[nid]] for nid in ids}
    return out


def _mod_pair_cost(scenario: Scenario, op, base_costs) -> dict[tuple[str, str], float]:
    rule = op.link_cost
    out: dict[tuple[str, str], float] = {}
    for i in op.zones:
        for j in op.zones:
            if i == j:
                continue
            if rule.mode == "matrix":
                out[(i, j)] = rule.matrix[(i, j)]
            else:
                base = base_costs[i][j]
                if base == float("inf"):
                    raise ScenarioError(
                        f"MOD operator {op.id!r}: zones {i!r} and {j!r} are not connected "
                        "on the base network; provide an explicit cost matrix"
                    )
                out[(i, j)] = rule.factor * base
    return out


def expand(scenario: Scenario) -> ExpandedNetwork:
    """Build the layered network. Deterministic: identical scenarios yield
    identical node and link orderings."""
    require_valid(scenario)

    node_ids = list(scenario.node_ids())
    seen = set(node_ids)
    if len(seen) != len(node_ids):
        raise ScenarioError("duplicate node ids")
    node_index = {nid: i for i, nid in enumerate(node_ids)}

    links: list[Link] = []
    option_groups: list[list[int]] = []
    mod_nodes: dict[int, ModNode] = {}
    mod_layers: dict[str, dict[int, list[int]]] = {}
    dummy_of_group: dict[str, int] = {}

    total_demand = scenario.total_demand()

    def add_link(**kw) -> Link:
        link = Link(idx=len(links), **kw)
        links.append(link)
        return link

    # fixed-route parallel option links
    for op in scenario.fixed_route_operators:
        for lk in op.links:
            group_idx = len(option_groups)
            group: list[int] = []
            for o in lk.options:
                cap = o.capacity if o.capacity is not None else max(total_demand, 1.0)
                link = add_link(
                    kind=FIXED_ROUTE,
                    tail=node_index[lk.tail],
                    head=node_index[lk.head],
                    tail_id=lk.tail,
                    head_id=lk.head,
                    owner=op.id,
                    travel_cost=o.travel_cost,
                    operating_cost=o.operating_cost,
                    capacity=cap,
                    option_group=group_idx,
                )
                group.append(link.idx)
            option_groups.append(group)

    # walking / transfer links
    for w in scenario.walk_links:
        add_link(
            kind=TRANSFER if w.kind == "transfer" else WALKING,
            tail=node_index[w.tail],
            head=node_index[w.head],
            tail_id=w.tail,
            head_id=w.head,
            owner=None,
            travel_cost=w.travel_cost,
        )

    # MOD layers: per operator, per fleet size, a complete subgraph on zone
    # copies plus access/egress links to the zone centroids
    base_sources = sorted({z for op in scenario.mod_operators for z in op.zones})
    base_costs = (
        base_shortest_path_costs(scenario, base_sources)
        if any(op.link_cost.mode == "shortest_path_factor" for op in scenario.mod_operators)
        else {}
    )
    for op in scenario.mod_operators:
        pair_cost = _mod_pair_cost(scenario, op, base_costs)
        layers: dict[int, list[int]] = {}
        for h in op.fleet_options:
            layer_nodes: list[int] = []
            for z in op.zones:
                nid = f"{op.id}@{z}#h{h}"
                if nid in node_index:
                    raise ScenarioError(f"MOD node id collision: {nid!r}")
                node_index[nid] = len(node_ids)
                node_ids.append(nid)
                n = node_index[nid]
                layer_nodes.append(n)
                mod_nodes[n] = ModNode(
                    node=n,
                    node_id=nid,
                    operator=op.id,
                    zone=z,
                    fleet_size=h,
                    opening_cost=float(op.zone_opening_cost.get(z, 0.0)),
                )
            layers[h] = layer_nodes
            m_l = mod_unit_operating_cost(h, op.operating)
            for zi, ni in zip(op.zones, layer_nodes):
                for zj, nj in zip(op.zones, layer_nodes):
                    if ni == nj:
                        continue
                    add_link(
                        kind=MOD_LINK,
                        tail=ni,
                        head=nj,
                        tail_id=node_ids[ni],
                        head_id=node_ids[nj],
                        owner=op.id,
                        travel_cost=pair_cost[(zi, zj)],
                        unit_operating_cost=m_l,
                        fleet_size=h,
                        tail_node_cost=mod_nodes[ni].opening_cost,
                    )
            for z, n in zip(op.zones, layer_nodes):
                add_link(
                    kind=MOD_ACCESS,
                    tail=node_index[z],
                    head=n,
                    tail_id=z,
                    head_id=node_ids[n],
                    owner=op.id,
                    travel_cost=0.0,
                    access=op.access,
                    fleet_size=h,
                )
            for z, n in zip(op.zones, layer_nodes):
                add_link(
                    kind=MOD_EGRESS,
                    tail=n,
                    head=node_index[z],
                    tail_id=node_ids[n],
                    head_id=z,
                    owner=op.id,
                    travel_cost=0.0,
                    fleet_size=h,
                    tail_node_cost=mod_nodes[n].opening_cost,
                )
        mod_layers[op.id] = layers

    # one opt-out dummy per traveler group
    for g in scenario.traveler_groups:
        link = add_link(
            kind=DUMMY,
            tail=node_index[g.origin],
            head=node_index[g.destination],
            tail_id=g.origin,
            head_id=g.destination,
            owner=None,
            travel_cost=g.dummy_cost,
            group=g.id,
        )
        dummy_of_group[g.id] = link.idx

    return ExpandedNetwork(
        scenario=scenario,
        node_ids=node_ids,
        node_index=node_index,
        links=links,
        option_groups=option_groups,
        mod_nodes=mod_nodes,
        mod_layers=mod_layers,
        dummy_of_group=dummy_of_group,
    )


# ---------------------------------------------------------------------------
# Exports for visualization tooling
# ---------------------------------------------------------------------------

def write_csv(net: ExpandedNetwork, nodes_path, links_path) -> None:
    import csv

    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "id", "mod_operator", "zone", "fleet_size", "opening_cost"])
        for i, nid in enumerate(net.node_ids):
            info = net.mod_nodes.get(i)
            if info is None:
                w.writerow([i, nid, "", "", "", ""])
            else:
                w.writerow([i, nid, info.operator, info.zone, info.fleet_size, info.opening_cost])
    with open(links_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["idx", "kind", "tail", "head", "owner", "travel_cost", "operating_cost",
             "capacity", "unit_operating_cost", "fleet_size", "group"]
        )
        for l in net.links:
            w.writerow(
                [l.idx, l.kind, l.tail_id, l.head_id, l.owner or "", l.travel_cost,
                 l.operating_cost, l.capacity, l.unit_operating_cost,
                 l.fleet_size if l.fleet_size is not None else "", l.group or ""]
            )


def write_dot(net: ExpandedNetwork, path) -> None:
    """Graphviz description of the expanded network."""
    color = {
        FIXED_ROUTE: "black",
        TRANSFER: "gray",
        WALKING: "gray60",
        MOD_LINK: "blue",
        MOD_ACCESS: "forestgreen",
        MOD_EGRESS: "seagreen",
        DUMMY: "orange",
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f'digraph "{net.scenario.name}" {{\n')
        for i, nid in enumerate(net.node_ids):
            shape = "box" if i in net.mod_nodes else "ellipse"
            fh.write(f'  "{nid}" [shape={shape}];\n')
        for l in net.links:
            style = "dashed" if l.kind == DUMMY else "solid"
            fh.write(
                f'  "{l.tail_id}" -> "{l.head_id}" '
                f'[color={color[l.kind]}, style={style}, label="{l.travel_cost:g}"];\n'
            )
        fh.write("}\n")
