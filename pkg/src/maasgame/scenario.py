"""Scenario data model: operators, traveler groups, cost functions, validation.

A scenario is the declarative description of one platform instance: the node
set, the fixed-route operators with their frequency options, the
mobility-on-demand (MOD) operators with candidate zones and fleet options,
walking/transfer links, and traveler groups with elastic (opt-out) demand.

Scenario files are JSON documents mirroring these types field for field
(``format_version`` 1, see docs/scenario_format.md).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

FORMAT_VERSION = 1

NODE_KINDS = ("centroid", "station")
WALK_KINDS = ("walking", "transfer")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str = "centroid"  # "centroid" | "station"


@dataclass(frozen=True)
class FrequencyOption:
    """One frequency/capacity alternative of a fixed-route service link."""

    travel_cost: float      # t_l, in-vehicle + average wait, currency units
    operating_cost: float   # c_l
    capacity: Optional[float] = None  # w_l; None = uncapacitated


@dataclass(frozen=True)
class FixedRouteLink:
    tail: str
    head: str
    options: tuple[FrequencyOption, ...]


@dataclass(frozen=True)
class FixedRouteOperator:
    id: str
    links: tuple[FixedRouteLink, ...]


@dataclass(frozen=True)
class AccessCostParams:
    """Coefficients of the access/wait disutility a1 * x^b1 * h^b2."""

    a1: float
    b1: float
    b2: float


@dataclass(frozen=True)
class OperatingCostParams:
    """Coefficients of the per-unit MOD operating cost a2 * h^b3."""

    a2: float
    b3: float


@dataclass(frozen=True)
class ModLinkCostRule:
    """Travel cost of MOD links between zone pairs.

    mode "matrix": explicit per-(tail, head) costs.
    mode "shortest_path_factor": factor times the shortest-path cost between
    the two zone centroids on the base (non-MOD) network.
    """

    mode: str = "shortest_path_factor"
    factor: float = 0.75
    matrix: Mapping[tuple[str, str], float] | None = None


@dataclass(frozen=True)
class ModOperator:
    id: str
    zones: tuple[str, ...]               # candidate zone centroids
    fleet_options: tuple[int, ...]       # fleet sizes h
    access: AccessCostParams
    operating: OperatingCostParams
    zone_opening_cost: Mapping[str, float] = field(default_factory=dict)  # q_i per zone
    link_cost: ModLinkCostRule = field(default_factory=ModLinkCostRule)


@dataclass(frozen=True)
class TravelerGroup:
    id: str
    origin: str
    destination: str
    demand: float            # d_s, persons
    trip_utility: float      # U_s
    optout_disutility: Optional[float] = None  # t_s; defaults to U_s (zero opt-out payoff)

    @property
    def dummy_cost(self) -> float:
        return self.trip_utility if self.optout_disutility is None else self.optout_disutility


@dataclass(frozen=True)
class WalkLink:
    tail: str
    head: str
    travel_cost: float
    kind: str = "walking"  # "walking" | "transfer"


@dataclass(frozen=True)
class Scenario:
    name: str
    nodes: tuple[Node, ...]
    walk_links: tuple[WalkLink, ...] = ()
    fixed_route_operators: tuple[FixedRouteOperator, ...] = ()
    mod_operators: tuple[ModOperator, ...] = ()
    traveler_groups: tuple[TravelerGroup, ...] = ()
    notes: str = ""

    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def centroid_ids(self) -> set[str]:
        return {n.id for n in self.nodes if n.kind == "centroid"}

    def total_demand(self) -> float:
        return sum(g.demand for g in self.traveler_groups)


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.field}: {self.rule}: {self.message}"


class ScenarioError(ValueError):
    """Raised when an operation is handed a scenario that fails validation."""


# ---------------------------------------------------------------------------
# MOD cost functions
# ---------------------------------------------------------------------------

def mod_access_cost(x: float, h: int, params: AccessCostParams) -> float:
    """Average access/wait disutility a1 * x^b1 * h^b2 at total link flow x."""
    if x < 0:
        raise ValueError("flow must be nonnegative")
    if x == 0.0 and params.b1 > 0:
        return 0.0
    return params.a1 * x ** params.b1 * float(h) ** params.b2


def mod_access_marginal_cost(x: float, h: int, params: AccessCostParams) -> float:
    """d(tau(x) * x)/dx = a1 * (b1 + 1) * x^b1 * h^b2."""
    if x < 0:
        raise ValueError("flow must be nonnegative")
    if x == 0.0 and params.b1 > 0:
        return 0.0
    return params.a1 * (params.b1 + 1.0) * x ** params.b1 * float(h) ** params.b2


def mod_access_total_cost(x: float, h: int, params: AccessCostParams) -> float:
    """tau(x) * x = a1 * x^(b1+1) * h^b2, the term the matching objective carries."""
    if x <= 0:
        return 0.0
    return params.a1 * x ** (params.b1 + 1.0) * float(h) ** params.b2


def mod_unit_operating_cost(h: int, params: OperatingCostParams) -> float:
    """Per-unit-of-demand MOD link operating cost m_l(h) = a2 * h^b3."""
    if h < 1:
        raise ValueError("fleet size must be >= 1")
    return params.a2 * float(h) ** params.b3


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _is_finite(v: float) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v)


def validate(scenario: Scenario) -> list[Violation]:
    """Check every scenario invariant; returns an empty list iff well formed.

    Violations are data, not exceptions: each names the offending field and
    the rule it breaks.
    """
    out: list[Violation] = []
    add = out.append

    ids = [n.id for n in scenario.nodes]
    known = set(ids)
    if len(ids) != len(known):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        add(Violation("nodes", "unique ids", f"duplicate node ids {dupes}"))
    for n in scenario.nodes:
        if n.kind not in NODE_KINDS:
            add(Violation(f"nodes[{n.id}].kind", "known kind", f"unknown node kind {n.kind!r}"))
    centroids = scenario.centroid_ids()

    for w in scenario.walk_links:
        where = f"walk_links[{w.tail}->{w.head}]"
        if w.tail not in known or w.head not in known:
            add(Violation(where, "declared endpoints", "references undeclared node"))
        if not _is_finite(w.travel_cost) or w.travel_cost < 0:
            add(Violation(where + ".travel_cost", "nonnegative cost", f"got {w.travel_cost}"))
        if w.kind not in WALK_KINDS:
            add(Violation(where + ".kind", "known kind", f"unknown link kind {w.kind!r}"))

    seen_ops: set[str] = set()
    for op in scenario.fixed_route_operators:
        if op.id in seen_ops:
            add(Violation(f"fixed_route_operators[{op.id}]", "unique ids", "duplicate operator id"))
        seen_ops.add(op.id)
        for lk in op.links:
            where = f"fixed_route_operators[{op.id}].links[{lk.tail}->{lk.head}]"
            if lk.tail not in known or lk.head not in known:
                add(Violation(where, "declared endpoints", "references undeclared node"))
            if len(lk.options) < 1:
                add(Violation(where, "at least one option", "empty frequency option list"))
            if len(set(lk.options)) != len(lk.options):
                add(Violation(where, "distinct options", "duplicate frequency options in one group"))
            for k, o in enumerate(lk.options):
                if not _is_finite(o.travel_cost) or o.travel_cost < 0:
                    add(Violation(f"{where}.options[{k}].travel_cost", "nonnegative cost", f"got {o.travel_cost}"))
                if not _is_finite(o.operating_cost) or o.operating_cost < 0:
                    add(Violation(f"{where}.options[{k}].operating_cost", "nonnegative cost", f"got {o.operating_cost}"))
                if o.capacity is not None and (not _is_finite(o.capacity) or o.capacity <= 0):
                    add(Violation(f"{where}.options[{k}].capacity", "w_l > 0", f"got {o.capacity}"))

    for op in scenario.mod_operators:
        where = f"mod_operators[{op.id}]"
        if op.id in seen_ops:
            add(Violation(where, "unique ids", "duplicate operator id"))
        seen_ops.add(op.id)
        if len(op.zones) < 1:
            add(Violation(where + ".zones", "at least one zone", "empty candidate zone list"))
        if len(set(op.zones)) != len(op.zones):
            add(Violation(where + ".zones", "distinct zones", "duplicate zone ids"))
        for z in op.zones:
            if z not in centroids:
                add(Violation(where + ".zones", "zones are declared centroids", f"unknown centroid {z!r}"))
        if len(op.fleet_options) < 1:
            add(Violation(where + ".fleet_options", "|H_f| >= 1", "no fleet size options"))
        for h in op.fleet_options:
            if not isinstance(h, int) or h < 1:
                add(Violation(where + ".fleet_options", "positive integer fleet sizes", f"got {h!r}"))
        if len(set(op.fleet_options)) != len(op.fleet_options):
            add(Violation(where + ".fleet_options", "distinct fleet sizes", "duplicate fleet sizes"))
        if not _is_finite(op.access.a1) or op.access.a1 <= 0:
            add(Violation(where + ".access.a1", "a1 > 0", f"got {op.access.a1}"))
        if not _is_finite(op.access.b1) or op.access.b1 < 0:
            add(Violation(where + ".access.b1", "b1 >= 0 (marginal cost nonnegative)", f"got {op.access.b1}"))
        if not _is_finite(op.operating.a2) or op.operating.a2 <= 0:
            add(Violation(where + ".operating.a2", "a2 > 0 and b3 > 0", f"got a2={op.operating.a2}"))
        if not _is_finite(op.operating.b3) or op.operating.b3 <= 0:
            add(Violation(where + ".operating.b3", "a2 > 0 and b3 > 0", f"got b3={op.operating.b3}"))
        for z, q in op.zone_opening_cost.items():
            if z not in op.zones:
                add(Violation(where + ".zone_opening_cost", "costs keyed by candidate zones", f"unknown zone {z!r}"))
            if not _is_finite(q) or q < 0:
                add(Violation(where + f".zone_opening_cost[{z}]", "q_i >= 0", f"got {q}"))
        rule = op.link_cost
        if rule.mode not in ("matrix", "shortest_path_factor"):
            add(Violation(where + ".link_cost.mode", "known mode", f"got {rule.mode!r}"))
        elif rule.mode == "matrix":
            mat = rule.matrix or {}
            for i in op.zones:
                for j in op.zones:
                    if i != j and (i, j) not in mat:
                        add(Violation(where + ".link_cost.matrix", "all ordered zone pairs present",
                                      f"missing ({i}, {j})"))
            for pair, c in (rule.matrix or {}).items():
                if not _is_finite(c) or c < 0:
                    add(Violation(where + f".link_cost.matrix[{pair}]", "nonnegative cost", f"got {c}"))
        else:
            if not _is_finite(rule.factor) or rule.factor <= 0:
                add(Violation(where + ".link_cost.factor", "factor > 0", f"got {rule.factor}"))

    seen_groups: set[str] = set()
    for g in scenario.traveler_groups:
        where = f"traveler_groups[{g.id}]"
        if g.id in seen_groups:
            add(Violation(where, "unique ids", "duplicate group id"))
        seen_groups.add(g.id)
        for end, label in ((g.origin, "origin"), (g.destination, "destination")):
            if end not in centroids:
                add(Violation(f"{where}.{label}", "origin/destination is a declared centroid", f"got {end!r}"))
        if g.origin == g.destination:
            add(Violation(where, "distinct endpoints", "origin equals destination"))
        if not _is_finite(g.demand) or g.demand <= 0:
            add(Violation(where + ".demand", "d_s > 0", f"got {g.demand}"))
        if not _is_finite(g.trip_utility):
            add(Violation(where + ".trip_utility", "finite utility", f"got {g.trip_utility}"))
        t_s = g.optout_disutility
        if t_s is not None:
            if not _is_finite(t_s) or t_s < 0:
                add(Violation(where + ".optout_disutility", "nonnegative cost", f"got {t_s}"))
            elif g.trip_utility is not None and _is_finite(g.trip_utility) and t_s > g.trip_utility:
                add(Violation(where + ".optout_disutility", "t_s <= U_s",
                              "optout_disutility exceeds trip utility"))

    return out


def require_valid(scenario: Scenario) -> None:
    violations = validate(scenario)
    if violations:
        lines = "; ".join(str(v) for v in violations[:8])
        more = "" if len(violations) <= 8 else f" (+{len(violations) - 8} more)"
        raise ScenarioError(f"invalid scenario {scenario.name!r}: {lines}{more}")


# ---------------------------------------------------------------------------
# JSON serialization (format_version 1)
# ---------------------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "notes": s.notes,
        "nodes": [{"id": n.id, "kind": n.kind} for n in s.nodes],
        "walk_links": [
            {"tail": w.tail, "head": w.head, "travel_cost": w.travel_cost, "kind": w.kind}
            for w in s.walk_links
        ],
        "fixed_route_operators": [
            {
                "id": op.id,
                "links": [
                    {
                        "tail": lk.tail,
                        "head": lk.head,
                        "options": [
                            {
                                "travel_cost": o.travel_cost,
                                "operating_cost": o.operating_cost,
                                "capacity": o.capacity,
                            }
                            for o in lk.options
                        ],
                    }
                    for lk in op.links
                ],
            }
            for op in s.fixed_route_operators
        ],
        "mod_operators": [
            {
                "id": op.id,
                "zones": list(op.zones),
                "fleet_options": list(op.fleet_options),
                "access": {"a1": op.access.a1, "b1": op.access.b1, "b2": op.access.b2},
                "operating": {"a2": op.operating.a2, "b3": op.operating.b3},
                "zone_opening_cost": dict(op.zone_opening_cost),
                "link_cost": {
                    "mode": op.link_cost.mode,
                    "factor": op.link_cost.factor,
                    "matrix": (
                        None
                        if op.link_cost.matrix is None
                        else {f"{i}|{j}": c for (i, j), c in op.link_cost.matrix.items()}
                    ),
                },
            }
            for op in s.mod_operators
        ],
        "traveler_groups": [
            {
                "id": g.id,
                "origin": g.origin,
                "destination": g.destination,
                "demand": g.demand,
                "trip_utility": g.trip_utility,
                "optout_disutility": g.optout_disutility,
            }
            for g in s.traveler_groups
        ],
    }


def scenario_from_dict(d: Mapping) -> Scenario:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError(f"unsupported scenario format_version {version!r}")

    def _opt(o: Mapping) -> FrequencyOption:
        return FrequencyOption(
            travel_cost=float(o["travel_cost"]),
            operating_cost=float(o["operating_cost"]),
            capacity=None if o.get("capacity") is None else float(o["capacity"]),
        )

    mod_ops = []
    for op in d.get("mod_operators", []):
        lc = op.get("link_cost", {})
        matrix = lc.get("matrix")
        parsed_matrix = None
        if matrix is not None:
            parsed_matrix = {}
            for key, c in matrix.items():
                i, j = key.split("|", 1)
                parsed_matrix[(i, j)] = float(c)
        mod_ops.append(
            ModOperator(
                id=str(op["id"]),
                zones=tuple(str(z) for z in op["zones"]),
                fleet_options=tuple(int(h) for h in op["fleet_options"]),
                access=AccessCostParams(**{k: float(v) for k, v in op["access"].items()}),
                operating=OperatingCostParams(**{k: float(v) for k, v in op["operating"].items()}),
                zone_opening_cost={str(z): float(q) for z, q in op.get("zone_opening_cost", {}).items()},
                link_cost=ModLinkCostRule(
                    mode=str(lc.get("mode", "shortest_path_factor")),
                    factor=float(lc.get("factor", 0.75)),
                    matrix=parsed_matrix,
                ),
            )
        )

    return Scenario(
        name=str(d.get("name", "scenario")),
        notes=str(d.get("notes", "")),
        nodes=tuple(Node(id=str(n["id"]), kind=str(n.get("kind", "centroid"))) for n in d["nodes"]),
        walk_links=tuple(
            WalkLink(
                tail=str(w["tail"]),
                head=str(w["head"]),
                travel_cost=float(w["travel_cost"]),
                kind=str(w.get("kind", "walking")),
            )
            for w in d.get("walk_links", [])
        ),
        fixed_route_operators=tuple(
            FixedRouteOperator(
                id=str(op["id"]),
                links=tuple(
                    FixedRouteLink(
                        tail=str(lk["tail"]),
                        head=str(lk["head"]),
                        options=tuple(_opt(o) for o in lk["options"]),
                    )
                    for lk in op["links"]
                ),
            )
            for op in d.get("fixed_route_operators", [])
        ),
        mod_operators=tuple(mod_ops),
        traveler_groups=tuple(
            TravelerGroup(
                id=str(g["id"]),
                origin=str(g["origin"]),
                destination=str(g["destination"]),
                demand=float(g["demand"]),
                trip_utility=float(g["trip_utility"]),
                optout_disutility=(
                    None if g.get("optout_disutility") is None else float(g["optout_disutility"])
                ),
            )
            for g in d.get("traveler_groups", [])
        ),
    )


def canonical_json(d: Mapping) -> str:
    """Canonical serialization used for fingerprints and round-trip tests."""
    return json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
