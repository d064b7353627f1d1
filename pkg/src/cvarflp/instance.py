"""Network and scenario data: types, JSON I/O, synthetic generation.

The JSON document looks like::

    {
      "d_max": 6.0,
      "nodes": [
        {"id": 1, "x": 0.0, "y": 0.0, "is_site": true, "opening_cost": 5000, "capacity": 300},
        {"id": 2, "x": 4.2, "y": 1.0, "is_site": false}
      ],
      "scenarios": [[120, 80], [95, 140]]
    }

``scenarios`` is scenario-major; column order follows the demand nodes in
``nodes``.  Two optional extensions are accepted: ``"is_demand": false`` on a
node removes it from the demand set, and a top-level ``"distance"`` matrix
(nodes x nodes) replaces Euclidean distances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import Any, Hashable, Sequence

import numpy as np

COVERAGE_EPS = 1e-9

NodeId = Hashable


class InstanceError(ValueError):
    """Invalid instance data or instance document."""


@dataclass(frozen=True)
class Instance:
    """Facility location network.

    Sites (``J``) must be demand nodes (``I``); opening costs and capacities
    are aligned with ``site_ids``.
    """

    node_ids: tuple
    coords: tuple[tuple[float, float], ...]
    demand_ids: tuple
    site_ids: tuple
    opening_cost: tuple[int, ...]
    capacity: tuple[int, ...]
    d_max: float
    explicit_distance: tuple[tuple[float, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(set(self.node_ids)) != len(self.node_ids):
            raise InstanceError("node ids must be unique")
        if len(self.coords) != len(self.node_ids):
            raise InstanceError("one coordinate pair per node is required")
        known = set(self.node_ids)
        missing = [i for i in self.demand_ids if i not in known]
        if missing:
            raise InstanceError(f"demand node {missing[0]!r} is not a node")
        demand = set(self.demand_ids)
        if any(j not in demand for j in self.site_ids):
            raise InstanceError("J must be a subset of I")
        if len(set(self.site_ids)) != len(self.site_ids):
            raise InstanceError("site ids must be unique")
        if len(self.opening_cost) != len(self.site_ids) or len(self.capacity) != len(self.site_ids):
            raise InstanceError("opening_cost and capacity need one entry per site")
        for name, values in (("opening_cost", self.opening_cost), ("capacity", self.capacity)):
            for v in values:
                if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                    raise InstanceError(f"{name} entries must be nonnegative integers, got {v!r}")
        if not (isinstance(self.d_max, (int, float)) and self.d_max > 0 and math.isfinite(self.d_max)):
            raise InstanceError("d_max must be a positive number")
        if self.explicit_distance is not None:
            d = np.asarray(self.explicit_distance, dtype=float)
            n = len(self.node_ids)
            if d.shape != (n, n):
                raise InstanceError(f"distance must be a {n}x{n} matrix")
            if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.array_equal(d, d.T):
                raise InstanceError("distance must be symmetric, nonnegative, with zero diagonal")

    # ------------------------------------------------------------- lookups
    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_demand(self) -> int:
        return len(self.demand_ids)

    @property
    def n_sites(self) -> int:
        return len(self.site_ids)

    @cached_property
    def _node_pos(self) -> dict:
        return {node: pos for pos, node in enumerate(self.node_ids)}

    def node_index(self, node: NodeId) -> int:
        try:
            return self._node_pos[node]
        except KeyError:
            raise InstanceError(f"unknown node id {node!r}") from None

    def site_index(self, site: NodeId) -> int:
        try:
            return self.site_ids.index(site)
        except ValueError:
            raise InstanceError(f"{site!r} is not a candidate site") from None

    def demand_index(self, node: NodeId) -> int:
        try:
            return self.demand_ids.index(node)
        except ValueError:
            raise InstanceError(f"{node!r} is not a demand node") from None

    @cached_property
    def distance_matrix(self) -> np.ndarray:
        if self.explicit_distance is not None:
            return np.asarray(self.explicit_distance, dtype=float)
        xy = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        diff = xy[:, None, :] - xy[None, :, :]
        return np.hypot(diff[..., 0], diff[..., 1])

    def distance(self, i: NodeId, j: NodeId) -> float:
        return float(self.distance_matrix[self.node_index(i), self.node_index(j)])

    @cached_property
    def coverage_matrix(self) -> np.ndarray:
        """0/1 matrix ``psi`` of shape (|I|, |J|)."""
        rows = [self.node_index(i) for i in self.demand_ids]
        cols = [self.node_index(j) for j in self.site_ids]
        d = self.distance_matrix[np.ix_(rows, cols)]
        return (d <= self.d_max + COVERAGE_EPS).astype(np.int64)

    @property
    def total_opening_cost(self) -> int:
        return int(sum(self.opening_cost))

    @property
    def cost_step(self) -> int:
        """Granularity of achievable opening costs (gcd of positive costs)."""
        positive = [int(c) for c in self.opening_cost if c > 0]
        return reduce(math.gcd, positive) if positive else 1

    def opening_cost_of(self, y: Sequence[int]) -> int:
        if len(y) != self.n_sites:
            raise InstanceError(f"expected {self.n_sites} first-stage values, got {len(y)}")
        return int(sum(int(c) * int(v) for c, v in zip(self.opening_cost, y)))


def coverage(instance: Instance, i: NodeId, j: NodeId) -> int:
    """1 if demand node ``i`` is within ``d_max`` of site ``j`` (inclusive)."""
    instance.demand_index(i)
    instance.site_index(j)
    return int(instance.distance(i, j) <= instance.d_max + COVERAGE_EPS)


@dataclass(frozen=True)
class ScenarioSet:
    """Equiprobable demand scenarios; ``demand[s][i]`` follows ``Instance.demand_ids``."""

    demand: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if not self.demand:
            raise InstanceError("at least one scenario is required")
        width = len(self.demand[0])
        for s, row in enumerate(self.demand):
            if len(row) != width:
                raise InstanceError(f"scenarios[{s}] has {len(row)} entries, expected {width}")
            for v in row:
                if not isinstance(v, (int, np.integer)) or isinstance(v, bool):
                    raise InstanceError(f"scenarios[{s}] contains non-integer demand {v!r}")
                if v < 0:
                    raise InstanceError(f"scenarios[{s}] contains negative demand {v}")

    @classmethod
    def from_matrix(cls, demand_by_node: np.ndarray) -> "ScenarioSet":
        """Build from an (|I|, N) integer matrix."""
        arr = np.asarray(demand_by_node)
        return cls(tuple(tuple(int(v) for v in col) for col in arr.T))

    @property
    def n_scenarios(self) -> int:
        return len(self.demand)

    @property
    def n_nodes(self) -> int:
        return len(self.demand[0])

    @property
    def probability(self) -> float:
        return 1.0 / self.n_scenarios

    @cached_property
    def matrix(self) -> np.ndarray:
        """Demand as an (|I|, N) int64 array."""
        return np.asarray(self.demand, dtype=np.int64).T.copy()

    @cached_property
    def totals(self) -> np.ndarray:
        return self.matrix.sum(axis=0)


@dataclass(frozen=True)
class RiskSpec:
    """Subset cardinality ``k`` out of ``n_scenarios``; ``alpha = 1 - k/N``."""

    k: int
    n_scenarios: int

    def __post_init__(self):
        if self.n_scenarios < 1:
            raise ValueError("n_scenarios must be positive")
        if not 1 <= self.k <= self.n_scenarios:
            raise ValueError(f"k must lie in [1, {self.n_scenarios}], got {self.k}")

    @property
    def alpha(self) -> float:
        return 1.0 - self.k / self.n_scenarios

    @classmethod
    def from_alpha(cls, alpha: float, n_scenarios: int) -> "RiskSpec":
        if not 0.0 <= alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
        k = int(round(n_scenarios * (1.0 - alpha)))
        return cls(max(1, min(k, n_scenarios)), n_scenarios)


def check_compatible(instance: Instance, scenarios: ScenarioSet) -> None:
    if scenarios.n_nodes != instance.n_demand:
        raise InstanceError(
            f"scenarios have {scenarios.n_nodes} columns but the instance has "
            f"{instance.n_demand} demand nodes")


# ------------------------------------------------------------------ JSON I/O
def _field(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise InstanceError(f"{where}: missing field '{key}'")
    return obj[key]


def _as_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise InstanceError(f"{where}: expected an integer, got {value!r}")
    return int(value)


def _as_number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(f"{where}: expected a number, got {value!r}")
    return float(value)


def parse_instance(data: bytes | str) -> tuple[Instance, ScenarioSet]:
    """Parse the JSON instance document; every invariant is validated."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InstanceError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InstanceError("top level must be a JSON object")
    nodes = _field(doc, "nodes", "document")
    if not isinstance(nodes, list) or not nodes:
        raise InstanceError("nodes: expected a non-empty array")
    ids, coords, demand_ids, site_ids, costs, caps = [], [], [], [], [], []
    for pos, node in enumerate(nodes):
        where = f"nodes[{pos}]"
        if not isinstance(node, dict):
            raise InstanceError(f"{where}: expected an object")
        node_id = _field(node, "id", where)
        if not isinstance(node_id, (int, str)) or isinstance(node_id, bool):
            raise InstanceError(f"{where}.id: expected an integer or string")
        ids.append(node_id)
        coords.append((_as_number(_field(node, "x", where), f"{where}.x"),
                       _as_number(_field(node, "y", where), f"{where}.y")))
        is_demand = node.get("is_demand", True)
        is_site = _field(node, "is_site", where)
        if not isinstance(is_site, bool) or not isinstance(is_demand, bool):
            raise InstanceError(f"{where}: is_site/is_demand must be booleans")
        if is_demand:
            demand_ids.append(node_id)
        if is_site:
            site_ids.append(node_id)
            cost = _as_int(_field(node, "opening_cost", where), f"{where}.opening_cost")
            cap = _as_int(_field(node, "capacity", where), f"{where}.capacity")
            if cost < 0:
                raise InstanceError(f"{where}.opening_cost: must be nonnegative")
            if cap < 0:
                raise InstanceError(f"{where}.capacity: must be nonnegative")
            costs.append(cost)
            caps.append(cap)
    d_max = _as_number(_field(doc, "d_max", "document"), "d_max")
    explicit = doc.get("distance")
    if explicit is not None:
        try:
            explicit = tuple(tuple(_as_number(v, "distance") for v in row) for row in explicit)
        except TypeError:
            raise InstanceError("distance: expected a matrix") from None
    raw = _field(doc, "scenarios", "document")
    if not isinstance(raw, list) or not raw:
        raise InstanceError("scenarios: expected a non-empty array")
    demand = []
    for s, row in enumerate(raw):
        if not isinstance(row, list) or len(row) != len(demand_ids):
            raise InstanceError(f"scenarios[{s}]: expected {len(demand_ids)} demands")
        values = tuple(_as_int(v, f"scenarios[{s}]") for v in row)
        if any(v < 0 for v in values):
            raise InstanceError(f"scenarios[{s}]: negative demand")
        demand.append(values)
    instance = Instance(tuple(ids), tuple(coords), tuple(demand_ids), tuple(site_ids),
                        tuple(costs), tuple(caps), d_max, explicit)
    return instance, ScenarioSet(tuple(demand))


def serialize_instance(instance: Instance, scenarios: ScenarioSet) -> str:
    check_compatible(instance, scenarios)
    demand = set(instance.demand_ids)
    nodes = []
    for node, (x, y) in zip(instance.node_ids, instance.coords):
        entry: dict[str, Any] = {"id": node, "x": x, "y": y, "is_site": node in instance.site_ids}
        if node not in demand:
            entry["is_demand"] = False
        if entry["is_site"]:
            j = instance.site_ids.index(node)
            entry["opening_cost"] = int(instance.opening_cost[j])
            entry["capacity"] = int(instance.capacity[j])
        nodes.append(entry)
    doc: dict[str, Any] = {"d_max": instance.d_max, "nodes": nodes,
                           "scenarios": [list(map(int, row)) for row in scenarios.demand]}
    if instance.explicit_distance is not None:
        doc["distance"] = [list(row) for row in instance.explicit_distance]
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------- generator
@dataclass(frozen=True)
class GeneratorParams:
    """Knobs of the synthetic village-cluster generator."""

    n_sites: int | None = None
    site_fraction: float = 0.25
    opening_cost: int = 5000
    d_max: float = 6.0
    capacity_factor: float = 1.5
    base_demand: tuple[int, int] = (20, 200)
    demand_factor: tuple[float, float] = (0.5, 1.5)
    villages_per_area: int = 16
    area_spacing_km: float = 12.0
    village_spread_km: float = 3.0


def _network_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0]))


def _scenario_rng(seed: int, draw: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1, draw]))


def _draw_scenarios(rng: np.random.Generator, base: np.ndarray, m: int,
                    params: GeneratorParams) -> ScenarioSet:
    lo, hi = params.demand_factor
    factors = rng.uniform(lo, hi, size=(base.size, m))
    demand = np.rint(base[:, None] * factors).astype(np.int64)
    return ScenarioSet.from_matrix(demand)


def _generate_network(seed: int, n_nodes: int, params: GeneratorParams):
    rng = _network_rng(seed)
    n_areas = max(1, round(n_nodes / params.villages_per_area))
    side = params.area_spacing_km * math.sqrt(n_areas)
    centers = rng.uniform(0.0, side, size=(n_areas, 2))
    area = rng.permutation(np.arange(n_nodes) % n_areas)
    xy = centers[area] + rng.normal(0.0, params.village_spread_km, size=(n_nodes, 2))
    xy = np.round(xy, 3)
    n_sites = params.n_sites if params.n_sites is not None else round(params.site_fraction * n_nodes)
    n_sites = int(min(max(n_sites, 1), n_nodes))
    sites = np.sort(rng.choice(n_nodes, size=n_sites, replace=False))
    lo, hi = params.base_demand
    base = rng.integers(lo, hi + 1, size=n_nodes)
    mean_factor = 0.5 * sum(params.demand_factor)
    cap = int(round(params.capacity_factor * float(base.sum()) * mean_factor / n_sites))
    ids = tuple(range(1, n_nodes + 1))
    site_ids = tuple(ids[s] for s in sites)
    instance = Instance(
        node_ids=ids,
        coords=tuple((float(a), float(b)) for a, b in xy),
        demand_ids=ids,
        site_ids=site_ids,
        opening_cost=(int(params.opening_cost),) * n_sites,
        capacity=(cap,) * n_sites,
        d_max=float(params.d_max),
    )
    return instance, base


def generate_instance(seed: int, n_nodes: int, n_scenarios: int,
                      params: GeneratorParams | None = None) -> tuple[Instance, ScenarioSet]:
    """Deterministic synthetic instance with clustered villages.

    The network depends only on ``(seed, n_nodes, params)``; scenarios come
    from an independent stream, so regenerating with another ``n_scenarios``
    keeps the same network.
    """
    if n_nodes < 1:
        raise InstanceError("n_nodes must be at least 1")
    if n_scenarios < 1:
        raise InstanceError("n_scenarios must be at least 1")
    params = params or GeneratorParams()
    instance, base = _generate_network(seed, n_nodes, params)
    return instance, _draw_scenarios(_scenario_rng(seed, 0), base, n_scenarios, params)


def regenerate_scenarios(seed: int, n_nodes: int, m: int, params: GeneratorParams | None = None,
                         draw: int = 1) -> ScenarioSet:
    """Fresh i.i.d. sample of ``m`` scenarios from the generator's distribution."""
    if m < 1:
        raise InstanceError("m must be at least 1")
    params = params or GeneratorParams()
    _, base = _generate_network(seed, n_nodes, params)
    return _draw_scenarios(_scenario_rng(seed, draw), base, m, params)


def subsample_scenarios(scenarios: ScenarioSet, m: int, seed: int,
                        identity: bool = False) -> ScenarioSet:
    """Resample ``m`` scenarios from ``scenarios``.

    Draws without replacement when ``m <= N`` and with replacement otherwise.
    With ``identity=True`` and ``m == N`` the input is returned unchanged.
    """
    if m < 1:
        raise InstanceError("m must be at least 1")
    n = scenarios.n_scenarios
    if identity and m == n:
        return scenarios
    rng = np.random.default_rng(seed)
    picks = rng.choice(n, size=m, replace=m > n)
    return ScenarioSet(tuple(scenarios.demand[int(p)] for p in picks))
