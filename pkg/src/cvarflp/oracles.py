"""Brute-force reference implementations for tests.

Nothing here calls into the solver paths (cvar, formulations, frontier
drivers, indicators); only the data types are shared.  Every oracle refuses
inputs beyond its budget instead of running unbounded.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .frontier import Frontier, FrontierPoint
from .instance import Instance, ScenarioSet


class OracleRefusal(RuntimeError):
    """Input exceeds the oracle budget."""


@dataclass(frozen=True)
class OracleBudget:
    max_scenarios: int = 12
    max_sites: int = 8
    max_demand_nodes: int = 12


DEFAULT_BUDGET = OracleBudget()


def cvar_enumerate(values: Sequence[float], k: int, budget: OracleBudget = DEFAULT_BUDGET) -> float:
    """Largest mean over all ``k``-subsets."""
    vals = [float(v) for v in values]
    if len(vals) > budget.max_scenarios:
        raise OracleRefusal(f"{len(vals)} scenarios exceed the budget of {budget.max_scenarios}")
    if not 1 <= k <= len(vals):
        raise ValueError("k out of range")
    return max(sum(c) for c in itertools.combinations(vals, k)) / k


def separate_enumerate(values: Sequence[float], k: int, rho_hat: float, tolerance: float = 1e-6,
                       budget: OracleBudget = DEFAULT_BUDGET) -> tuple[bool, float]:
    """(violated?, best subset sum) by listing every subset."""
    vals = [float(v) for v in values]
    if len(vals) > budget.max_scenarios:
        raise OracleRefusal(f"{len(vals)} scenarios exceed the budget of {budget.max_scenarios}")
    best = max(sum(vals[s] for s in c) for c in itertools.combinations(range(len(vals)), k))
    return best > rho_hat + tolerance, best


def _covers(instance: Instance, i: int, j: int) -> bool:
    a = instance.node_index(instance.demand_ids[i])
    b = instance.node_index(instance.site_ids[j])
    if instance.explicit_distance is not None:
        d = instance.explicit_distance[a][b]
    else:
        (x1, y1), (x2, y2) = instance.coords[a], instance.coords[b]
        d = math.hypot(x1 - x2, y1 - y2)
    return d <= instance.d_max + 1e-9


def second_stage_enumerate(instance: Instance, y: Sequence[int], demand: Sequence[int],
                           budget: OracleBudget = DEFAULT_BUDGET) -> int:
    """Minimal uncovered demand for open sites ``y`` and one demand vector.

    Each demand node goes to one covering open site or nowhere; a site
    delivers the smaller of its capacity and its assigned demand.  The search
    walks the nodes in order of decreasing demand.  Delivery never drops when
    a site's load grows, so a node is left out only when every covering site
    is already full.  Branches whose optimistic completion cannot beat the
    best assignment seen so far are cut.
    """
    if instance.n_sites > budget.max_sites:
        raise OracleRefusal(f"{instance.n_sites} sites exceed the budget of {budget.max_sites}")
    if instance.n_demand > budget.max_demand_nodes:
        raise OracleRefusal(f"{instance.n_demand} demand nodes exceed the budget")
    open_sites = [j for j in range(instance.n_sites) if y[j]]
    caps = [int(instance.capacity[j]) for j in open_sites]
    options = []
    for i in range(instance.n_demand):
        opts = [pos for pos, j in enumerate(open_sites) if _covers(instance, i, j)]
        if opts and demand[i] > 0:
            options.append((int(demand[i]), opts))
    options.sort(key=lambda o: -o[0])
    tail = [0] * (len(options) + 1)
    for n in range(len(options) - 1, -1, -1):
        tail[n] = tail[n + 1] + options[n][0]
    best = 0
    seen = set()

    def search(node: int, loads: list[int]) -> None:
        nonlocal best
        value = sum(loads)
        if value > best:
            best = value
        if node == len(options):
            return
        room = sum(c - l for c, l in zip(caps, loads))
        if value + min(tail[node], room) <= best:
            return
        key = (node, tuple(loads))
        if key in seen:
            return
        seen.add(key)
        q, opts = options[node]
        placed = False
        for pos in opts:
            if loads[pos] < caps[pos]:
                placed = True
                old = loads[pos]
                loads[pos] = min(caps[pos], old + q)
                search(node + 1, loads)
                loads[pos] = old
        if not placed:
            search(node + 1, loads)

    search(0, [0] * len(open_sites))
    return int(sum(int(d) for d in demand)) - best


def exact_frontier(instance: Instance, scenarios: ScenarioSet, k: int,
                   budget: OracleBudget = DEFAULT_BUDGET) -> Frontier:
    """Frontier by listing every first-stage vector."""
    if scenarios.n_scenarios > budget.max_scenarios:
        raise OracleRefusal(f"{scenarios.n_scenarios} scenarios exceed the budget")
    if instance.n_sites > budget.max_sites or instance.n_demand > budget.max_demand_nodes:
        raise OracleRefusal("instance exceeds the oracle budget")
    candidates = []
    for y in itertools.product((0, 1), repeat=instance.n_sites):
        cost = sum(int(g) * v for g, v in zip(instance.opening_cost, y))
        losses = [second_stage_enumerate(instance, y, scen, budget) for scen in scenarios.demand]
        candidates.append((cost, cvar_enumerate(losses, k, budget), y))
    candidates.sort(key=lambda c: (c[0], c[1]))
    points: list[FrontierPoint] = []
    for cost, risk, y in candidates:
        if points and risk >= points[-1].risk - 1e-9:
            continue
        if points and cost == points[-1].cost:
            continue
        points.append(FrontierPoint(cost, risk, tuple(y), "exact"))
    return Frontier(tuple(points))


def hypervolume_monte_carlo(points: Sequence[tuple[float, float]], ref: Sequence[float],
                            samples: int = 200_000, seed: int = 0) -> tuple[float, float]:
    """(estimate, standard error) from uniform samples in the box [min, ref]."""
    pts = np.array([(float(a), float(b)) for a, b in points]).reshape(-1, 2)
    if not len(pts):
        return 0.0, 0.0
    lo = pts.min(axis=0)
    span = np.asarray(ref, dtype=float) - lo
    rng = np.random.default_rng(seed)
    hits = 0
    for start in range(0, samples, 50_000):
        draw = lo + rng.random((min(50_000, samples - start), 2)) * span
        dominated = (pts[None, :, 0] <= draw[:, None, 0]) & (pts[None, :, 1] <= draw[:, None, 1])
        hits += int(dominated.any(axis=1).sum())
    p = hits / samples
    area = float(span[0] * span[1])
    return area * p, area * math.sqrt(p * (1 - p) / samples)


def hypervolume_grid(points: Sequence[tuple[float, float]], ref: Sequence[float]) -> float:
    """Exact area by summing the cells of the coordinate grid that are dominated."""
    pts = [(float(a), float(b)) for a, b in points]
    xs = sorted({p[0] for p in pts} | {float(ref[0])})
    ys = sorted({p[1] for p in pts} | {float(ref[1])})
    area = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            if any(px <= x0 and py <= y0 for px, py in pts):
                area += (x1 - x0) * (y1 - y0)
    return area
