"""Shared small instances for the test suite."""

from __future__ import annotations

import math

from cvarflp.instance import GeneratorParams, Instance, ScenarioSet, generate_instance


def toy(capacity: int = 5, scenarios=((3, 4),)) -> tuple[Instance, ScenarioSet]:
    """Two demand nodes within range of the single site (node 1)."""
    inst = Instance(
        node_ids=(1, 2),
        coords=((0.0, 0.0), (3.0, 0.0)),
        demand_ids=(1, 2),
        site_ids=(1,),
        opening_cost=(5000,),
        capacity=(capacity,),
        d_max=6.0,
    )
    return inst, ScenarioSet(tuple(tuple(s) for s in scenarios))


def line_instance(distances: list[float], d_max: float = 6.0) -> Instance:
    """Nodes on a line at the given offsets from node 1; every node is a site."""
    n = len(distances) + 1
    xs = [0.0] + list(distances)
    return Instance(
        node_ids=tuple(range(1, n + 1)),
        coords=tuple((x, 0.0) for x in xs),
        demand_ids=tuple(range(1, n + 1)),
        site_ids=tuple(range(1, n + 1)),
        opening_cost=(5000,) * n,
        capacity=(10,) * n,
        d_max=d_max,
    )


def small_fixtures(count: int = 8):
    """Generated fixtures with |I| <= 12, |J| <= 4, N <= 6 and k in {1, ceil(N/2), N}."""
    out = []
    for seed in range(count):
        n_nodes = 8 + seed % 5
        n_scen = 3 + seed % 4
        n_sites = 3 + seed % 2
        inst, scen = generate_instance(100 + seed, n_nodes, n_scen, GeneratorParams(n_sites=n_sites))
        for k in sorted({1, math.ceil(n_scen / 2), n_scen}):
            out.append((f"s{seed}-n{n_nodes}-N{n_scen}-k{k}", inst, scen, k))
    return out
