"""MILP models for the two-stage facility location problem.

Both risk models share the second-stage block: per scenario, demand node
``i`` may be assigned to at most one covering open site, a site delivers
``u_js`` up to its capacity and up to the demand assigned to it, and the
loss of a scenario is its uncovered demand ``Q_s - sum_j u_js``.

* ``build_mb``: CVaR variable ``rho`` bounded below by the subset rows, which
  are left to a :class:`~cvarflp.cvar.SubsetCutFamily` for lazy generation.
* ``build_ma``: the classical VaR-auxiliary linearization
  ``cvar = eta + 1/((1-alpha) N) * sum_s excess_s``.

The opening cost is carried by a variable ``cost = sum_j gamma_j y_j`` so the
frontier drivers can bound it like any other variable.  Assignment variables
for pairs outside the coverage radius are kept but fixed to zero, and their
linking rows are omitted since those variables cannot move.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cvar import SubsetCutFamily, cvar_topk
from .instance import Instance, InstanceError, RiskSpec, ScenarioSet, check_compatible
from .milp import LE, EQ, GE, MilpModel, Status, VarKind, solve_mip


@dataclass(frozen=True)
class FlpLayout:
    """Variable indices of a built model."""

    y: np.ndarray        # (|J|,)
    x: np.ndarray        # (|I|, |J|, N)
    u: np.ndarray        # (|J|, N)
    cost: int
    risk: int
    extra: dict = field(default_factory=dict)


@dataclass
class FlpModel:
    """A built model plus what the drivers need to interpret its solutions."""

    kind: str
    model: MilpModel
    layout: FlpLayout
    instance: Instance
    scenarios: ScenarioSet
    alpha: float
    family: SubsetCutFamily | None = None

    @property
    def k(self) -> float:
        """Tail size ``(1 - alpha) N`` (integral whenever alpha = 1 - k/N)."""
        return (1.0 - self.alpha) * self.scenarios.n_scenarios

    def first_stage(self, x: np.ndarray) -> tuple[int, ...]:
        return tuple(int(round(v)) for v in np.asarray(x)[self.layout.y])

    def losses(self, x: np.ndarray) -> np.ndarray:
        delivered = np.rint(np.asarray(x)[self.layout.u]).astype(np.int64).sum(axis=0)
        return self.scenarios.totals - delivered


@dataclass(frozen=True)
class FirstStageSolution:
    y: tuple[int, ...]
    cost: int

    @classmethod
    def from_vector(cls, instance: Instance, y: Sequence[int]) -> "FirstStageSolution":
        y = tuple(int(v) for v in y)
        if any(v not in (0, 1) for v in y):
            raise InstanceError(f"first-stage values must be binary, got {y}")
        return cls(y, instance.opening_cost_of(y))


@dataclass(frozen=True)
class ScenarioOutcome:
    scenario: int
    x: dict
    u: dict
    uncovered: int


def add_second_stage(model: MilpModel, instance: Instance, scenarios: ScenarioSet) -> FlpLayout:
    """Add ``y``, ``x``, ``u``, ``cost`` and the linking rows to ``model``.

    The returned layout has ``risk = -1``; callers add their own risk block.
    """
    check_compatible(instance, scenarios)
    n_i, n_j, n_s = instance.n_demand, instance.n_sites, scenarios.n_scenarios
    psi = instance.coverage_matrix  # (I, J)
    q = scenarios.matrix            # (I, S)
    cap = np.asarray(instance.capacity, dtype=float)
    gamma = np.asarray(instance.opening_cost, dtype=float)

    y = model.add_vars([f"y[{j}]" for j in range(n_j)], 0, 1, VarKind.BINARY)
    x_names = [f"x[{i},{j},{s}]" for i in range(n_i) for j in range(n_j) for s in range(n_s)]
    x_ub = np.broadcast_to(psi[:, :, None], (n_i, n_j, n_s)).ravel().astype(float)
    x = model.add_vars(x_names, 0, x_ub, VarKind.BINARY).reshape(n_i, n_j, n_s)
    u_names = [f"u[{j},{s}]" for j in range(n_j) for s in range(n_s)]
    u = model.add_vars(u_names, 0, np.repeat(cap, n_s), VarKind.INTEGER).reshape(n_j, n_s)
    cost = model.add_var("cost", 0, float(gamma.sum()))

    # cost - sum_j gamma_j y_j = 0
    model.add_rows_from_coo(
        np.zeros(n_j + 1, dtype=np.int64), np.concatenate([[cost], y]),
        np.concatenate([[1.0], -gamma]), [EQ], [0.0])

    cov_i, cov_j = np.nonzero(psi)
    n_cov = cov_i.size
    s_idx = np.arange(n_s)

    # at most one covering site per demand node and scenario
    rows = np.repeat(cov_i * n_s, n_s) + np.tile(s_idx, n_cov)
    cols = x[np.repeat(cov_i, n_s), np.repeat(cov_j, n_s), np.tile(s_idx, n_cov)]
    model.add_rows_from_coo(rows, cols, np.ones(rows.size), [LE] * (n_i * n_s), np.ones(n_i * n_s))

    # u_js <= c_j y_j
    r = np.arange(n_j * n_s)
    jj = np.repeat(np.arange(n_j), n_s)
    model.add_rows_from_coo(np.concatenate([r, r]), np.concatenate([u.ravel(), y[jj]]),
                            np.concatenate([np.ones(r.size), -cap[jj]]), [LE] * r.size, np.zeros(r.size))

    # u_js <= sum_i q_is psi_ij x_ijs
    link_rows = np.repeat(cov_j * n_s, n_s) + np.tile(s_idx, n_cov)
    link_vals = -q[np.repeat(cov_i, n_s), np.tile(s_idx, n_cov)].astype(float)
    model.add_rows_from_coo(np.concatenate([r, link_rows]), np.concatenate([u.ravel(), cols]),
                            np.concatenate([np.ones(r.size), link_vals]), [LE] * r.size, np.zeros(r.size))

    # x_ijs <= y_j
    n_link = cols.size
    lr = np.arange(n_link)
    model.add_rows_from_coo(np.concatenate([lr, lr]),
                            np.concatenate([cols, y[np.repeat(cov_j, n_s)]]),
                            np.concatenate([np.ones(n_link), -np.ones(n_link)]),
                            [LE] * n_link, np.zeros(n_link))
    return FlpLayout(y=y, x=x, u=u, cost=cost, risk=-1)


def build_mb(instance: Instance, scenarios: ScenarioSet, risk: RiskSpec) -> FlpModel:
    """Subset-based model; the subset rows come from ``FlpModel.family``."""
    if risk.n_scenarios != scenarios.n_scenarios:
        raise ValueError("risk spec and scenario set disagree on N")
    if not 1 <= risk.k <= scenarios.n_scenarios:
        raise ValueError(f"k must lie in [1, {scenarios.n_scenarios}]")
    model = MilpModel("MB")
    layout = add_second_stage(model, instance, scenarios)
    rho = model.add_var("rho", 0.0)
    model.set_objective({rho: 1.0})
    layout = FlpLayout(layout.y, layout.x, layout.u, layout.cost, rho)
    family = SubsetCutFamily(scenarios.totals, risk.k, layout.u, rho)
    return FlpModel("mb", model, layout, instance, scenarios, risk.alpha, family)


def build_ma(instance: Instance, scenarios: ScenarioSet, alpha: float) -> FlpModel:
    """Classical CVaR model with VaR auxiliary ``eta`` and scenario excesses."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    model = MilpModel("MA")
    layout = add_second_stage(model, instance, scenarios)
    n_s = scenarios.n_scenarios
    # an optimal eta is a quantile of the (nonnegative) losses
    eta = model.add_var("eta", 0.0)
    excess = model.add_vars([f"excess[{s}]" for s in range(n_s)], 0.0)
    cvar = model.add_var("cvar", 0.0)
    n_j = instance.n_sites
    # excess_s + eta + sum_j u_js >= Q_s
    rows = np.concatenate([np.arange(n_s), np.arange(n_s), np.repeat(np.arange(n_s), n_j)])
    cols = np.concatenate([excess, np.full(n_s, eta), layout.u.T.ravel()])
    model.add_rows_from_coo(rows, cols, np.ones(rows.size), [GE] * n_s,
                            scenarios.totals.astype(float))
    weight = 1.0 / ((1.0 - alpha) * n_s)
    model.add_rows_from_coo(np.zeros(n_s + 2, dtype=np.int64),
                            np.concatenate([[cvar, eta], excess]),
                            np.concatenate([[1.0, -1.0], np.full(n_s, -weight)]), [EQ], [0.0])
    model.set_objective({cvar: 1.0})
    layout = FlpLayout(layout.y, layout.x, layout.u, layout.cost, cvar,
                       {"eta": eta, "excess": excess})
    return FlpModel("ma", model, layout, instance, scenarios, alpha)


def cvar_alpha(losses: Sequence[float], alpha: float) -> float:
    """CVaR of equiprobable losses at any level, via the VaR-auxiliary formula."""
    v = np.asarray(losses, dtype=float)
    tail = (1.0 - alpha) * v.size
    k = round(tail)
    if abs(tail - k) < 1e-9 and k >= 1:
        return cvar_topk(v, int(k))
    weight = 1.0 / tail
    return float(min(eta + weight * np.maximum(v - eta, 0.0).sum() for eta in v))


# -------------------------------------------------------------- second stage
def _second_stage_core(instance: Instance, q: np.ndarray, y: Sequence[int], time_limit=None,
                       engine: str = "highs") -> tuple[dict, dict, int]:
    """Max delivery for one demand vector; returns ({(i, j): 1}, {j: u_j}, uncovered) by index."""
    total = int(q.sum())
    psi = instance.coverage_matrix
    open_sites = [j for j, v in enumerate(y) if v == 1]
    pairs = [(i, j) for j in open_sites for i in range(instance.n_demand) if psi[i, j] and q[i] > 0]
    if not pairs:
        return {}, {j: 0 for j in open_sites}, total
    model = MilpModel("second_stage")
    xv = {p: model.add_var(f"x[{p[0]},{p[1]}]", 0, 1, VarKind.BINARY) for p in pairs}
    uv = {j: model.add_var(f"u[{j}]", 0, instance.capacity[j], VarKind.INTEGER) for j in open_sites}
    for i in {i for i, _ in pairs}:
        model.add_constraint({xv[(i, j)]: 1.0 for j in open_sites if (i, j) in xv}, LE, 1.0)
    for j in open_sites:
        coeffs = {uv[j]: 1.0}
        coeffs.update({xv[(i, jj)]: -float(q[i]) for (i, jj) in pairs if jj == j})
        model.add_constraint(coeffs, LE, 0.0)
    model.set_objective({uv[j]: 1.0 for j in open_sites}, "max")
    res = solve_mip(model, time_limit=time_limit, engine=engine)
    if not res.status.has_solution:
        raise RuntimeError(f"second-stage solve failed with status {res.status.value}")
    if res.status is not Status.OPTIMAL:
        raise TimeoutError("second-stage solve hit its time limit")
    assign = {p: 1 for p, v in xv.items() if res.x[v] > 0.5}
    u = {j: int(round(res.x[v])) for j, v in uv.items()}
    return assign, u, total - sum(u.values())


def _check_first_stage(instance: Instance, y) -> tuple[int, ...]:
    y_vec = y.y if isinstance(y, FirstStageSolution) else tuple(int(v) for v in y)
    if len(y_vec) != instance.n_sites or any(v not in (0, 1) for v in y_vec):
        raise InstanceError(f"first-stage vector must have {instance.n_sites} binary entries")
    return y_vec


def solve_second_stage(instance: Instance, scenarios: ScenarioSet, y: FirstStageSolution | Sequence[int],
                       s: int, time_limit: float | None = None, engine: str = "highs") -> ScenarioOutcome:
    """Maximize delivered demand of scenario ``s`` with the sites ``y`` fixed."""
    check_compatible(instance, scenarios)
    y_vec = _check_first_stage(instance, y)
    if not 0 <= s < scenarios.n_scenarios:
        raise ValueError(f"scenario index {s} out of range")
    assign, u, uncovered = _second_stage_core(instance, scenarios.matrix[:, s], y_vec, time_limit, engine)
    x_out = {(instance.demand_ids[i], instance.site_ids[j]): 1 for (i, j) in assign}
    u_out = {instance.site_ids[j]: v for j, v in u.items()}
    return ScenarioOutcome(s, x_out, u_out, uncovered)


def make_second_stages(flp: FlpModel, cache: dict | None = None, engine: str = "highs"):
    """Map a candidate to its sites' optimal second stages, cached per (sites, scenario).

    The returned callable gives ``(y, outcomes, losses)`` where ``outcomes[s]``
    is ``(assign, u, uncovered)`` of scenario ``s``.
    """
    cache = {} if cache is None else cache
    q = flp.scenarios.matrix

    def second_stages(x: np.ndarray):
        y = flp.first_stage(x)
        outcomes = []
        for s in range(flp.scenarios.n_scenarios):
            key = (y, s)
            if key not in cache:
                cache[key] = _second_stage_core(flp.instance, q[:, s], y, engine=engine)
            outcomes.append(cache[key])
        return y, outcomes, np.array([o[2] for o in outcomes], dtype=float)

    return second_stages


def make_repair(flp: FlpModel, cache: dict | None = None, engine: str = "highs", second_stages=None):
    """Candidate repair for the subset model.

    Keeps the candidate's sites, re-optimizes every scenario's second stage
    and sets ``rho`` to the resulting CVaR, so the returned point satisfies
    every subset row.
    """
    if flp.kind != "mb":
        raise ValueError("repair is defined for the subset model")
    second_stages = second_stages or make_second_stages(flp, cache, engine)
    lay = flp.layout
    k = flp.family.k

    def repair(x: np.ndarray) -> np.ndarray:
        _, outcomes, losses = second_stages(x)
        out = np.array(x, dtype=float)
        out[lay.x] = 0.0
        out[lay.u] = 0.0
        for s, (assign, u, _) in enumerate(outcomes):
            for (i, j) in assign:
                out[lay.x[i, j, s]] = 1.0
            for j, v in u.items():
                out[lay.u[j, s]] = v
        out[lay.risk] = cvar_topk(losses, k)
        return out

    return repair


def evaluate_uncovered_vector(instance: Instance, scenarios: ScenarioSet,
                              y: FirstStageSolution | Sequence[int], engine: str = "highs") -> list[int]:
    """Minimal uncovered demand of every scenario for fixed first-stage sites."""
    check_compatible(instance, scenarios)
    y_vec = _check_first_stage(instance, y)
    q = scenarios.matrix
    return [_second_stage_core(instance, q[:, s], y_vec, engine=engine)[2]
            for s in range(scenarios.n_scenarios)]


def lazy_family_size(n_scenarios: int, k: int) -> int:
    return math.comb(n_scenarios, k)
