"""Bi-objective drivers over (opening cost, CVaR of uncovered demand).

Every driver is built on lexicographic solves of a single model in which the
two objectives are variables (``layout.cost`` and ``layout.risk``), so
budgets, boxes, fixings and local-branching balls are all bound or row
changes on a copy of the base model.

Reported risks are recomputed from the integral deliveries of the solution
rather than read off the objective, which removes solver noise: with
``alpha = 1 - k/N`` every risk value is a multiple of ``1/k``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cvar import CutPool, cvar_topk, delayed_cut_loop, initial_cut
from .formulations import (FirstStageSolution, FlpModel, cvar_alpha, evaluate_uncovered_vector, make_repair,
                           make_second_stages)
from .instance import Instance, ScenarioSet
from .milp import INT_TOL, MilpModel, Status, add_local_branching, fix_variables, solve_lp, solve_mip

log = logging.getLogger(__name__)

PROVENANCE = ("exact", "approximate", "re-evaluated")
RISK_TOL = 1e-6


@dataclass(frozen=True)
class FrontierPoint:
    cost: int
    risk: float
    y: tuple[int, ...]
    provenance: str = "exact"

    def __post_init__(self):
        if self.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.risk < -1e-9:
            raise ValueError("risk must be nonnegative")

    def dominates(self, other: "FrontierPoint", tol: float = 1e-9) -> bool:
        return (self.cost <= other.cost and self.risk <= other.risk + tol
                and (self.cost < other.cost or self.risk < other.risk - tol))

    def to_json(self) -> dict:
        return {"cost": self.cost, "risk": self.risk, "y": list(self.y), "provenance": self.provenance}

    @classmethod
    def from_json(cls, obj: dict) -> "FrontierPoint":
        return cls(int(obj["cost"]), float(obj["risk"]), tuple(int(v) for v in obj["y"]),
                   obj.get("provenance", "exact"))


@dataclass(frozen=True)
class Frontier:
    """Non-dominated points sorted by increasing cost and decreasing risk."""

    points: tuple[FrontierPoint, ...] = ()
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for a, b in zip(self.points, self.points[1:]):
            if not (a.cost < b.cost and a.risk > b.risk):
                raise ValueError(f"points ({a.cost}, {a.risk}) and ({b.cost}, {b.risk}) "
                                 "break the frontier order")

    @classmethod
    def from_points(cls, points: Iterable[FrontierPoint], stats: dict | None = None,
                    tol: float = 1e-9) -> "Frontier":
        """Dominance-filter and sort arbitrary points.

        Among points with equal cost the lowest risk survives; a point whose
        risk is not strictly below every cheaper point's risk is dropped.
        """
        kept: list[FrontierPoint] = []
        for p in sorted(points, key=lambda p: (p.cost, p.risk)):
            if kept and p.risk >= kept[-1].risk - tol:
                continue
            kept.append(p)
        return cls(tuple(kept), dict(stats or {}))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def costs(self) -> list[int]:
        return [p.cost for p in self.points]

    @property
    def risks(self) -> list[float]:
        return [p.risk for p in self.points]

    def as_pairs(self) -> list[tuple[float, float]]:
        return [(float(p.cost), float(p.risk)) for p in self.points]

    def same_points(self, other: "Frontier", tol: float = RISK_TOL) -> bool:
        """Equal costs and risks within ``tol`` (solutions ``y`` may differ)."""
        return len(self) == len(other) and all(
            a.cost == b.cost and abs(a.risk - b.risk) <= tol for a, b in zip(self, other))

    def to_json(self) -> str:
        return json.dumps([p.to_json() for p in self.points], indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Frontier":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ValueError("a frontier file holds a JSON array of points")
        return cls.from_points(FrontierPoint.from_json(d) for d in data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Frontier":
        return cls.from_json(Path(path).read_text())


# ------------------------------------------------------------------ engine
@dataclass
class _Outcome:
    status: str  # optimal | feasible | infeasible | none
    cost: int = 0
    risk: float = math.inf
    y: tuple[int, ...] = ()
    bounded: bool = False  # risk measured against a frozen pool (a lower bound)

    @property
    def found(self) -> bool:
        return self.status in ("optimal", "feasible")

    def point(self) -> FrontierPoint:
        exact = self.status == "optimal" and not self.bounded
        return FrontierPoint(self.cost, self.risk, self.y, "exact" if exact else "approximate")


class _Engine:
    """Solves restrictions of one model, handling the subset cut pool.

    ``mode`` is ``exact`` (separate on every solve) or ``bar`` (separate until
    :meth:`freeze`, then solve against the frozen pool only).
    """

    def __init__(self, flp: FlpModel, mode: str = "exact", engine: str = "highs"):
        if mode not in ("exact", "bar"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "bar" and flp.kind != "mb":
            raise ValueError("the frozen-pool strategy needs the subset model")
        self.flp = flp
        self.mode = mode
        self.engine = engine
        self.frozen = False
        self.solves = 0
        self.pool: CutPool | None = None
        self.repair = self.hint = None
        if flp.kind == "mb":
            stages = make_second_stages(flp, engine=engine)
            self.repair = make_repair(flp, second_stages=stages)
            self.hint = lambda x: stages(x)[2]
            k = flp.family.k
            self.pool = CutPool()
            self.pool.add(flp.family.cut(initial_cut(flp.scenarios, k)))
        self.calls_at_freeze = 0
        self._exact: dict[tuple, np.ndarray] = {}

    @property
    def base(self) -> MilpModel:
        return self.flp.model

    def freeze(self) -> None:
        if self.mode == "bar" and not self.frozen:
            self.frozen = True
            self.calls_at_freeze = self.pool.separator_calls

    @property
    def separator_calls_after_freeze(self) -> int:
        if self.pool is None or not self.frozen:
            return 0
        return self.pool.separator_calls - self.calls_at_freeze

    def solve(self, model: MilpModel, time_limit: float | None):
        self.solves += 1
        if self.pool is None:
            return solve_mip(model, time_limit=time_limit, engine=self.engine)
        if self.frozen:
            return solve_mip(self.pool.apply(model), time_limit=time_limit, engine=self.engine)
        res, _ = delayed_cut_loop(model, self.flp.family, self.pool, time_limit, self.engine,
                                  self.repair, self.hint)
        return res

    def relaxation(self, model: MilpModel):
        work = self.pool.apply(model) if self.pool is not None else model
        return solve_lp(work.relaxed(), engine=self.engine)

    def risk_of(self, x: np.ndarray) -> float:
        return self.measure(self.flp.losses(x))

    def polished(self, y: tuple[int, ...]) -> float:
        """Risk of ``y`` with every scenario's second stage solved exactly."""
        if y not in self._exact:
            sol = FirstStageSolution.from_vector(self.flp.instance, y)
            self._exact[y] = np.asarray(evaluate_uncovered_vector(
                self.flp.instance, self.flp.scenarios, sol, engine=self.engine), dtype=float)
        return self.measure(self._exact[y])

    def measure(self, losses) -> float:
        if self.pool is not None and self.frozen:
            return self.pool.max_loss(losses, self.flp.family.k)
        if self.flp.kind == "mb":
            return cvar_topk(losses, self.flp.family.k)
        return cvar_alpha(losses, self.flp.alpha)

    def restricted(self, cost_ub=None, cost_lb=None, risk_ub=None, risk_lb=None) -> MilpModel:
        m = self.base.copy()
        lay = self.flp.layout
        if cost_ub is not None or cost_lb is not None:
            m.set_bounds(lay.cost, lb=None if cost_lb is None else cost_lb - 0.5,
                         ub=None if cost_ub is None else cost_ub + 0.5)
        if risk_ub is not None or risk_lb is not None:
            m.set_bounds(lay.risk, lb=None if risk_lb is None else max(0.0, risk_lb - _risk_slack(risk_lb)),
                         ub=None if risk_ub is None else risk_ub + _risk_slack(risk_ub))
        return m


def _risk_slack(v: float) -> float:
    return RISK_TOL * max(1.0, abs(v))


def _remaining(deadline: float | None) -> float | None:
    if deadline is None:
        return None
    return max(deadline - time.perf_counter(), 1e-3)


def _lexmin(eng: _Engine, model: MilpModel, first: str, deadline: float | None) -> _Outcome:
    """Two-phase lexicographic solve of ``model`` (``first`` is cost or risk)."""
    lay = eng.flp.layout
    inst = eng.flp.instance
    var1, var2 = (lay.cost, lay.risk) if first == "cost" else (lay.risk, lay.cost)

    m1 = model.copy()
    m1.set_objective({var1: 1.0})
    r1 = eng.solve(m1, _remaining(deadline))
    if r1.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        return _Outcome("infeasible")
    if not r1.status.has_solution:
        return _Outcome("none")

    def outcome(res, proven: bool) -> _Outcome:
        y = eng.flp.first_stage(res.x)
        risk = eng.risk_of(res.x)
        if not proven:
            # a time-limited solve may leave the deliveries short for its own sites
            risk = min(risk, eng.polished(y))
        return _Outcome("optimal" if proven else "feasible", inst.opening_cost_of(y), max(0.0, risk), y,
                        eng.frozen)

    best = outcome(r1, r1.status is Status.OPTIMAL)
    m2 = model.copy()
    # the phase-1 point stays feasible, so its second objective is a cutoff
    if first == "cost":
        m2.set_bounds(var1, ub=best.cost + 0.5)
        v2 = max(best.risk, float(r1.x[var2]))
        _tighten(m2, var2, v2 + _risk_slack(v2))
    else:
        v1 = max(best.risk, float(r1.objective))
        m2.set_bounds(var1, ub=v1 + _risk_slack(v1))
        _tighten(m2, var2, best.cost + 0.5)
    m2.set_objective({var2: 1.0})
    r2 = eng.solve(m2, _remaining(deadline))
    if not r2.status.has_solution:
        best.status = "feasible"
        return best
    second = outcome(r2, best.status == "optimal" and r2.status is Status.OPTIMAL)
    # phase 2 can only improve the second objective; keep phase 1 if it did not
    key2 = (lambda o: o.risk) if first == "cost" else (lambda o: o.cost)
    if key2(second) > key2(best) + 1e-9:
        second = _Outcome(second.status, best.cost, best.risk, best.y, best.bounded)
    return second


def _tighten(model: MilpModel, var: int, ub: float) -> None:
    model.set_bounds(var, ub=min(ub, float(model.upper_bounds()[var])))


def _deadline(limit: float | None, overall: float | None = None) -> float | None:
    """Deadline for one point: ``limit`` from now, capped by ``overall``."""
    own = None if limit is None or math.isinf(limit) else time.perf_counter() + limit
    if overall is None:
        return own
    return overall if own is None else min(own, overall)


def _expired(overall: float | None) -> bool:
    return overall is not None and time.perf_counter() >= overall


def _finish(points: list[FrontierPoint], eng: _Engine, start: float, method: str,
            complete: bool) -> Frontier:
    stats = {
        "method": method,
        "model": eng.flp.kind if eng.mode == "exact" else "mb-bar",
        "runtime_s": time.perf_counter() - start,
        "solves": eng.solves,
        "status": "optimal" if complete and all(p.provenance == "exact" for p in points) else "approximate",
    }
    if eng.pool is not None:
        stats["cuts"] = len(eng.pool)
        stats["separator_calls"] = eng.pool.separator_calls
        stats["subsets"] = eng.pool.subsets
        if eng.mode == "bar":
            stats["separator_calls_after_first"] = eng.separator_calls_after_freeze
    return Frontier.from_points(points, stats)


# ------------------------------------------------------------------ drivers
def epsilon_constraint(flp: FlpModel, mode: str = "exact", time_limit_per_point: float | None = None,
                       engine: str = "highs", time_limit: float | None = None) -> Frontier:
    """Budget sweep from the full budget down to zero in steps of the cost gcd.

    ``mode="bar"`` separates only while computing the first point and then
    freezes the cut pool.  ``time_limit`` caps the whole sweep.
    """
    start = time.perf_counter()
    overall = _deadline(time_limit)
    eng = _Engine(flp, mode, engine)
    inst = flp.instance
    delta = inst.cost_step
    eps = inst.total_opening_cost
    points: list[FrontierPoint] = []
    complete = True
    while eps >= 0:
        if _expired(overall):
            complete = False
            break
        out = _lexmin(eng, eng.restricted(cost_ub=eps), "risk", _deadline(time_limit_per_point, overall))
        eng.freeze()
        if out.status == "infeasible":
            break
        if not out.found:
            log.warning("no solution within the time limit at budget %s; stopping", eps)
            complete = False
            break
        points.append(out.point())
        eps = out.cost - delta
    return _finish(points, eng, start, "e", complete)


def balanced_box(flp: FlpModel, time_limit_per_point: float | None = None,
                 engine: str = "highs", time_limit: float | None = None) -> Frontier:
    """Rectangle splitting on the risk midpoint between pairs of known points."""
    start = time.perf_counter()
    overall = _deadline(time_limit)
    eng = _Engine(flp, "exact", engine)
    delta = flp.instance.cost_step
    top = _lexmin(eng, eng.restricted(), "cost", _deadline(time_limit_per_point, overall))
    bottom = _lexmin(eng, eng.restricted(), "risk", _deadline(time_limit_per_point, overall))
    if not (top.found and bottom.found):
        return _finish([o.point() for o in (top, bottom) if o.found], eng, start, "bb", False)
    points = {top.cost: top.point(), bottom.cost: bottom.point()}
    complete = top.status == bottom.status == "optimal"
    queue = [(top, bottom)] if bottom.cost > top.cost and bottom.risk < top.risk - 1e-9 else []
    while queue:
        if _expired(overall):
            complete = False
            break
        a, b = queue.pop()
        mid = 0.5 * (a.risk + b.risk)
        box = dict(cost_lb=a.cost, cost_ub=b.cost, risk_lb=b.risk)
        z1 = _lexmin(eng, eng.restricted(risk_ub=mid, **box), "cost", _deadline(time_limit_per_point, overall))
        if not z1.found:
            complete = False
            continue
        points.setdefault(z1.cost, z1.point())
        z2 = _lexmin(eng, eng.restricted(cost_lb=a.cost, cost_ub=z1.cost - delta, risk_ub=a.risk),
                     "risk", _deadline(time_limit_per_point, overall))
        if z2.found:
            points.setdefault(z2.cost, z2.point())
            if z2.cost > a.cost:
                queue.append((a, z2))
        else:
            complete = False
        if z1.cost < b.cost:
            queue.append((z1, b))
    return _finish(list(points.values()), eng, start, "bb", complete)


def matheuristic(flp: FlpModel, mode: str = "exact", per_point_budget: float = 10.0, kappa: int = 2,
                 engine: str = "highs", time_limit: float | None = None) -> Frontier:
    """Budget sweep where each point starts from the previous solution.

    Per point: (a) fix the sites on which the LP relaxation agrees with the
    previous solution and solve the reduced problem with a third of the
    budget; (b) if that fails, search a local-branching ball of radius
    ``kappa`` around the previous sites; (c) if that fails too, solve the
    unrestricted problem.  Whatever is left of the budget is then spent
    proving the candidate optimal: an unrestricted solve that only accepts
    points at least as good.  Points are tagged exact only when this proof
    completes.
    """
    if not per_point_budget > 0:
        raise ValueError("per_point_budget must be positive")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    start = time.perf_counter()
    overall = _deadline(time_limit)
    eng = _Engine(flp, mode, engine)
    inst = flp.instance
    delta = inst.cost_step
    eps = inst.total_opening_cost
    points: list[FrontierPoint] = []
    prev: _Outcome | None = None
    complete = True
    while eps >= 0:
        if _expired(overall):
            complete = False
            break
        deadline = _deadline(per_point_budget, overall)
        base = eng.restricted(cost_ub=eps)
        cand = None
        if prev is not None:
            cand = _neighbourhood_search(eng, base, prev, kappa, deadline, per_point_budget)
        out = _verify(eng, base, cand, deadline)
        eng.freeze()
        if out.status == "infeasible":
            break
        if not out.found:
            # nothing within the budget: skip this level rather than end the sweep
            complete = False
            eps -= delta
            continue
        points.append(out.point())
        prev = out
        eps = out.cost - delta
    return _finish(points, eng, start, "mat", complete)


def _neighbourhood_search(eng: _Engine, base: MilpModel, prev: _Outcome, kappa: int,
                          deadline: float | None, budget: float) -> _Outcome | None:
    lay = eng.flp.layout
    short = None if math.isinf(budget) else budget / 3.0
    # (a) relaxation-induced fixing
    lp = eng.relaxation(_with_objective(base, lay.risk))
    if lp.status is Status.OPTIMAL:
        fix = {int(v): float(prev.y[j]) for j, v in enumerate(lay.y)
               if abs(lp.x[v] - prev.y[j]) <= INT_TOL}
        if fix:
            out = _lexmin(eng, fix_variables(base, fix), "risk", _sooner(deadline, short))
            if out.found:
                return out
    # (b) local branching around the previous sites
    center = {int(v): float(prev.y[j]) for j, v in enumerate(lay.y)}
    out = _lexmin(eng, add_local_branching(base, center, kappa), "risk", _sooner(deadline, short))
    if out.found:
        return out
    return None


def _verify(eng: _Engine, base: MilpModel, cand: _Outcome | None, deadline: float | None) -> _Outcome:
    """(c)/(d): unrestricted solve, bounded by the candidate when there is one."""
    if cand is None:
        return _lexmin(eng, base, "risk", deadline)
    if deadline is not None and time.perf_counter() >= deadline:
        cand.status = "feasible"
        return cand
    bounded = base.copy()
    lay = eng.flp.layout
    bounded.set_bounds(lay.risk, ub=cand.risk + _risk_slack(cand.risk))
    out = _lexmin(eng, bounded, "risk", deadline)
    if out.found and (out.risk < cand.risk - 1e-9
                      or (out.risk <= cand.risk + 1e-9 and out.cost <= cand.cost)):
        return out
    cand.status = "optimal" if out.status == "optimal" else "feasible"
    return cand


def _with_objective(model: MilpModel, var: int) -> MilpModel:
    m = model.copy()
    m.set_objective({var: 1.0})
    return m


def _sooner(deadline: float | None, span: float | None) -> float | None:
    if span is None:
        return deadline
    other = time.perf_counter() + span
    return other if deadline is None else min(deadline, other)


def reevaluate_frontier(frontier: Frontier, instance: Instance, scenarios: ScenarioSet,
                        k: int | None = None, alpha: float | None = None,
                        engine: str = "highs") -> Frontier:
    """Replace every risk by the exact CVaR of the point's sites."""
    if (k is None) == (alpha is None):
        raise ValueError("give exactly one of k and alpha")
    cache: dict[tuple, float] = {}
    points = []
    for p in frontier:
        if p.y not in cache:
            vec = evaluate_uncovered_vector(instance, scenarios, FirstStageSolution.from_vector(instance, p.y),
                                            engine=engine)
            cache[p.y] = cvar_topk(vec, k) if k is not None else cvar_alpha(vec, alpha)
        points.append(FrontierPoint(instance.opening_cost_of(p.y), cache[p.y], p.y, "re-evaluated"))
    stats = dict(frontier.stats)
    stats["reevaluated"] = True
    return Frontier.from_points(points, stats)


def frontier_from_vectors(instance: Instance, costs_risks: Sequence[tuple[Sequence[int], float]],
                          provenance: str = "exact") -> Frontier:
    """Frontier of explicit ``(y, risk)`` candidates."""
    return Frontier.from_points(
        FrontierPoint(instance.opening_cost_of(y), float(r), tuple(int(v) for v in y), provenance)
        for y, r in costs_risks)
