"""LP/MIP solve entry points with a lazy-constraint channel.

Two engines sit behind the same contract:

``"highs"``
    scipy's HiGHS bindings.  Lazy rows are handled by re-solving: each optimal
    candidate of the current relaxation is offered to the separator and the
    returned rows are appended before the next solve.
``"native"``
    the in-package bounded simplex plus best-bound branch-and-bound, which
    calls the separator at every integer-feasible node.

A separator returns ``None`` (accept), one row, or a list of rows whose first
member cuts the candidate off; later members are extra valid rows.  Both
engines treat lazy rows as globally valid and never raise on a time limit;
they return the best incumbent and bound instead.

An optional ``repair`` callback turns a candidate rejected by the separator
into a solution that satisfies the whole lazy family (or ``None``).  Repaired
points become incumbents; on the HiGHS path each new incumbent adds an
objective cutoff to later rounds, and one matching the bound of the rejected
round ends the solve as optimal.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import EQ, GE, LE, LinearRow, MilpModel
from .simplex import simplex

INT_TOL = 1e-6
FEAS_TOL = 1e-7
MIP_GAP = 1e-6

Separator = Callable[[np.ndarray], Optional["LinearRow | Sequence[LinearRow]"]]
Repair = Callable[[np.ndarray], Optional[np.ndarray]]


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT_FEASIBLE = "time_limit_feasible"
    TIME_LIMIT_NO_SOLUTION = "time_limit_no_solution"

    @property
    def has_solution(self) -> bool:
        return self in (Status.OPTIMAL, Status.TIME_LIMIT_FEASIBLE)


@dataclass
class SolveResult:
    status: Status
    objective: float
    x: np.ndarray | None
    bound: float
    names: tuple[str, ...] = ()
    cuts_added: int = 0
    lazy_rows: list[LinearRow] = field(default_factory=list)
    nodes: int = 0
    runtime: float = 0.0

    def value(self, var: int | str) -> float:
        if self.x is None:
            raise ValueError(f"no solution available (status {self.status.value})")
        if isinstance(var, str):
            var = self.names.index(var)
        return float(self.x[var])

    @property
    def assignment(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return dict(zip(self.names, self.x.tolist()))


class SeparatorError(RuntimeError):
    """The separator returned a row its candidate does not violate."""


def _bounds_for_highs(lb: np.ndarray, ub: np.ndarray) -> Bounds:
    return Bounds(lb, ub)


def _constraint_for_highs(a: sp.csr_matrix, senses: np.ndarray, rhs: np.ndarray):
    if a.shape[0] == 0:
        return []
    lo = np.where(senses == LE, -np.inf, rhs)
    hi = np.where(senses == GE, np.inf, rhs)
    return [LinearConstraint(a, lo, hi)]


def _snap(x: np.ndarray, integral: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    x[integral] = np.round(x[integral]) + 0.0  # drop negative zeros
    return x


def _separate(separator, x: np.ndarray) -> list[LinearRow]:
    """Rows returned for ``x``; the first must cut it off, later ones are extra valid rows."""
    out = separator(x)
    if out is None:
        return []
    rows = [out] if isinstance(out, LinearRow) else list(out)
    if rows and rows[0].violation(x) <= FEAS_TOL:
        raise SeparatorError(
            f"separator returned a row violated by only {rows[0].violation(x):.3g}")
    return rows


# ----------------------------------------------------------------------- LP
def solve_lp(model: MilpModel, engine: str = "highs") -> SolveResult:
    """Solve the LP relaxation of ``model`` (integrality marks are ignored)."""
    start = time.perf_counter()
    sign = -1.0 if model.maximize else 1.0
    c = sign * model.objective_vector()
    a, senses, rhs = model.rows()
    lb, ub = model.lower_bounds(), model.upper_bounds()
    names = tuple(model.names)
    if engine == "native":
        out = simplex(c, a.toarray(), senses, rhs, lb, ub)
        status = Status(out.status)
        x = out.x
        obj = sign * out.objective if out.x is not None else (
            math.nan if status is Status.INFEASIBLE else -sign * math.inf)
    elif engine == "highs":
        le = senses == LE
        ge = senses == GE
        eq = senses == EQ
        a_ub = sp.vstack([a[le], -a[ge]], format="csr")
        b_ub = np.concatenate([rhs[le], -rhs[ge]])
        res = linprog(c, A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
                      A_eq=a[eq] if eq.any() else None, b_eq=rhs[eq] if eq.any() else None,
                      bounds=np.column_stack([lb, ub]), method="highs")
        if res.status == 0:
            status, x, obj = Status.OPTIMAL, res.x, sign * res.fun
        elif res.status == 2:
            status, x, obj = Status.INFEASIBLE, None, math.nan
        elif res.status == 3:
            status, x, obj = Status.UNBOUNDED, None, -sign * math.inf
        else:
            raise RuntimeError(f"HiGHS LP failed: {res.message}")
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return SolveResult(status, obj, x, obj, names, runtime=time.perf_counter() - start)


# ---------------------------------------------------------------------- MIP
def solve_mip(model: MilpModel, time_limit: float | None = None,
              separator: Separator | None = None, engine: str = "highs",
              repair: Repair | None = None) -> SolveResult:
    """Solve ``model`` to optimality (relative gap 1e-6) or until ``time_limit``.

    Every integer-feasible candidate is offered to ``separator`` before it may
    become the incumbent; returned rows are appended globally to a private
    copy of the model (the caller's model is untouched) and listed in
    ``SolveResult.lazy_rows``.
    """
    if time_limit is not None and time_limit <= 0:
        raise ValueError("time_limit must be positive")
    work = model.copy()
    if engine == "highs":
        return _solve_highs(work, time_limit, separator, repair)
    if engine == "native":
        return _BranchAndBound(work, time_limit, separator, repair).run()
    raise ValueError(f"unknown engine {engine!r}")


def _repaired(work: MilpModel, repair: Repair | None, x: np.ndarray) -> np.ndarray | None:
    if repair is None:
        return None
    xr = repair(x)
    if xr is None or work.max_violation(xr) > 1e-6 or work.integer_violation(xr) > INT_TOL:
        return None
    return xr


def _solve_highs(work: MilpModel, time_limit, separator, repair=None) -> SolveResult:
    start = time.perf_counter()
    sign = -1.0 if work.maximize else 1.0
    integral = work.integrality()
    names = tuple(work.names)
    lazy: list[LinearRow] = []
    best_x: np.ndarray | None = None  # repaired incumbent
    best = math.inf  # its sign-adjusted objective
    lower = -math.inf

    def fallback(elapsed: float) -> SolveResult:
        if best_x is None:
            return SolveResult(Status.TIME_LIMIT_NO_SOLUTION, math.nan, None, sign * lower,
                               names, len(lazy), lazy, runtime=elapsed)
        return SolveResult(Status.TIME_LIMIT_FEASIBLE, sign * best, best_x, sign * lower,
                           names, len(lazy), lazy, runtime=elapsed)

    while True:
        options = {"disp": False, "mip_rel_gap": MIP_GAP}
        if time_limit is not None:
            remaining = time_limit - (time.perf_counter() - start)
            if remaining <= 0:
                return fallback(time.perf_counter() - start)
            options["time_limit"] = max(remaining, 1e-3)
        a, senses, rhs = work.rows()
        res = milp(sign * work.objective_vector(), integrality=integral.astype(int),
                   bounds=_bounds_for_highs(work.lower_bounds(), work.upper_bounds()),
                   constraints=_constraint_for_highs(a, senses, rhs), options=options)
        elapsed = time.perf_counter() - start
        bound = getattr(res, "mip_dual_bound", None)
        if res.status == 2:
            if best_x is not None:  # cannot happen for a valid repair; keep the incumbent
                return SolveResult(Status.OPTIMAL, sign * best, best_x, sign * best, names,
                                   len(lazy), lazy, runtime=elapsed)
            return SolveResult(Status.INFEASIBLE, math.nan, None, math.nan, names,
                               len(lazy), lazy, runtime=elapsed)
        if res.status == 3:
            return SolveResult(Status.UNBOUNDED, -sign * math.inf, None, -sign * math.inf,
                               names, len(lazy), lazy, runtime=elapsed)
        round_bound = res.fun if res.status == 0 else (
            bound if bound is not None and not math.isnan(bound) else -math.inf)
        lower = max(lower, min(round_bound, best))
        if res.x is None:
            if res.status == 1:
                return fallback(elapsed)
            raise RuntimeError(f"HiGHS MIP failed: {res.message}")
        x = _snap(res.x, integral)
        if separator is not None:
            rows = _separate(separator, x)
            if rows:
                for row in rows:
                    work.add_row(row)
                lazy.extend(rows)
                xr = _repaired(work, repair, x)
                if xr is not None:
                    val = sign * work.objective_value(xr)
                    if val < best:
                        best, best_x = val, xr
                        # later rounds only need to look for something better
                        c = sign * work.objective_vector()
                        nz = np.flatnonzero(c)
                        work.add_row(LinearRow(nz, c[nz], LE, best + MIP_GAP * max(1.0, abs(best))))
                if best_x is not None and best <= lower + MIP_GAP * max(1.0, abs(best)):
                    return SolveResult(Status.OPTIMAL, sign * best, best_x, sign * lower, names,
                                       len(lazy), lazy, runtime=time.perf_counter() - start)
                if res.status != 0:
                    return fallback(time.perf_counter() - start)
                continue
        status = Status.OPTIMAL if res.status == 0 else Status.TIME_LIMIT_FEASIBLE
        obj = work.objective_value(x)
        if best < sign * obj:
            x, obj = best_x, sign * best
        if bound is None or (isinstance(bound, float) and math.isnan(bound)):
            dual = obj
        else:
            dual = sign * float(bound)
        if status is Status.OPTIMAL:
            dual = min(dual, obj) if not work.maximize else max(dual, obj)
        return SolveResult(status, obj, x, dual, names, len(lazy), lazy, runtime=elapsed)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    depth: int = field(compare=False, default=0)


class _BranchAndBound:
    """Best-bound search with depth-first plunging over the native simplex."""

    def __init__(self, model: MilpModel, time_limit, separator, repair=None):
        self.model = model
        self.time_limit = time_limit
        self.separator = separator
        self.repair = repair
        self.sign = -1.0 if model.maximize else 1.0
        self.integral = model.integrality()
        self.lazy: list[LinearRow] = []
        self.nodes = 0

    def _lp(self, lb, ub):
        a, senses, rhs = self.model.rows()
        out = simplex(self.sign * self.model.objective_vector(), a.toarray(), senses, rhs, lb, ub)
        if out.status == "unbounded":
            return "unbounded", None, -math.inf
        if out.status == "infeasible":
            return "infeasible", None, math.inf
        return "optimal", out.x, out.objective

    def _pick_branch(self, x: np.ndarray) -> int:
        frac = np.abs(x - np.round(x))
        frac[~self.integral] = 0.0
        if frac.max(initial=0.0) <= INT_TOL:
            return -1
        score = np.minimum(x - np.floor(x), np.ceil(x) - x)
        score[~self.integral] = -1.0
        score[frac <= INT_TOL] = -1.0
        return int(np.argmax(score))  # argmax keeps the lowest index on ties

    def run(self) -> SolveResult:
        start = time.perf_counter()
        names = tuple(self.model.names)
        incumbent_x: np.ndarray | None = None
        incumbent = math.inf
        seq = 0
        lb0 = self.model.lower_bounds()
        ub0 = self.model.upper_bounds()
        lb0[self.integral] = np.ceil(lb0[self.integral] - INT_TOL)
        ub0[self.integral] = np.floor(ub0[self.integral] + INT_TOL)
        heap: list[_Node] = [_Node(-math.inf, seq, lb0, ub0)]
        plunge: _Node | None = None
        timed_out = False

        def cutoff() -> float:
            if math.isinf(incumbent):
                return math.inf
            return incumbent - MIP_GAP * max(1.0, abs(incumbent))

        while heap or plunge is not None:
            if self.time_limit is not None and time.perf_counter() - start > self.time_limit:
                timed_out = True
                break
            if plunge is not None:
                node, plunge = plunge, None
            else:
                node = heapq.heappop(heap)
            if node.bound >= cutoff():
                continue
            self.nodes += 1
            status, x, obj = self._lp(node.lb, node.ub)
            if status == "unbounded":
                return SolveResult(Status.UNBOUNDED, -self.sign * math.inf, None,
                                   -self.sign * math.inf, names, nodes=self.nodes)
            if status == "infeasible" or obj >= cutoff():
                continue
            j = self._pick_branch(x)
            if j < 0:
                x = _snap(x, self.integral)
                if self.separator is not None:
                    rows = _separate(self.separator, x)
                    if rows:
                        for row in rows:
                            self.model.add_row(row)
                        self.lazy.extend(rows)
                        xr = _repaired(self.model, self.repair, x)
                        if xr is not None:
                            val = self.sign * self.model.objective_value(xr)
                            if val < incumbent:
                                incumbent, incumbent_x = val, xr
                        node.bound = obj
                        plunge = node
                        continue
                incumbent, incumbent_x = obj, x
                continue
            down_ub = node.ub.copy()
            down_ub[j] = math.floor(x[j])
            up_lb = node.lb.copy()
            up_lb[j] = math.ceil(x[j])
            seq += 1
            down = _Node(obj, seq, node.lb, down_ub, node.depth + 1)
            seq += 1
            up = _Node(obj, seq, up_lb, node.ub, node.depth + 1)
            first, second = (up, down) if x[j] - math.floor(x[j]) > 0.5 else (down, up)
            plunge = first
            heapq.heappush(heap, second)

        open_bounds = [n.bound for n in heap]
        if plunge is not None:
            open_bounds.append(plunge.bound)
        runtime = time.perf_counter() - start
        if incumbent_x is None:
            if timed_out:
                bound = min(open_bounds, default=math.inf)
                return SolveResult(Status.TIME_LIMIT_NO_SOLUTION, math.nan, None,
                                   self.sign * bound, names, len(self.lazy), self.lazy,
                                   self.nodes, runtime)
            return SolveResult(Status.INFEASIBLE, math.nan, None, math.nan, names,
                               len(self.lazy), self.lazy, self.nodes, runtime)
        bound = min([incumbent] + open_bounds) if timed_out else incumbent
        status = Status.TIME_LIMIT_FEASIBLE if timed_out else Status.OPTIMAL
        return SolveResult(status, self.sign * incumbent, incumbent_x, self.sign * bound, names,
                           len(self.lazy), self.lazy, self.nodes, runtime)

