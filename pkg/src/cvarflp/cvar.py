"""Subset-based CVaR: evaluation, separation and delayed cut generation.

With ``N`` equiprobable scenarios and ``alpha = 1 - k/N`` the CVaR of a loss
vector is the largest mean over ``k``-subsets of scenarios, i.e. the mean of
its ``k`` largest entries.  As a constraint family this reads

    rho >= (1/k) * sum_{s in S'} (Q_s - sum_j u_js)    for every |S'| = k,

which is far too large to write down, so the rows are generated lazily from
integer candidates by sorting their per-scenario losses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .instance import ScenarioSet
from .milp import GE, LinearRow, MilpModel, SolveResult, solve_mip

log = logging.getLogger(__name__)

SEPARATION_TOL = 1e-6


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")


def top_k_indices(values: Sequence[float], k: int) -> tuple[int, ...]:
    """Indices of the ``k`` largest values, ties broken by lowest index."""
    v = np.asarray(values, dtype=float)
    _check_k(k, v.size)
    order = np.lexsort((np.arange(v.size), -v))
    return tuple(sorted(int(i) for i in order[:k]))


def cvar_topk(values: Sequence[float], k: int) -> float:
    """Mean of the ``k`` largest entries (CVaR at level ``1 - k/N``)."""
    v = np.asarray(values, dtype=float)
    _check_k(k, v.size)
    return float(np.sort(v)[::-1][:k].sum() / k)


def separate(values: Sequence[float], k: int, rho_hat: float, tolerance: float = SEPARATION_TOL,
             n_scenarios: int | None = None) -> tuple[int, ...] | None:
    """Most violated subset for a candidate, or ``None`` if it is accepted.

    ``values`` are the scaled per-scenario losses ``(Q_s - sum_j u_js) / k``;
    the subset of the ``k`` largest is returned when its sum exceeds
    ``rho_hat + tolerance``.
    """
    v = np.asarray(values, dtype=float)
    if n_scenarios is not None and v.size != n_scenarios:
        raise ValueError(f"expected {n_scenarios} values, got {v.size}")
    subset = top_k_indices(v, k)
    if float(v[list(subset)].sum()) > rho_hat + tolerance:
        return subset
    return None


def rank_sums(scenarios: ScenarioSet) -> np.ndarray:
    """Per-scenario sum over demand nodes of the descending demand rank.

    Rank 1 is the largest demand at a node; ties go to the lower scenario index.
    """
    q = scenarios.matrix  # (|I|, N)
    n = q.shape[1]
    ranks = np.empty_like(q)
    for i in range(q.shape[0]):
        order = np.lexsort((np.arange(n), -q[i]))
        ranks[i, order] = np.arange(1, n + 1)
    return ranks.sum(axis=0)


def initial_cut(scenarios: ScenarioSet, k: int, literal: bool = False) -> tuple[int, ...]:
    """Seed subset for the relaxed model.

    By default the ``k`` scenarios with the largest total demand (ties by
    lowest index), which is the subset the separator would pick with every
    site closed.  ``literal=True`` instead sorts the rank sums of
    :func:`rank_sums` in descending order and takes the first ``k``, which
    favours low-demand scenarios.
    """
    n = scenarios.n_scenarios
    _check_k(k, n)
    if not literal:
        return top_k_indices(scenarios.totals, k)
    score = rank_sums(scenarios)
    order = np.lexsort((np.arange(n), -score))
    return tuple(sorted(int(s) for s in order[:k]))


@dataclass(frozen=True)
class Cut:
    subset: tuple[int, ...]
    row: LinearRow


class SubsetCutFamily:
    """Row generator for the subset constraints of one model.

    ``u_index`` is the (|J|, N) array of delivery variable indices and
    ``rho_index`` the index of the CVaR variable.
    """

    def __init__(self, totals: Sequence[int], k: int, u_index: np.ndarray, rho_index: int):
        self.totals = np.asarray(totals)
        if self.totals.dtype.kind not in "iuf":
            raise ValueError("scenario totals must be numeric")
        self.n_scenarios = self.totals.size
        _check_k(k, self.n_scenarios)
        self.k = k
        self.u_index = np.asarray(u_index)
        self.rho_index = int(rho_index)

    @property
    def size(self) -> int:
        return math.comb(self.n_scenarios, self.k)

    def cut(self, subset: Iterable[int]) -> Cut:
        """``rho + (1/k) sum u_js >= (1/k) sum Q_s`` over the subset."""
        subset = tuple(sorted(int(s) for s in subset))
        if len(subset) != self.k or len(set(subset)) != self.k:
            raise ValueError(f"a cut needs {self.k} distinct scenarios, got {subset}")
        if subset[0] < 0 or subset[-1] >= self.n_scenarios:
            raise ValueError(f"scenario index out of range in {subset}")
        u = self.u_index[:, list(subset)].ravel()
        idx = np.concatenate([[self.rho_index], u]).astype(np.int64)
        vals = np.concatenate([[1.0], np.full(u.size, 1.0 / self.k)])
        rhs = float(self.totals[list(subset)].sum()) / self.k
        return Cut(subset, LinearRow(idx, vals, GE, rhs))

    def losses(self, x: np.ndarray) -> np.ndarray:
        """Per-scenario uncovered demand ``Q_s - sum_j u_js`` at ``x``."""
        delivered = np.asarray(x)[self.u_index].sum(axis=0)
        return self.totals - delivered

    def all_cuts(self) -> Iterable[Cut]:
        from itertools import combinations

        for subset in combinations(range(self.n_scenarios), self.k):
            yield self.cut(subset)


@dataclass
class CutPool:
    """Ordered, duplicate-free collection of generated subset cuts."""

    cuts: list[Cut] = field(default_factory=list)
    separator_calls: int = 0
    _seen: set = field(default_factory=set, repr=False)

    def __len__(self) -> int:
        return len(self.cuts)

    def __contains__(self, subset) -> bool:
        return tuple(sorted(subset)) in self._seen

    def add(self, cut: Cut) -> bool:
        if cut.subset in self._seen:
            return False
        self._seen.add(cut.subset)
        self.cuts.append(cut)
        return True

    @property
    def subsets(self) -> list[tuple[int, ...]]:
        return [c.subset for c in self.cuts]

    def apply(self, model: MilpModel) -> MilpModel:
        """Copy of ``model`` with every pooled row appended."""
        out = model.copy()
        out.add_row_list([c.row for c in self.cuts])
        return out

    def max_loss(self, losses: np.ndarray, k: int) -> float:
        """Largest pooled subset mean of ``losses`` (0 for an empty pool)."""
        if not self.cuts:
            return 0.0
        return max(float(losses[list(c.subset)].sum()) / k for c in self.cuts)


def make_separator(family: SubsetCutFamily, pool: CutPool, tolerance: float = SEPARATION_TOL,
                   hint=None):
    """Lazy-row callback checking a candidate against the whole family.

    ``hint(x)``, when given, returns losses no larger than the candidate's own
    (e.g. its sites with every second stage re-optimized).  The top-k subset
    of those losses is pooled alongside the separated one: it is a member of
    the family, hence valid, and it is the subset that binds once the
    deliveries are right.
    """

    def separator(x: np.ndarray) -> list[LinearRow] | None:
        pool.separator_calls += 1
        values = family.losses(x) / family.k
        rho_hat = float(x[family.rho_index])
        subset = separate(values, family.k, rho_hat, tolerance)
        if subset is None:
            return None
        cut = family.cut(subset)
        if not pool.add(cut):
            log.warning("separator re-found pooled subset %s; accepting candidate", subset)
            return None
        rows = [cut.row]
        if hint is not None:
            extra = family.cut(top_k_indices(hint(x), family.k))
            if pool.add(extra):
                rows.append(extra.row)
        return rows

    return separator


def delayed_cut_loop(model: MilpModel, family: SubsetCutFamily, pool: CutPool,
                     time_limit: float | None = None, engine: str = "highs", repair=None,
                     hint=None) -> tuple[SolveResult, CutPool]:
    """Solve ``model`` with the pooled cuts plus lazily separated ones.

    ``model`` carries the objective and any bound restrictions but no subset
    rows; the pool is extended in place with every violated subset found.
    ``repair`` is handed to :func:`~cvarflp.milp.solve_mip` and ``hint`` to
    :func:`make_separator`.
    """
    result = solve_mip(pool.apply(model), time_limit=time_limit,
                       separator=make_separator(family, pool, hint=hint), engine=engine, repair=repair)
    return result, pool
