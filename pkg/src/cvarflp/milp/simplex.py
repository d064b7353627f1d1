"""Dense bounded-variable primal simplex.

Every row gets a slack so the working system is ``[A | I] z = b`` with finite
or infinite bounds on every column.  Phase 1 minimizes the sum of artificial
variables attached to rows whose slack starts out of bounds; phase 2 then
fixes the artificials at zero and optimizes the true objective.  The basis
inverse is kept explicitly and refactored periodically.

Dantzig pricing is used until ``BLAND_AFTER`` consecutive degenerate pivots
have been made; Bland's smallest-index rule then takes over until the next
nondegenerate step, which guarantees termination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_AFTER = 1000
REFACTOR_EVERY = 50

_BASIC, _LOWER, _UPPER, _FREE = 0, 1, 2, 3


@dataclass
class SimplexOutcome:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float
    iterations: int
    bland_pivots: int


class _Tableau:
    def __init__(self, a: np.ndarray, b: np.ndarray, lb: np.ndarray, ub: np.ndarray):
        self.a = a
        self.b = b
        self.lb = lb
        self.ub = ub
        self.m, self.n = a.shape
        self.iterations = 0
        self.bland_pivots = 0

    def setup(self, basis: np.ndarray, x: np.ndarray, state: np.ndarray) -> None:
        self.basis = basis
        self.x = x
        self.state = state
        self.refactor()

    def refactor(self) -> None:
        self.binv = np.linalg.inv(self.a[:, self.basis])
        nonbasic = self.state != _BASIC
        rhs = self.b - self.a[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.binv @ rhs
        self._since_refactor = 0

    def run(self, c: np.ndarray, max_iter: int) -> str:
        degenerate_run = 0
        while True:
            if self.iterations >= max_iter:
                raise RuntimeError("simplex iteration limit reached")
            bland = degenerate_run >= BLAND_AFTER
            y = c[self.basis] @ self.binv
            d = c - y @ self.a
            entering, direction = self._price(d, bland)
            if entering < 0:
                return "optimal"
            alpha = self.binv @ self.a[:, entering]
            step, leave_pos, leave_state = self._ratio(entering, direction, alpha, bland)
            if math.isinf(step):
                return "unbounded"
            self.iterations += 1
            if bland:
                self.bland_pivots += 1
            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
            self.x[entering] += direction * step
            self.x[self.basis] -= direction * step * alpha
            if leave_pos < 0:
                self.state[entering] = _UPPER if direction > 0 else _LOWER
                continue
            leaving = self.basis[leave_pos]
            self.x[leaving] = self.lb[leaving] if leave_state == _LOWER else self.ub[leaving]
            self.state[leaving] = leave_state
            self.state[entering] = _BASIC
            self.basis[leave_pos] = entering
            self._update_inverse(leave_pos, alpha)

    def _price(self, d: np.ndarray, bland: bool) -> tuple[int, int]:
        st = self.state
        movable = self.lb < self.ub
        can_up = movable & (((st == _LOWER) & (d < -OPT_TOL)) | ((st == _FREE) & (d < -OPT_TOL)))
        can_down = movable & (((st == _UPPER) & (d > OPT_TOL)) | ((st == _FREE) & (d > OPT_TOL)))
        cand = np.flatnonzero(can_up | can_down)
        if cand.size == 0:
            return -1, 0
        j = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
        return j, (1 if can_up[j] else -1)

    def _ratio(self, q: int, direction: int, alpha: np.ndarray, bland: bool):
        delta = -direction * alpha  # rate of change of x_B per unit step
        xb = self.x[self.basis]
        lbb = self.lb[self.basis]
        ubb = self.ub[self.basis]
        ratios = np.full(self.m, math.inf)
        dec = delta < -PIVOT_TOL
        inc = delta > PIVOT_TOL
        with np.errstate(divide="ignore", invalid="ignore"):
            r_dec = (xb - lbb) / -delta
            r_inc = (ubb - xb) / delta
        ratios[dec] = r_dec[dec]
        ratios[inc] = r_inc[inc]
        ratios = np.maximum(ratios, 0.0)
        flip = self.ub[q] - self.lb[q]
        best = float(ratios.min(initial=math.inf))
        if flip <= best:
            return flip, -1, 0
        if math.isinf(best):
            return math.inf, -1, 0
        ties = np.flatnonzero(ratios <= best + 1e-12)
        if bland:
            pos = int(ties[np.argmin(self.basis[ties])])
        else:
            pos = int(ties[np.argmax(np.abs(delta[ties]))])
        return float(ratios[pos]), pos, (_LOWER if delta[pos] < 0 else _UPPER)

    def _update_inverse(self, r: int, alpha: np.ndarray) -> None:
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()
            return
        pivot_row = self.binv[r] / alpha[r]
        self.binv -= np.outer(alpha, pivot_row)
        self.binv[r] = pivot_row


def simplex(c, a, senses, b, lb, ub, max_iter: int | None = None) -> SimplexOutcome:
    """Minimize ``c'x`` subject to ``a x (senses) b`` and ``lb <= x <= ub``.

    ``senses`` holds -1 (<=), 0 (=), +1 (>=) per row.  Returns the outcome of
    phase 2 (or phase 1 for infeasible problems).
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    b = np.asarray(b, dtype=float)
    senses = np.asarray(senses)
    if np.any(lb > ub + FEAS_TOL):
        return SimplexOutcome("infeasible", None, math.nan, 0, 0)

    s_lb = np.where(senses == -1, 0.0, np.where(senses == 1, -math.inf, 0.0))
    s_ub = np.where(senses == -1, math.inf, 0.0)

    x = np.zeros(n)
    state = np.full(n, _FREE, dtype=np.int8)
    has_lb = np.isfinite(lb)
    has_ub = np.isfinite(ub)
    x[has_lb] = lb[has_lb]
    state[has_lb] = _LOWER
    only_ub = ~has_lb & has_ub
    x[only_ub] = ub[only_ub]
    state[only_ub] = _UPPER

    resid = b - a @ x
    slack = np.clip(resid, s_lb, s_ub)
    need_art = np.abs(resid - slack) > FEAS_TOL
    arts = np.flatnonzero(need_art)
    k = arts.size
    sign = np.sign(resid[arts] - slack[arts])

    full = np.zeros((m, n + m + k))
    full[:, :n] = a
    full[:, n:n + m] = np.eye(m)
    full[arts, n + m + np.arange(k)] = sign
    f_lb = np.concatenate([lb, s_lb, np.zeros(k)])
    f_ub = np.concatenate([ub, s_ub, np.full(k, math.inf)])

    z = np.concatenate([x, slack, np.abs(resid[arts] - slack[arts])])
    z_state = np.concatenate([state, np.full(m + k, _BASIC, dtype=np.int8)])
    basis = np.arange(n, n + m)
    # rows with an artificial keep the artificial basic and park the slack at a bound
    for pos, row in enumerate(arts):
        col = n + row
        basis[row] = n + m + pos
        if slack[row] <= s_lb[row]:
            z_state[col] = _LOWER
        else:
            z_state[col] = _UPPER
        z[col] = slack[row]
    z_state[basis] = _BASIC

    limit = max_iter or 50 * (n + 2 * m + 10)
    tab = _Tableau(full, b, f_lb, f_ub)
    tab.setup(basis, z, z_state)

    if k:
        c1 = np.zeros(n + m + k)
        c1[n + m:] = 1.0
        tab.run(c1, limit)
        infeas = float(tab.x[n + m:].sum())
        if infeas > FEAS_TOL * max(1.0, float(np.abs(b).max(initial=0.0))):
            return SimplexOutcome("infeasible", None, math.nan, tab.iterations, tab.bland_pivots)
        # artificials stay at zero for the rest of the solve
        tab.ub[n + m:] = 0.0
        tab.x[n + m:] = np.where(tab.state[n + m:] == _BASIC, tab.x[n + m:], 0.0)
        nb_art = (tab.state[n + m:] != _BASIC)
        tab.state[n + m:][nb_art] = _LOWER
        tab.refactor()

    c2 = np.concatenate([c, np.zeros(m + k)])
    status = tab.run(c2, limit)
    tab.refactor()
    xs = tab.x[:n].copy()
    if status == "unbounded":
        return SimplexOutcome("unbounded", None, -math.inf, tab.iterations, tab.bland_pivots)
    return SimplexOutcome("optimal", xs, float(c @ xs), tab.iterations, tab.bland_pivots)
