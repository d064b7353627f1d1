"""Linear model container shared by the LP/MIP engines.

Rows are stored in CSR blocks so that models with tens of thousands of
assignment variables can be assembled with vectorized numpy code.  A model is
append-only: variables and rows are never removed, only bounds and the
objective may be edited between solves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

INF = math.inf

VarRef = Union[int, str]


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


# internal sense codes
LE, EQ, GE = -1, 0, 1
_SENSES = {"<=": LE, "≤": LE, "==": EQ, "=": EQ, ">=": GE, "≥": GE}
_SENSE_TEXT = {LE: "<=", EQ: "=", GE: ">="}


def sense_code(sense: str | int) -> int:
    if isinstance(sense, (int, np.integer)) and int(sense) in (LE, EQ, GE):
        return int(sense)
    try:
        return _SENSES[sense]
    except KeyError:
        raise ValueError(f"unknown constraint sense {sense!r}") from None


class ModelError(ValueError):
    """Raised for structurally invalid model edits."""


@dataclass(frozen=True)
class LinearRow:
    """A single linear constraint ``sum(values * x[indices]) <sense> rhs``."""

    indices: np.ndarray
    values: np.ndarray
    sense: int
    rhs: float

    def __post_init__(self):
        for name in ("indices", "values"):
            arr = np.array(getattr(self, name), dtype=np.int64 if name == "indices" else float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_mapping(cls, coeffs: Mapping[int, float], sense: str | int, rhs: float) -> "LinearRow":
        idx = np.fromiter(coeffs.keys(), dtype=np.int64, count=len(coeffs))
        val = np.fromiter(coeffs.values(), dtype=float, count=len(coeffs))
        return cls(idx, val, sense_code(sense), float(rhs))

    def activity(self, x: np.ndarray) -> float:
        return float(np.dot(self.values, x[self.indices]))

    def violation(self, x: np.ndarray) -> float:
        """Amount by which ``x`` violates the row (0 when satisfied)."""
        lhs = self.activity(x)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass(frozen=True)
class _RowBlock:
    matrix: sp.csr_matrix
    senses: np.ndarray
    rhs: np.ndarray


class MilpModel:
    """Mixed-integer linear model ``min/max c'x`` over rows and bounds."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._kind: list[VarKind] = []
        self._blocks: list[_RowBlock] = []
        self._n_rows = 0
        self._objective: dict[int, float] = {}
        self._maximize = False
        self._cache: tuple | None = None

    # ------------------------------------------------------------------ vars
    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return self._n_rows

    @property
    def names(self) -> Sequence[str]:
        return self._names

    def index(self, var: VarRef) -> int:
        if isinstance(var, (int, np.integer)):
            if not 0 <= int(var) < self.n_vars:
                raise ModelError(f"variable index {var} out of range")
            return int(var)
        try:
            return self._index[var]
        except KeyError:
            raise ModelError(f"unknown variable {var!r}") from None

    def add_var(self, name: str, lb: float = 0.0, ub: float | None = None,
                kind: VarKind | str = VarKind.CONTINUOUS) -> int:
        return int(self.add_vars([name], lb, ub, kind)[0])

    def add_vars(self, names: Sequence[str], lb=0.0, ub=None,
                 kind: VarKind | str = VarKind.CONTINUOUS) -> np.ndarray:
        """Append variables; ``ub`` defaults to 1 for binaries and +inf otherwise."""
        kind = VarKind(kind)
        if ub is None:
            ub = 1.0 if kind is VarKind.BINARY else INF
        n = len(names)
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        if kind is VarKind.BINARY and (np.any(lbs < 0) or np.any(ubs > 1)):
            raise ModelError("binary variables need bounds within [0, 1]")
        if np.any(lbs > ubs):
            raise ModelError("lower bound exceeds upper bound")
        start = self.n_vars
        for offset, name in enumerate(names):
            if name in self._index:
                raise ModelError(f"duplicate variable name {name!r}")
            self._index[name] = start + offset
        self._names.extend(names)
        self._lb.extend(lbs.tolist())
        self._ub.extend(ubs.tolist())
        self._kind.extend([kind] * n)
        self._cache = None
        return np.arange(start, start + n, dtype=np.int64)

    def kind(self, var: VarRef) -> VarKind:
        return self._kind[self.index(var)]

    def bounds(self, var: VarRef) -> tuple[float, float]:
        i = self.index(var)
        return self._lb[i], self._ub[i]

    def set_bounds(self, var: VarRef, lb: float | None = None, ub: float | None = None) -> None:
        i = self.index(var)
        new_lb = self._lb[i] if lb is None else float(lb)
        new_ub = self._ub[i] if ub is None else float(ub)
        if self._kind[i] is VarKind.BINARY and (new_lb < 0 or new_ub > 1):
            raise ModelError(f"binary variable {self._names[i]!r} needs bounds within [0, 1]")
        self._lb[i] = new_lb
        self._ub[i] = new_ub

    def lower_bounds(self) -> np.ndarray:
        return np.asarray(self._lb, dtype=float)

    def upper_bounds(self) -> np.ndarray:
        return np.asarray(self._ub, dtype=float)

    def integrality(self) -> np.ndarray:
        return np.array([k is not VarKind.CONTINUOUS for k in self._kind], dtype=bool)

    # ------------------------------------------------------------------ rows
    def add_constraint(self, coeffs: Mapping[VarRef, float], sense: str | int, rhs: float) -> None:
        merged: dict[int, float] = {}
        for var, value in coeffs.items():
            i = self.index(var)
            merged[i] = merged.get(i, 0.0) + float(value)
        self.add_row(LinearRow.from_mapping(merged, sense, rhs))

    def add_row(self, row: LinearRow) -> None:
        indptr = np.array([0, len(row.indices)], dtype=np.int64)
        self.add_rows(indptr, row.indices, row.values, [row.sense], [row.rhs])

    def add_row_list(self, rows: Sequence[LinearRow]) -> None:
        """Append several rows as one block."""
        if not rows:
            return
        indptr = np.cumsum([0] + [len(r.indices) for r in rows])
        self.add_rows(indptr, np.concatenate([r.indices for r in rows]),
                      np.concatenate([r.values for r in rows]), [r.sense for r in rows], [r.rhs for r in rows])

    def add_rows(self, indptr, indices, data, senses, rhs) -> None:
        """Append a batch of rows given in CSR form."""
        indices = np.array(indices, dtype=np.int64)  # scipy sorts these in place
        if indices.size and (indices.min() < 0 or indices.max() >= self.n_vars):
            raise ModelError("constraint references a nonexistent variable")
        codes = np.array([sense_code(s) for s in senses], dtype=np.int8)
        rhs = np.asarray(rhs, dtype=float)
        n = len(indptr) - 1
        if codes.shape != (n,) or rhs.shape != (n,):
            raise ModelError("senses/rhs length does not match the row count")
        mat = sp.csr_matrix((np.array(data, dtype=float), indices, np.array(indptr, dtype=np.int64)),
                            shape=(n, self.n_vars))
        mat.sum_duplicates()
        self._blocks.append(_RowBlock(mat, codes, rhs))
        self._n_rows += n
        self._cache = None

    def add_rows_from_coo(self, rows, cols, vals, senses, rhs) -> None:
        """Append rows given as COO triplets; ``rows`` index the new batch."""
        n = len(rhs)
        mat = sp.csr_matrix((np.asarray(vals, dtype=float),
                             (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
                            shape=(n, self.n_vars))
        self.add_rows(mat.indptr, mat.indices, mat.data, senses, rhs)

    def rows(self) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
        """Stacked constraint matrix, sense codes and right-hand sides."""
        key = (len(self._blocks), self.n_vars)
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        if not self._blocks:
            out = (sp.csr_matrix((0, self.n_vars)), np.zeros(0, dtype=np.int8), np.zeros(0))
        else:
            mats = []
            for b in self._blocks:
                m = b.matrix
                if m.shape[1] != self.n_vars:
                    m = sp.csr_matrix((m.data, m.indices, m.indptr), shape=(m.shape[0], self.n_vars))
                mats.append(m)
            out = (sp.vstack(mats, format="csr"),
                   np.concatenate([b.senses for b in self._blocks]),
                   np.concatenate([b.rhs for b in self._blocks]))
        self._cache = (key, out)
        return out

    # ------------------------------------------------------------- objective
    @property
    def maximize(self) -> bool:
        return self._maximize

    def set_objective(self, coeffs: Mapping[VarRef, float], sense: str = "min") -> None:
        if sense not in ("min", "max"):
            raise ModelError(f"objective sense must be 'min' or 'max', got {sense!r}")
        self._objective = {}
        for var, value in coeffs.items():
            i = self.index(var)
            self._objective[i] = self._objective.get(i, 0.0) + float(value)
        self._maximize = sense == "max"

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self._objective.items():
            c[i] = v
        return c

    def objective_value(self, x: np.ndarray) -> float:
        return float(sum(v * x[i] for i, v in self._objective.items()))

    # ----------------------------------------------------------------- misc
    def copy(self, name: str | None = None) -> "MilpModel":
        other = MilpModel(self.name if name is None else name)
        other._names = list(self._names)
        other._index = dict(self._index)
        other._lb = list(self._lb)
        other._ub = list(self._ub)
        other._kind = list(self._kind)
        other._blocks = list(self._blocks)  # blocks are never mutated
        other._n_rows = self._n_rows
        other._objective = dict(self._objective)
        other._maximize = self._maximize
        other._cache = self._cache
        return other

    def relaxed(self) -> "MilpModel":
        """Copy with every integrality mark dropped."""
        other = self.copy()
        other._kind = [VarKind.CONTINUOUS] * other.n_vars
        return other

    def max_violation(self, x: np.ndarray) -> float:
        """Largest bound or row violation of ``x``."""
        x = np.asarray(x, dtype=float)
        worst = float(max(np.max(self.lower_bounds() - x, initial=0.0),
                          np.max(x - self.upper_bounds(), initial=0.0)))
        a, senses, rhs = self.rows()
        if a.shape[0]:
            act = a @ x
            viol = np.where(senses == LE, act - rhs,
                            np.where(senses == GE, rhs - act, np.abs(act - rhs)))
            worst = max(worst, float(viol.max(initial=0.0)))
        return worst

    def integer_violation(self, x: np.ndarray) -> float:
        mask = self.integrality()
        if not mask.any():
            return 0.0
        v = np.asarray(x)[mask]
        return float(np.max(np.abs(v - np.round(v))))

    def to_lp_text(self) -> str:
        """Debug dump in CPLEX LP text format (write-only)."""

        def term_list(pairs: Iterable[tuple[int, float]]) -> str:
            parts = []
            for i, v in pairs:
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.12g} {self._names[i]}")
            text = " ".join(parts) or "0 " + (self._names[0] if self._names else "")
            return text[2:] if text.startswith("+ ") else text

        lines = ["\\ " + self.name, "Maximize" if self._maximize else "Minimize",
                 " obj: " + term_list(sorted(self._objective.items())), "Subject To"]
        a, senses, rhs = self.rows()
        for r in range(a.shape[0]):
            lo, hi = a.indptr[r], a.indptr[r + 1]
            pairs = zip(a.indices[lo:hi].tolist(), a.data[lo:hi].tolist())
            lines.append(f" c{r}: {term_list(pairs)} {_SENSE_TEXT[int(senses[r])]} {rhs[r]:.12g}")
        lines.append("Bounds")
        for i, name in enumerate(self._names):
            lo, hi = self._lb[i], self._ub[i]
            lo_s = "-inf" if lo == -INF else f"{lo:.12g}"
            hi_s = "+inf" if hi == INF else f"{hi:.12g}"
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
        ints = [n for n, k in zip(self._names, self._kind) if k is VarKind.INTEGER]
        bins = [n for n, k in zip(self._names, self._kind) if k is VarKind.BINARY]
        if ints:
            lines += ["General", " " + " ".join(ints)]
        if bins:
            lines += ["Binary", " " + " ".join(bins)]
        lines.append("End")
        return "\n".join(lines) + "\n"


def fix_variables(model: MilpModel, fixings: Mapping[VarRef, float]) -> MilpModel:
    """Return a copy with ``lb = ub = value`` for every fixed variable."""
    out = model.copy()
    for var, value in fixings.items():
        i = model.index(var)
        lb, ub = model.bounds(i)
        value = float(value)
        if value < lb - 1e-9 or value > ub + 1e-9:
            raise ModelError(f"fixing {model.names[i]}={value} is outside [{lb}, {ub}]")
        if model.kind(i) is not VarKind.CONTINUOUS and abs(value - round(value)) > 1e-9:
            raise ModelError(f"fixing integer variable {model.names[i]} to fractional {value}")
        out.set_bounds(i, value, value)
    return out


def add_local_branching(model: MilpModel, center: Mapping[VarRef, float], radius: int) -> MilpModel:
    """Append the Hamming ball ``sum_{c_j=0} y_j + sum_{c_j=1} (1 - y_j) <= radius``."""
    if radius < 0:
        raise ModelError("local branching radius must be nonnegative")
    coeffs: dict[int, float] = {}
    ones = 0
    for var, value in center.items():
        i = model.index(var)
        if value not in (0, 1) and not (abs(value) < 1e-9 or abs(value - 1) < 1e-9):
            raise ModelError(f"local branching center value {value} for {model.names[i]} is not binary")
        if round(value) == 1:
            coeffs[i] = -1.0
            ones += 1
        else:
            coeffs[i] = 1.0
    out = model.copy()
    out.add_row(LinearRow.from_mapping(coeffs, LE, radius - ones))
    return out
