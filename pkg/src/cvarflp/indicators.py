"""Frontier quality indicators for two minimized objectives.

Points are plain ``(cost, risk)`` pairs or :class:`~cvarflp.frontier.Frontier`
objects.  Sets are deduplicated and dominance-filtered before use.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

Pair = tuple[float, float]


class IndicatorError(ValueError):
    """Indicator undefined for the given sets."""


def _pairs(points) -> list[Pair]:
    if hasattr(points, "as_pairs"):
        return points.as_pairs()
    return [(float(a), float(b)) for a, b in points]


def nondominated(points) -> list[Pair]:
    """Sorted, duplicate-free non-dominated subset."""
    kept: list[Pair] = []
    for p in sorted(set(_pairs(points))):
        if kept and p[1] >= kept[-1][1]:
            continue
        kept.append(p)
    return kept


def reference_point(*sets) -> Pair:
    """Componentwise maximum over all sets plus one unit."""
    pts = [p for s in sets for p in _pairs(s)]
    if not pts:
        raise IndicatorError("cannot place a reference point for empty sets")
    return (max(p[0] for p in pts) + 1.0, max(p[1] for p in pts) + 1.0)


def hypervolume(points, ref: Sequence[float]) -> float:
    """Area dominated by ``points`` and bounded by ``ref``."""
    pts = _pairs(points)
    for p in pts:
        if not (p[0] < ref[0] and p[1] < ref[1]):
            raise IndicatorError(f"point {p} does not dominate the reference point {tuple(ref)}")
    area = 0.0
    ceiling = float(ref[1])
    for c, r in nondominated(pts):
        area += (ref[0] - c) * (ceiling - r)
        ceiling = r
    return area


def hypervolume_gap(a, r, ref: Sequence[float] | None = None) -> float:
    """``100 * (HV(R) - HV(A)) / HV(R)``; negative when A beats R."""
    ref = reference_point(a, r) if ref is None else ref
    hv_r = hypervolume(r, ref)
    if hv_r <= 0.0:
        raise IndicatorError("the reference set has zero hypervolume")
    return 100.0 * (hv_r - hypervolume(a, ref)) / hv_r


def eps_indicator(a, r, shift: float = 1.0) -> float:
    """Multiplicative epsilon indicator of A relative to R.

    Both coordinates are shifted by ``shift`` first, since cost 0 and risk 0
    are attainable.
    """
    pa, pr = nondominated(a), nondominated(r)
    if not pa or not pr:
        raise IndicatorError("the epsilon indicator needs two nonempty sets")
    sa = [(x + shift, y + shift) for x, y in pa]
    sr = [(x + shift, y + shift) for x, y in pr]
    if any(v <= 0 for p in sa + sr for v in p):
        raise IndicatorError("coordinates must be positive after the shift")
    return max(min(max(ax / rx, ay / ry) for ax, ay in sa) for rx, ry in sr)


@dataclass(frozen=True)
class IndicatorReport:
    hypervolume_A: float
    hypervolume_R: float
    gH_percent: float
    I_eps: float
    reference_point: Pair

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def report(a, r, ref: Sequence[float] | None = None) -> IndicatorReport:
    a_pts, r_pts = nondominated(a), nondominated(r)
    if not r_pts:
        raise IndicatorError("the reference set is empty")
    ref = tuple(ref) if ref is not None else reference_point(a_pts, r_pts)
    hv_a, hv_r = hypervolume(a_pts, ref), hypervolume(r_pts, ref)
    if hv_r <= 0.0:
        raise IndicatorError("the reference set has zero hypervolume")
    return IndicatorReport(hv_a, hv_r, 100.0 * (hv_r - hv_a) / hv_r, eps_indicator(a_pts, r_pts),
                           (float(ref[0]), float(ref[1])))


def union(*sets) -> list[Pair]:
    return nondominated([p for s in sets for p in _pairs(s)])


CSV_FIELDS = ("label", "hypervolume_A", "hypervolume_R", "gH_percent", "I_eps", "ref_cost", "ref_risk")


def reports_csv(rows: Iterable[tuple[str, IndicatorReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for label, rep in rows:
        w.writerow([label, repr(rep.hypervolume_A), repr(rep.hypervolume_R), repr(rep.gH_percent),
                    repr(rep.I_eps), repr(rep.reference_point[0]), repr(rep.reference_point[1])])
    return buf.getvalue()
