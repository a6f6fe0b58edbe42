"""AUC, ranking, crossing detection and discrepancy diagnostics."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InsufficientData, NoApplicableRecords, OutOfDomain, PscError, SpecMismatch
from .fitting import FittedCurve, Polyline, Polynomial, curve_from_dict, fit
from .model import ASR_BOUNDS, AttackRecord, ComparisonSpec, Direction, MetricKind, RunContext
from .sampling import SampledSeries, sample_series

SCAN_POINTS = 1024
DEFAULT_GRID_SIZE = 256
ROOT_XTOL = 1e-6


# -- area ------------------------------------------------------------------


def _polynomial_area(curve: Polynomial, a: float, b: float) -> float:
    lo, hi = curve.domain
    ta = (2.0 * a - (lo + hi)) / (hi - lo)
    tb = (2.0 * b - (lo + hi)) / (hi - lo)
    total = math.fsum(c * (tb ** (i + 1) - ta ** (i + 1)) / (i + 1) for i, c in enumerate(curve.coeffs))
    return total * (hi - lo) / 2.0


def _polyline_area(curve: Polyline, a: float, b: float) -> float:
    lo, hi = curve.span
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if a < lo - slack or b > hi + slack:
        raise OutOfDomain(f"polyline covers [{lo}, {hi}], cannot integrate over [{a}, {b}]")
    knots = [a] + [x for x, _ in curve.points if a < x < b] + [b]
    values = [curve.extended(x) for x in knots]
    return math.fsum(0.5 * (x1 - x0) * (y0 + y1)
                     for x0, x1, y0, y1 in zip(knots, knots[1:], values, values[1:]))


def auc(curve: FittedCurve, range_: Sequence[float]) -> float:
    """Area under ``curve`` over ``range_``.

    Polynomials integrate exactly term by term in the normalised variable;
    polylines integrate exactly as a sum of trapezoids.
    """
    a, b = float(range_[0]), float(range_[1])
    if a == b:
        return 0.0
    if a > b:
        return -auc(curve, (b, a))
    if isinstance(curve, Polynomial):
        return _polynomial_area(curve, a, b)
    return _polyline_area(curve, a, b)


# -- ranking ---------------------------------------------------------------


@dataclass(frozen=True)
class Ranked:
    method: str
    auc: float
    rank: int


def rank(aucs: Iterable[tuple[str, float]], direction: Direction) -> list[Ranked]:
    items = list(aucs)
    if not items:
        raise ValueError("nothing to rank")
    if not all(math.isfinite(v) for _, v in items):
        raise ValueError("AUC values must be finite")
    if direction is Direction.MAXIMIZE:
        ordered = sorted(items, key=lambda it: (-it[1], it[0]))
    else:
        ordered = sorted(items, key=lambda it: (it[1], it[0]))
    return [Ranked(m, v, i + 1) for i, (m, v) in enumerate(ordered)]


# -- root scanning ---------------------------------------------------------


def _vectorize(curve: FittedCurve) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(curve, Polynomial):
        return lambda xs: np.asarray(curve(np.asarray(xs, dtype=float)), dtype=float)
    return lambda xs: np.array([curve.extended(float(x)) for x in np.atleast_1d(xs)])


def _signs(values: np.ndarray, ztol: np.ndarray | float) -> np.ndarray:
    s = np.sign(values)
    s[np.abs(values) <= ztol] = 0
    return s.astype(int)


def _bisect(g: Callable[[float], float], a: float, b: float, sign_a: int, xtol: float, ztol: float) -> float:
    while b - a > xtol:
        m = 0.5 * (a + b)
        gm = g(m)
        if abs(gm) <= ztol:
            return m
        if (gm > 0) == (sign_a > 0):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def _sign_changes(g, scale, lo: float, hi: float, n: int = SCAN_POINTS,
                  rel_xtol: float = ROOT_XTOL) -> list[float]:
    """Locate every sign change of ``g`` on ``[lo, hi]``.

    A uniform ``n``-point scan brackets the changes, bisection refines them to
    ``rel_xtol * (hi - lo)``.  Values within ``1e-12 * scale`` of zero count
    as zero, so curves that agree to rounding error do not cross.
    """
    xs = np.linspace(lo, hi, n)
    vals = g(xs)
    ztols = 1e-12 * np.maximum(1.0, scale(xs))
    signs = _signs(vals, ztols)
    xtol = rel_xtol * (hi - lo)
    roots: list[float] = []
    prev = None
    for i, s in enumerate(signs):
        if s == 0:
            continue
        if prev is not None and s != signs[prev]:
            ztol = float(max(ztols[prev], ztols[i]))
            root = _bisect(lambda x: float(g(np.array([x]))[0]), float(xs[prev]), float(xs[i]),
                           int(signs[prev]), xtol, ztol)
            if not roots or root > roots[-1]:
                roots.append(root)
        prev = i
    return roots


def crossings(curve_a: FittedCurve, curve_b: FittedCurve, range_: Sequence[float]) -> list[float]:
    """Abscissae in ``range_`` where ``curve_a - curve_b`` changes sign."""
    fa, fb = _vectorize(curve_a), _vectorize(curve_b)
    lo, hi = float(range_[0]), float(range_[1])
    return _sign_changes(lambda xs: fa(xs) - fb(xs),
                         lambda xs: np.maximum(np.abs(fa(xs)), np.abs(fb(xs))), lo, hi)


@dataclass(frozen=True)
class BoundViolation:
    start: float
    end: float
    bound: float
    side: str  # "above" or "below"

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "bound": self.bound, "side": self.side}


def bound_check(curve: FittedCurve, range_: Sequence[float],
                bounds: Sequence[float] = ASR_BOUNDS) -> list[BoundViolation]:
    """Maximal sub-intervals of ``range_`` where the curve leaves ``bounds``."""
    lo_b, hi_b = float(bounds[0]), float(bounds[1])
    if not lo_b < hi_b:
        raise ValueError(f"bounds must satisfy lo < hi, got {bounds}")
    f = _vectorize(curve)
    a, b = float(range_[0]), float(range_[1])
    scale = lambda xs: np.abs(f(xs))  # noqa: E731
    out: list[BoundViolation] = []
    for bound, side in ((lo_b, "below"), (hi_b, "above")):
        if not math.isfinite(bound):
            continue
        g = lambda xs, bd=bound: f(xs) - bd  # noqa: E731
        knots = [a] + _sign_changes(g, scale, a, b) + [b]
        for x0, x1 in zip(knots, knots[1:]):
            if x1 <= x0:
                continue
            mid = float(g(np.array([0.5 * (x0 + x1)]))[0])
            ztol = 1e-12 * max(1.0, abs(bound))
            violated = mid < -ztol if side == "below" else mid > ztol
            if not violated:
                continue
            if out and out[-1].side == side and out[-1].end == x0:
                out[-1] = BoundViolation(out[-1].start, x1, bound, side)
            else:
                out.append(BoundViolation(x0, x1, bound, side))
    out.sort(key=lambda v: (v.start, v.side))
    return out


# -- point-wise discrepancy ------------------------------------------------


@dataclass(frozen=True)
class Flip:
    x1: float
    x2: float
    winner_at_x1: str
    winner_at_x2: str

    def to_dict(self) -> dict:
        return {"x1": self.x1, "x2": self.x2,
                "winner_at_x1": self.winner_at_x1, "winner_at_x2": self.winner_at_x2}


def _tied(column: np.ndarray, members: Sequence[int]) -> list[int]:
    best = max(float(column[i]) for i in members)
    ztol = 1e-12 * max(1.0, abs(best))
    return [i for i in members if column[i] >= best - ztol]


def pointwise_winners(curves: Sequence[tuple[str, FittedCurve]], xs: np.ndarray,
                      direction: Direction) -> list[str]:
    """Best method at each abscissa.

    A tie at the first point goes to whichever tied method pulls ahead first
    (then to the smaller name).  Afterwards the current winner keeps the lead
    until another method is strictly better, so touching curves do not flip.
    """
    named = sorted(curves, key=lambda mc: mc[0])
    table = np.vstack([_vectorize(c)(xs) for _, c in named])
    scores = table if direction is Direction.MAXIMIZE else -table
    n = scores.shape[1]

    leaders = _tied(scores[:, 0], range(len(named)))
    for j in range(1, n):
        if len(leaders) == 1:
            break
        narrowed = _tied(scores[:, j], leaders)
        if len(narrowed) < len(leaders):
            leaders = narrowed
            break
    current = leaders[0]

    winners = []
    for j in range(n):
        column = scores[:, j]
        if current not in _tied(column, range(len(named))):
            current = _tied(column, range(len(named)))[0]
        winners.append(named[current][0])
    return winners


def pointwise_discrepancy(curves: Sequence[tuple[str, FittedCurve]], range_: Sequence[float],
                          direction: Direction, grid_size: int = DEFAULT_GRID_SIZE) -> list[Flip]:
    """Adjacent grid pairs where the best method at a single operating point changes."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if not curves:
        return []
    xs = np.linspace(float(range_[0]), float(range_[1]), int(grid_size))
    winners = pointwise_winners(curves, xs, direction)
    return [Flip(float(xs[i]), float(xs[i + 1]), winners[i], winners[i + 1])
            for i in range(len(xs) - 1) if winners[i] != winners[i + 1]]


# -- report ----------------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    method_a: str
    method_b: str
    x: float

    def to_dict(self) -> dict:
        return {"method_a": self.method_a, "method_b": self.method_b, "x": self.x}


@dataclass(frozen=True)
class MethodEntry:
    method: str
    auc: float
    rank: int
    bound_violations: tuple[BoundViolation, ...]
    clamped_auc: float | None
    series: SampledSeries
    curve: FittedCurve

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rank": self.rank,
            "auc": self.auc,
            "clamped_auc": self.clamped_auc,
            "bound_violations": [v.to_dict() for v in self.bound_violations],
            "curve": self.curve.to_dict(),
            "sampled": self.series.to_dict(),
        }


@dataclass(frozen=True)
class MethodFailure:
    method: str
    error: str
    message: str

    def to_dict(self) -> dict:
        return {"method": self.method, "error": self.error, "message": self.message}


@dataclass(frozen=True)
class ComparisonReport:
    context: RunContext
    spec: ComparisonSpec
    entries: tuple[MethodEntry, ...]
    crossings: tuple[Crossing, ...] = ()
    pointwise_flips: tuple[Flip, ...] = ()
    failures: tuple[MethodFailure, ...] = ()
    advisories: tuple[str, ...] = field(default=())

    @property
    def direction(self) -> Direction:
        return self.spec.direction

    def entry(self, method: str) -> MethodEntry:
        for e in self.entries:
            if e.method == method:
                return e
        raise KeyError(method)

    def to_dict(self) -> dict:
        return {
            "context": self.context.to_dict(),
            "spec": self.spec.to_dict(),
            "direction": self.direction.value,
            "entries": [e.to_dict() for e in self.entries],
            "crossings": [c.to_dict() for c in self.crossings],
            "pointwise_flips": [f.to_dict() for f in self.pointwise_flips],
            "failures": [f.to_dict() for f in self.failures],
            "advisories": list(self.advisories),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ComparisonReport":
        context = RunContext.from_dict(data["context"])
        entries = tuple(
            MethodEntry(
                method=e["method"],
                auc=float(e["auc"]),
                rank=int(e["rank"]),
                bound_violations=tuple(BoundViolation(float(v["start"]), float(v["end"]),
                                                      float(v["bound"]), v["side"])
                                       for v in e["bound_violations"]),
                clamped_auc=None if e["clamped_auc"] is None else float(e["clamped_auc"]),
                series=SampledSeries.from_dict(e["sampled"], context),
                curve=curve_from_dict(e["curve"]),
            )
            for e in data["entries"])
        return cls(
            context=context,
            spec=ComparisonSpec.from_dict(data["spec"]),
            entries=entries,
            crossings=tuple(Crossing(c["method_a"], c["method_b"], float(c["x"])) for c in data["crossings"]),
            pointwise_flips=tuple(Flip(float(f["x1"]), float(f["x2"]), f["winner_at_x1"], f["winner_at_x2"])
                                  for f in data["pointwise_flips"]),
            failures=tuple(MethodFailure(f["method"], f["error"], f["message"]) for f in data["failures"]),
            advisories=tuple(data.get("advisories", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "ComparisonReport":
        return cls.from_dict(json.loads(text))


def bounds_for(y_axis: MetricKind) -> tuple[float, float]:
    if y_axis is MetricKind.ASR:
        return ASR_BOUNDS
    return (0.0, math.inf)


def clamped_auc(curve: FittedCurve, range_: Sequence[float], violations: Sequence[BoundViolation]) -> float:
    """AUC with the curve replaced by the bound it crosses on each violation interval."""
    total = auc(curve, range_)
    for v in violations:
        total -= auc(curve, (v.start, v.end)) - v.bound * (v.end - v.start)
    return total


def compare(records: Iterable[AttackRecord], spec: ComparisonSpec,
            methods: Sequence[str] | None = None, grid_size: int = DEFAULT_GRID_SIZE,
            advisories: Sequence[str] = ()) -> ComparisonReport:
    """Sample, fit, integrate and rank every method, then run the diagnostics.

    A method that cannot be fitted is listed under ``failures`` instead of
    aborting the report; the report only fails when no method survives.
    """
    records = list(records)
    if methods is None:
        methods = sorted({r.method for r in records})
    else:
        methods = sorted(set(methods))
    if not methods:
        raise NoApplicableRecords("no methods to compare")
    contexts = {r.context for r in records if r.method in methods}
    if len(contexts) > 1:
        listing = ", ".join(sorted(str(c) for c in contexts))
        raise SpecMismatch(f"records span several run contexts: {listing}")

    fitted: dict[str, tuple[SampledSeries, FittedCurve, float]] = {}
    failures: list[MethodFailure] = []
    first_error: PscError | None = None
    for method in methods:
        try:
            series = sample_series(records, spec, method)
            curve = fit(series, spec.order)
            fitted[method] = (series, curve, auc(curve, spec.range))
        except InsufficientData as exc:
            failures.append(MethodFailure(method, exc.kind, exc.message))
            first_error = first_error or exc
    if not fitted:
        raise first_error

    ranked = rank(((m, v[2]) for m, v in fitted.items()), spec.direction)
    bounds = bounds_for(spec.y_axis)
    entries = []
    for r in ranked:
        series, curve, area = fitted[r.method]
        violations = tuple(bound_check(curve, spec.range, bounds))
        entries.append(MethodEntry(
            method=r.method, auc=area, rank=r.rank, bound_violations=violations,
            clamped_auc=clamped_auc(curve, spec.range, violations) if violations else None,
            series=series, curve=curve))

    names = sorted(fitted)
    found = [Crossing(a, b, x)
             for a, b in itertools.combinations(names, 2)
             for x in crossings(fitted[a][1], fitted[b][1], spec.range)]
    found.sort(key=lambda c: (c.x, c.method_a, c.method_b))
    flips = pointwise_discrepancy([(m, fitted[m][1]) for m in names], spec.range,
                                  spec.direction, grid_size)

    return ComparisonReport(
        context=next(iter(contexts)),
        spec=spec,
        entries=tuple(entries),
        crossings=tuple(found),
        pointwise_flips=tuple(flips),
        failures=tuple(failures),
        advisories=tuple(spec.advisories()) + tuple(advisories),
    )
