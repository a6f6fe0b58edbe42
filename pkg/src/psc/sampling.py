"""Range partitioning and per-part best-point selection.

The comparison range is cut into ``r`` equal parts.  Within each part, the
records of one method are pooled across all of its parameter sets and the
single best one (highest success rate, or lowest distance / query count) is
kept.  Empty parts leave gaps.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidRange, InvalidResolution, NoApplicableRecords, SpecMismatch
from .model import AttackRecord, ComparisonSpec, Direction, RunContext

Candidate = tuple[float, float, str]


@dataclass(frozen=True)
class Part:
    index: int
    lo: float
    hi: float
    closed_hi: bool

    def contains(self, x: float) -> bool:
        return self.lo <= x < self.hi or (self.closed_hi and x == self.hi)


@dataclass(frozen=True)
class SampledPoint:
    part_index: int
    x: float
    y: float
    source_param_set: str


@dataclass(frozen=True)
class SampledSeries:
    method: str
    context: RunContext
    domain: tuple[float, float]
    points: tuple[SampledPoint, ...]
    dropped: int = 0

    @property
    def xs(self) -> list[float]:
        return [p.x for p in self.points]

    @property
    def ys(self) -> list[float]:
        return [p.y for p in self.points]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "domain": list(self.domain),
            "dropped": self.dropped,
            "points": [
                {"part": p.part_index, "x": p.x, "y": p.y, "param_set": p.source_param_set}
                for p in self.points
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, context: RunContext) -> "SampledSeries":
        return cls(
            method=data["method"],
            context=context,
            domain=(float(data["domain"][0]), float(data["domain"][1])),
            points=tuple(SampledPoint(int(p["part"]), float(p["x"]), float(p["y"]), p["param_set"])
                         for p in data["points"]),
            dropped=int(data.get("dropped", 0)),
        )


def _boundaries(lo: float, hi: float, r: int) -> list[float]:
    width = (hi - lo) / r
    return [lo + i * width for i in range(r)] + [hi]


def partition(range_: Sequence[float], r: int) -> list[Part]:
    """Split ``[lo, hi]`` into ``r`` equal half-open parts, the last one closed."""
    lo, hi = float(range_[0]), float(range_[1])
    if not lo < hi:
        raise InvalidRange(f"range must satisfy lo < hi, got [{lo}, {hi}]")
    if isinstance(r, bool) or int(r) != r or r < 1:
        raise InvalidResolution(f"resolution must be an integer >= 1, got {r}")
    edges = _boundaries(lo, hi, int(r))
    return [Part(i, edges[i], edges[i + 1], i == r - 1) for i in range(int(r))]


def part_index(x: float, edges: Sequence[float]) -> int | None:
    """Index of the part holding ``x`` given the ``r + 1`` part edges, or None."""
    if x < edges[0] or x > edges[-1]:
        return None
    if x == edges[-1]:
        return len(edges) - 2
    return bisect.bisect_right(edges, x) - 1


def _rank_key(candidate: Candidate, direction: Direction) -> tuple:
    x, y, param_set = candidate
    score = -y if direction is Direction.MAXIMIZE else y
    return (score, x, param_set)


def best_point(candidates: Iterable[Candidate], direction: Direction) -> Candidate | None:
    """Best candidate of one part.

    Ties on y go to the smallest x, then the lexicographically smallest
    parameter set.
    """
    best = None
    best_key = None
    for cand in candidates:
        key = _rank_key(cand, direction)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    return best


def applicable(records: Iterable[AttackRecord], spec: ComparisonSpec) -> list[AttackRecord]:
    """Records carrying both axis metrics and, if set, inside the fixed-metric band."""
    kept = []
    for rec in records:
        if spec.x_axis not in rec.measurements or spec.y_axis not in rec.measurements:
            continue
        if spec.fixed is not None:
            value = rec.get(spec.fixed.metric)
            if value is None or not spec.fixed.admits(value):
                continue
        kept.append(rec)
    return kept


def sample_series(records: Iterable[AttackRecord], spec: ComparisonSpec, method: str) -> SampledSeries:
    own = [rec for rec in records if rec.method == method]
    contexts = {rec.context for rec in own}
    if len(contexts) > 1:
        raise SpecMismatch(f"records of {method!r} span {len(contexts)} run contexts", method=method)
    usable = applicable(own, spec)
    if not usable:
        raise NoApplicableRecords(
            f"no records of {method!r} carry {spec.x_axis.value} and {spec.y_axis.value}"
            + ("" if spec.fixed is None else f" within {spec.fixed}"),
            method=method)

    edges = _boundaries(spec.range[0], spec.range[1], spec.resolution)
    buckets: dict[int, list[Candidate]] = {}
    dropped = 0
    for rec in usable:
        x = float(rec.measurements[spec.x_axis])
        idx = part_index(x, edges)
        if idx is None:
            dropped += 1
            continue
        buckets.setdefault(idx, []).append((x, float(rec.measurements[spec.y_axis]), rec.param_set))
    if not buckets:
        raise NoApplicableRecords(
            f"every part of [{spec.range[0]}, {spec.range[1]}] is empty for {method!r}",
            method=method)

    points = []
    for idx in sorted(buckets):
        x, y, param_set = best_point(buckets[idx], spec.direction)
        points.append(SampledPoint(idx, x, y, param_set))
    return SampledSeries(method, usable[0].context, spec.range, tuple(points), dropped)
