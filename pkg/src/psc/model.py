"""Domain types shared by the sampling, fitting and analysis stages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any, Mapping

from .errors import (
    EmptyIdentifier,
    InvalidOrder,
    InvalidRange,
    InvalidResolution,
    InvalidSpec,
    NegativeValue,
    NonIntegerQueries,
    OutOfRange,
    ValidationError,
)

DEFAULT_ORDER = 5
ASR_BOUNDS = (0.0, 100.0)


class MetricKind(str, Enum):
    """A measured quantity. Distances are tagged by norm; ``LINF`` is its own tag."""

    L0 = "l0"
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"
    ASR = "asr"
    QUERIES = "queries"

    @property
    def is_distance(self) -> bool:
        return self in _DISTANCES

    @classmethod
    def parse(cls, name: str) -> "MetricKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise InvalidSpec(f"unknown metric {name!r} (expected one of {valid})") from None

    def __str__(self) -> str:
        return self.value


_DISTANCES = frozenset({MetricKind.L0, MetricKind.L1, MetricKind.L2, MetricKind.LINF})


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"

    def better(self, a: float, b: float) -> bool:
        """True if ``a`` is strictly better than ``b``."""
        return a > b if self is Direction.MAXIMIZE else a < b


def direction_of(y_axis: MetricKind) -> Direction:
    """Success rate is maximised; distances and query counts are minimised."""
    if y_axis is MetricKind.ASR:
        return Direction.MAXIMIZE
    return Direction.MINIMIZE


class Mode(str, Enum):
    TARGETED = "targeted"
    UNTARGETED = "untargeted"


class AttackFamily(str, Enum):
    GRADIENT = "gradient"
    SCORE = "score"
    DECISION = "decision"


def _check_identifier(value: object, name: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise EmptyIdentifier(f"{name} must be a non-empty identifier", field=name)
    return value


@dataclass(frozen=True)
class RunContext:
    dataset: str
    model: str
    mode: Mode
    attack_family: AttackFamily

    def __post_init__(self) -> None:
        _check_identifier(self.dataset, "dataset")
        _check_identifier(self.model, "model")
        try:
            object.__setattr__(self, "mode", Mode(self.mode))
        except ValueError:
            raise ValidationError(f"mode must be targeted or untargeted, got {self.mode!r}",
                                  field="mode") from None
        try:
            object.__setattr__(self, "attack_family", AttackFamily(self.attack_family))
        except ValueError:
            raise ValidationError(
                f"attack_family must be gradient, score or decision, got {self.attack_family!r}",
                field="attack_family") from None

    def to_dict(self) -> dict[str, str]:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "mode": self.mode.value,
            "attack_family": self.attack_family.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunContext":
        try:
            return cls(data["dataset"], data["model"], data["mode"], data["attack_family"])
        except KeyError as exc:
            raise ValidationError(f"context is missing {exc.args[0]!r}", field=exc.args[0]) from None

    def __str__(self) -> str:
        return f"{self.dataset}/{self.model}/{self.mode.value}/{self.attack_family.value}"


@dataclass(frozen=True, eq=True)
class AttackRecord:
    """One measured outcome of one attack run under one parameter set.

    Records may omit metrics; whether a record is usable is decided when a
    :class:`ComparisonSpec` is applied to it.
    """

    method: str
    param_set: str
    context: RunContext
    measurements: Mapping[MetricKind, float]
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        converted = {MetricKind(k): v for k, v in dict(self.measurements).items()}
        object.__setattr__(self, "measurements", MappingProxyType(converted))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __hash__(self) -> int:
        return hash((self.method, self.param_set, self.context,
                     tuple(sorted((k.value, v) for k, v in self.measurements.items()))))

    def get(self, metric: MetricKind) -> float | None:
        return self.measurements.get(metric)


def validate_value(metric: MetricKind, value: object) -> float:
    """Check one measurement against its kind's range and return it as a number."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{metric.value} must be numeric, got {value!r}", field=metric.value)
    v = float(value)
    if not math.isfinite(v):
        raise OutOfRange(f"{metric.value} must be finite, got {value!r}", field=metric.value)
    if v < 0:
        raise NegativeValue(f"{metric.value} must be >= 0, got {value!r}", field=metric.value)
    if metric is MetricKind.ASR and v > ASR_BOUNDS[1]:
        raise OutOfRange(f"asr must lie in [0, 100], got {value!r}", field=metric.value)
    if metric is MetricKind.QUERIES:
        if v != math.floor(v):
            raise NonIntegerQueries(f"queries must be an integer, got {value!r}", field="queries")
        return int(v)
    return v


def validate_record(record: AttackRecord) -> None:
    """Raise a :class:`ValidationError` subclass naming the first bad field."""
    _check_identifier(record.method, "method")
    _check_identifier(record.param_set, "param_set")
    if not isinstance(record.context, RunContext):
        raise ValidationError("context must be a RunContext", field="context")
    for metric, value in record.measurements.items():
        validate_value(metric, value)


@dataclass(frozen=True)
class FixedMetric:
    """Keep only records whose ``metric`` lies within ``center ± tolerance``."""

    metric: MetricKind
    center: float
    tolerance: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "metric", MetricKind(self.metric))
        if not (math.isfinite(self.center) and math.isfinite(self.tolerance)):
            raise InvalidSpec("fixed metric center and tolerance must be finite")
        if self.tolerance < 0:
            raise InvalidSpec(f"tolerance must be >= 0, got {self.tolerance}")

    def admits(self, value: float) -> bool:
        # Closed band; absorb the representation error of e.g. 3.1 - 3.0.
        gap = abs(value - self.center)
        return gap <= self.tolerance or math.isclose(gap, self.tolerance, rel_tol=1e-12, abs_tol=1e-12)

    def __str__(self) -> str:
        return f"{self.metric.value}={self.center!r}~{self.tolerance!r}"


@dataclass(frozen=True)
class ComparisonSpec:
    """Axes, optional fixed-metric band, comparison range, resolution and order."""

    x_axis: MetricKind
    y_axis: MetricKind
    range: tuple[float, float]
    resolution: int
    order: int = DEFAULT_ORDER
    fixed: FixedMetric | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_axis", MetricKind(self.x_axis))
        object.__setattr__(self, "y_axis", MetricKind(self.y_axis))
        lo, hi = (float(v) for v in self.range)
        object.__setattr__(self, "range", (lo, hi))
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise InvalidRange(f"range must satisfy lo < hi, got [{lo}, {hi}]")
        if isinstance(self.resolution, bool) or int(self.resolution) != self.resolution or self.resolution < 1:
            raise InvalidResolution(f"resolution must be an integer >= 1, got {self.resolution}")
        if isinstance(self.order, bool) or int(self.order) != self.order or self.order < 0:
            raise InvalidOrder(f"order must be an integer >= 0, got {self.order}")
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "order", int(self.order))
        check_order(self.resolution, self.order)
        axes = [self.x_axis, self.y_axis]
        if self.fixed is not None:
            axes.append(self.fixed.metric)
        if len(set(axes)) != len(axes):
            raise InvalidSpec("x axis, y axis and fixed metric must be pairwise distinct")

    @property
    def direction(self) -> Direction:
        return direction_of(self.y_axis)

    @property
    def width(self) -> float:
        return self.range[1] - self.range[0]

    def advisories(self) -> list[str]:
        notes = []
        if self.order > 0 and self.resolution <= 5:
            notes.append(f"resolution {self.resolution} <= 5: order 0 (straight connection) "
                         f"is recommended over order {self.order}")
        if 0 < self.order < DEFAULT_ORDER:
            notes.append(f"order {self.order} < {DEFAULT_ORDER} may under-fit; "
                         "check the bound diagnostics")
        return notes

    def to_dict(self) -> dict[str, Any]:
        return {
            "x_axis": self.x_axis.value,
            "y_axis": self.y_axis.value,
            "fixed": None if self.fixed is None else {
                "metric": self.fixed.metric.value,
                "center": self.fixed.center,
                "tolerance": self.fixed.tolerance,
            },
            "range": [self.range[0], self.range[1]],
            "resolution": self.resolution,
            "order": self.order,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ComparisonSpec":
        fixed = data.get("fixed")
        try:
            return cls(
                x_axis=MetricKind.parse(data["x_axis"]),
                y_axis=MetricKind.parse(data["y_axis"]),
                range=tuple(data["range"]),
                resolution=data["resolution"],
                order=data.get("order", DEFAULT_ORDER),
                fixed=None if fixed is None else FixedMetric(
                    MetricKind.parse(fixed["metric"]), float(fixed["center"]), float(fixed["tolerance"])),
            )
        except KeyError as exc:
            raise InvalidSpec(f"spec is missing {exc.args[0]!r}") from None


def check_order(resolution: int, order: int) -> None:
    """Enforce that the resolution is larger than the fitting order."""
    if order >= resolution:
        raise InvalidOrder(
            f"resolution r must be larger than order d (got r={resolution}, d={order}); "
            "lower the order or raise the resolution",
            resolution=resolution, order=order)
