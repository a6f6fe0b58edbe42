"""Synthetic attack runs drawn from analytic trade-off curves.

Two shapes are available: a logistic success-rate curve rising with the
perturbation budget, and a power-law decay of distance with the number of
queries.  Parameter sets shift the curve along x, so different sets win in
different sub-ranges.  Noise comes from PCG64's raw 64-bit stream turned into
Gaussians by Box-Muller, which keeps fixtures byte-stable across platforms
and numpy releases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import InvalidCrossing, OutOfDomain, ValidationError
from .model import AttackRecord, AttackFamily, MetricKind, Mode, RunContext


@dataclass(frozen=True)
class Logistic:
    scale: float
    midpoint: float
    ceiling: float = 100.0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValidationError(f"logistic scale must be > 0, got {self.scale}")
        if not 0 < self.ceiling <= 100:
            raise ValidationError(f"logistic ceiling must lie in (0, 100], got {self.ceiling}")
        _check_noise(self.noise_sd)

    def __call__(self, x: float) -> float:
        z = -self.scale * (x - self.midpoint)
        if z > 700:
            return 0.0
        return self.ceiling / (1.0 + math.exp(z))

    def area(self, lo: float, hi: float) -> float:
        """Exact integral of the noiseless curve over ``[lo, hi]``."""
        def softplus(u: float) -> float:
            return max(u, 0.0) + math.log1p(math.exp(-abs(u)))
        a, b = self.scale, self.midpoint
        return self.ceiling / a * (softplus(a * (hi - b)) - softplus(a * (lo - b)))


@dataclass(frozen=True)
class PowerDecay:
    amplitude: float
    exponent: float
    floor: float = 0.0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ValidationError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.exponent > 0:
            raise ValidationError(f"exponent must be > 0, got {self.exponent}")
        if self.floor < 0:
            raise ValidationError(f"floor must be >= 0, got {self.floor}")
        _check_noise(self.noise_sd)

    def __call__(self, x: float) -> float:
        if not x > 0:
            raise OutOfDomain(f"power decay is defined for x > 0, got {x}")
        return self.floor + self.amplitude * x ** (-self.exponent)

    def area(self, lo: float, hi: float) -> float:
        if not lo > 0:
            raise OutOfDomain("power decay area needs lo > 0")
        g = self.exponent
        if g == 1:
            tail = math.log(hi / lo)
        else:
            tail = (hi ** (1 - g) - lo ** (1 - g)) / (1 - g)
        return self.floor * (hi - lo) + self.amplitude * tail


CurveModel = Union[Logistic, PowerDecay]


def _check_noise(sd: float) -> None:
    if not (math.isfinite(sd) and sd >= 0):
        raise ValidationError(f"noise_sd must be >= 0, got {sd}")


def true_value(model: CurveModel, x: float) -> float:
    return model(x)


def _shifted(model: CurveModel, offset: float):
    return lambda x: model(x - offset)


class Gaussian:
    """Standard normal variates from PCG64 via the Box-Muller transform."""

    def __init__(self, seed: int) -> None:
        self._bits = np.random.PCG64(seed & 0xFFFF_FFFF_FFFF_FFFF)
        self._spare: float | None = None

    def uniform(self) -> float:
        # 53 high bits -> (0, 1]; never 0 so the log below is finite.
        raw = int(self._bits.random_raw())
        return ((raw >> 11) + 1) * 2.0 ** -53

    def __iter__(self) -> Iterator[float]:
        return self

    def __next__(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1, u2 = self.uniform(), self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare = radius * math.sin(2.0 * math.pi * u2)
        return radius * math.cos(2.0 * math.pi * u2)


def clamp_to_metric(metric: MetricKind, value: float) -> float:
    if metric is MetricKind.ASR:
        return min(100.0, max(0.0, value))
    if metric is MetricKind.QUERIES:
        return max(0, int(round(value)))
    return max(0.0, value)


DEFAULT_CONTEXT = RunContext("mnist", "cnn4", Mode.UNTARGETED, AttackFamily.GRADIENT)


def generate_runs(model: CurveModel, method: str, param_sets: Sequence[tuple[str, float]],
                  xs: Sequence[float], x_axis: MetricKind = MetricKind.L2,
                  y_axis: MetricKind = MetricKind.ASR, context: RunContext = DEFAULT_CONTEXT,
                  extra: Mapping[MetricKind, float] | None = None) -> list[AttackRecord]:
    """One record per (parameter set, x), noise drawn in that order from ``model.seed``.

    ``extra`` adds constant measurements, e.g. a fixed L2 distance for a
    three-metric comparison.
    """
    noise = Gaussian(model.seed)
    records = []
    for name, offset in param_sets:
        curve = _shifted(model, offset)
        for x in xs:
            x_val = clamp_to_metric(x_axis, float(x))
            y = curve(float(x))
            if model.noise_sd > 0:
                y += model.noise_sd * next(noise)
            measurements = {x_axis: x_val, y_axis: clamp_to_metric(y_axis, y)}
            for metric, value in (extra or {}).items():
                measurements[MetricKind(metric)] = value
            records.append(AttackRecord(method, name, context, measurements))
    return records


def crossing_pair(x_cross: float, range_: Sequence[float], level: float = 90.0,
                  slopes: tuple[float, float] = (9.0, 3.6)) -> tuple[Logistic, Logistic]:
    """Two logistic curves meeting once, at ``x_cross``, at success rate ``level``.

    Both share the ceiling 100, so their logits are straight lines in x with
    different slopes and meet exactly once.  ``slopes`` are logistic scales
    per unit of range width; the steeper curve ``a`` starts lower and wins
    after the crossing.
    """
    lo, hi = float(range_[0]), float(range_[1])
    if not lo < x_cross < hi:
        raise InvalidCrossing(f"crossing must lie strictly inside ({lo}, {hi}), got {x_cross}")
    width = hi - lo
    if not slopes[0] > slopes[1] > 0:
        raise ValidationError("slopes must satisfy steep > shallow > 0")
    if not 0 < level < 100:
        raise ValidationError("crossing level must lie in (0, 100)")
    logit = math.log(level / (100.0 - level))
    slope_a, slope_b = slopes[0] / width, slopes[1] / width
    a = Logistic(slope_a, x_cross - logit / slope_a)
    b = Logistic(slope_b, x_cross - logit / slope_b)
    return a, b


def linspace(lo: float, hi: float, n: int) -> list[float]:
    return [float(v) for v in np.linspace(lo, hi, n)]
