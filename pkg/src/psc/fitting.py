"""Curve construction from sampled best points.

Order ``d >= 1`` gives a least-squares polynomial of degree ``d``; order 0
connects the points with straight segments.  Polynomials are stored in the
variable ``t`` obtained by mapping the comparison range affinely onto
``[-1, 1]``, which keeps the Vandermonde system well conditioned even on
pixel-scale ranges such as ``[0, 255 * k]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DegenerateAbscissae, InsufficientPoints, InvalidOrder, OutOfDomain
from .sampling import SampledSeries

_DOMAIN_SLACK = 1e-12


@dataclass(frozen=True)
class Polynomial:
    """``sum(coeffs[i] * t**i)`` with ``t = (2x - lo - hi) / (hi - lo)``."""

    coeffs: tuple[float, ...]
    domain: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.coeffs:
            raise ValueError("a polynomial needs at least one coefficient")
        if not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("polynomial coefficients must be finite")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def normalize(self, x):
        lo, hi = self.domain
        return (2.0 * x - (lo + hi)) / (hi - lo)

    def __call__(self, x):
        if isinstance(x, (list, tuple)):
            x = np.asarray(x, dtype=float)
        t = self.normalize(x)
        acc = 0.0 * t
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    def power_coefficients(self) -> tuple[float, ...]:
        """Coefficients in the raw abscissa, lowest degree first."""
        poly = np.polynomial.Polynomial(self.coeffs, domain=list(self.domain), window=[-1.0, 1.0])
        raw = poly.convert(domain=[-1.0, 1.0], window=[-1.0, 1.0]).coef
        out = np.zeros(len(self.coeffs))
        out[: len(raw)] = raw
        return tuple(float(c) for c in out)

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coeffs": list(self.coeffs), "domain": list(self.domain)}


@dataclass(frozen=True)
class Polyline:
    """Straight segments through ``points``.

    With a ``domain``, the curve is also defined between the domain edges and
    the outermost points, where it holds the end values flat.
    """

    points: tuple[tuple[float, float], ...]
    domain: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("a polyline needs at least one point")
        xs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("polyline abscissae must be strictly increasing")
        if self.domain is not None and not (self.domain[0] <= xs[0] and xs[-1] <= self.domain[1]):
            raise ValueError("polyline points must lie inside its domain")

    @property
    def span(self) -> tuple[float, float]:
        if self.domain is not None:
            return self.domain
        return self.points[0][0], self.points[-1][0]

    def __call__(self, x):
        if np.ndim(x):
            return np.array([self(float(v)) for v in np.asarray(x, dtype=float)])
        lo, hi = self.span
        slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
        if x < lo - slack or x > hi + slack:
            raise OutOfDomain(f"polyline covers [{lo}, {hi}], cannot evaluate at {x}")
        return self.extended(x)

    def extended(self, x: float) -> float:
        """Value at ``x``, holding the end values flat outside the span."""
        pts = self.points
        if x <= pts[0][0]:
            return pts[0][1]
        if x >= pts[-1][0]:
            return pts[-1][1]
        xs = [p[0] for p in pts]
        j = int(np.searchsorted(xs, x, side="right"))
        (x0, y0), (x1, y1) = pts[j - 1], pts[j]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def to_dict(self) -> dict:
        out = {"kind": "polyline", "points": [[x, y] for x, y in self.points]}
        if self.domain is not None:
            out["domain"] = list(self.domain)
        return out


FittedCurve = Union[Polynomial, Polyline]


def curve_from_dict(data: dict) -> FittedCurve:
    if data["kind"] == "polynomial":
        return Polynomial(tuple(float(c) for c in data["coeffs"]),
                          (float(data["domain"][0]), float(data["domain"][1])))
    if data["kind"] == "polyline":
        domain = data.get("domain")
        return Polyline(tuple((float(x), float(y)) for x, y in data["points"]),
                        None if domain is None else (float(domain[0]), float(domain[1])))
    raise ValueError(f"unknown curve kind {data['kind']!r}")


def fit_points(xs: Sequence[float], ys: Sequence[float], order: int,
               domain: tuple[float, float] | None = None) -> FittedCurve:
    """Fit a degree-``order`` least-squares polynomial, or a polyline for order 0.

    ``domain`` is the comparison range; it defaults to the span of ``xs``.
    """
    if isinstance(order, bool) or int(order) != order or order < 0:
        raise InvalidOrder(f"order must be an integer >= 0, got {order}")
    order = int(order)
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be one-dimensional and of equal length")

    if order == 0:
        if len(x) == 0:
            raise InsufficientPoints("no sampled points to connect")
        return Polyline(tuple(zip(x.tolist(), y.tolist())), domain)

    if len(x) < order + 1:
        raise InsufficientPoints(
            f"{len(x)} sampled point(s) cannot determine a degree-{order} polynomial "
            f"(need {order + 1}); lower the order or raise the resolution",
            points=len(x), order=order)
    if len(np.unique(x)) < order + 1:
        raise DegenerateAbscissae(
            f"only {len(np.unique(x))} distinct abscissae for a degree-{order} fit")

    lo, hi = (float(x.min()), float(x.max())) if domain is None else (float(domain[0]), float(domain[1]))
    t = (2.0 * x - (lo + hi)) / (hi - lo)
    vander = np.vander(t, order + 1, increasing=True)
    # Householder QR on the normalised Vandermonde matrix; no normal equations.
    q, r = np.linalg.qr(vander, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.min() <= diag.max() * len(x) * np.finfo(float).eps:
        raise DegenerateAbscissae(f"abscissae do not support a degree-{order} fit")
    coeffs = np.linalg.solve(r, q.T @ y)
    return Polynomial(tuple(float(c) for c in coeffs), (lo, hi))


def fit(series: SampledSeries, order: int) -> FittedCurve:
    return fit_points(series.xs, series.ys, order, series.domain)


def evaluate(curve: FittedCurve, x):
    return curve(x)


def residual(curve: Polynomial, xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sum of squared residuals of ``curve`` at the given points."""
    diff = np.asarray(curve(np.asarray(xs, dtype=float))) - np.asarray(ys, dtype=float)
    return float(np.dot(diff, diff))
