"""Piece-wise sampling curving (PSC) for comparing adversarial attacks.

Divide a perturbation range into equal parts, keep the best measured point
per part across parameter sweeps, fit a curve through those points and rank
methods by the area under it.
"""

from .analysis import ComparisonReport, auc, bound_check, compare, crossings, pointwise_discrepancy, rank
from .errors import PscError
from .fitting import Polyline, Polynomial, evaluate, fit, fit_points
from .model import (
    AttackFamily,
    AttackRecord,
    ComparisonSpec,
    Direction,
    FixedMetric,
    MetricKind,
    Mode,
    RunContext,
    direction_of,
    validate_record,
)
from .sampling import best_point, partition, sample_series

__all__ = [
    "AttackFamily", "AttackRecord", "ComparisonReport", "ComparisonSpec", "Direction", "FixedMetric",
    "MetricKind", "Mode", "Polyline", "Polynomial", "PscError", "RunContext", "auc", "best_point",
    "bound_check", "compare", "crossings", "direction_of", "evaluate", "fit", "fit_points", "partition",
    "pointwise_discrepancy", "rank", "sample_series", "validate_record",
]

__version__ = "0.1.0"
