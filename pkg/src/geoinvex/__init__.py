"""Numerical toolkit for geodesic (alpha, E)-invexity on Riemannian manifolds."""

__version__ = "0.1.0"

from geoinvex.config import Tolerances
from geoinvex.errors import GeoInvexError
from geoinvex.geometry import (
    CustomMetric,
    Euclidean,
    GeodesicHandle,
    PoincareBall,
    Point,
    TangentVector,
    curve_length,
    differential,
    distance,
    exp_map,
    gradient,
    inner,
    log_map,
    metric_eval,
    parallel_transport,
    solve_geodesic,
)

__all__ = [
    "CustomMetric",
    "Euclidean",
    "GeoInvexError",
    "GeodesicHandle",
    "PoincareBall",
    "Point",
    "TangentVector",
    "Tolerances",
    "curve_length",
    "differential",
    "distance",
    "exp_map",
    "gradient",
    "inner",
    "log_map",
    "metric_eval",
    "parallel_transport",
    "solve_geodesic",
]
