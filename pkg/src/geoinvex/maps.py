"""The maps eta, alpha and E that parametrise an invexity scenario.

Each definition evaluates on raw coordinates through ``evaluate`` (used in hot
loops) and on ``Point`` objects through the module-level ``eval_*`` helpers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from geoinvex import dsl
from geoinvex.errors import ConstructionError, DslEvalError, UnsupportedInverseError, ZeroAlphaError
from geoinvex.geometry import Point, TangentVector


def _pair_env(a, b):
    return {"a": a, "b": b, "x": a, "y": b}


# ---------------------------------------------------------------------------
# eta: M x M -> TM with eta(a, b) in T_b M


@dataclass(frozen=True)
class LogMapEta:
    """eta(a, b) = scale * log_b(a)."""

    scale: float = 1.0
    kind = "log"

    def evaluate(self, m, a, b):
        if not m.has_log:
            raise UnsupportedInverseError(f"eta=log needs a log map; {m.kind} has none")
        return self.scale * m.log(b, a)

    def to_dict(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True)
class ZeroEta:
    kind = "zero"

    def evaluate(self, m, a, b):
        return np.zeros(m.dim)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class PiecewiseBallsEta:
    """log_b(a) when a and b lie in the same open ball, the zero vector otherwise."""

    center1: tuple
    radius1: float
    center2: tuple
    radius2: float
    scale: float = 1.0
    kind = "piecewise_balls"

    def co_ball(self, m, a, b):
        for c, r in ((self.center1, self.radius1), (self.center2, self.radius2)):
            c = np.asarray(c, float)
            if m.dist(c, a) < r and m.dist(c, b) < r:
                return True
        return False

    def evaluate(self, m, a, b):
        if self.co_ball(m, a, b):
            if not m.has_log:
                raise UnsupportedInverseError(f"eta=piecewise_balls needs a log map; {m.kind} has none")
            return self.scale * m.log(b, a)
        return np.zeros(m.dim)

    def to_dict(self):
        return {
            "kind": self.kind,
            "center1": list(self.center1),
            "radius1": self.radius1,
            "center2": list(self.center2),
            "radius2": self.radius2,
            "scale": self.scale,
        }


@dataclass(frozen=True)
class ExpressionEta:
    """Component expressions over ``a`` (alias ``x``) and ``b`` (alias ``y``)."""

    components: tuple
    kind = "expression"

    def evaluate(self, m, a, b):
        if len(self.components) != m.dim:
            raise DslEvalError(f"eta has {len(self.components)} components, manifold dimension is {m.dim}")
        env = _pair_env(a, b)
        return np.array([float(dsl.eval_scalar(c, env, m)) for c in self.components])

    def to_dict(self):
        return {"kind": self.kind, "components": [dsl.unparse(c) for c in self.components]}


# ---------------------------------------------------------------------------
# alpha: M x M -> R - {0}


@dataclass(frozen=True)
class ConstantAlpha:
    value: float = 1.0
    kind = "constant"

    def __post_init__(self):
        if self.value == 0:
            raise ZeroAlphaError("alpha must be nonzero (codomain R - {0})")

    def evaluate(self, m, a, b):
        return float(self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class ExpressionAlpha:
    expr: dsl.Node
    kind = "expression"

    def evaluate(self, m, a, b):
        val = float(dsl.eval_scalar(self.expr, _pair_env(a, b), m))
        if val == 0.0:
            raise ZeroAlphaError(
                f"alpha({np.asarray(a).tolist()}, {np.asarray(b).tolist()}) = 0 violates codomain R - {{0}}",
                self.expr.pos if self.expr.pos != (0, 0) else None,
            )
        return val

    def to_dict(self):
        return {"kind": self.kind, "expr": dsl.unparse(self.expr)}


# ---------------------------------------------------------------------------
# E: M -> M


@dataclass(frozen=True)
class IdentityE:
    kind = "identity"

    def evaluate(self, m, x):
        return np.array(x, dtype=float)

    def to_dict(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class GeodesicProjectionE:
    """The point at distance ``radius`` from ``anchor`` on the geodesic towards x.

    At ``x == anchor`` the first chart direction is used.
    """

    anchor: tuple
    radius: float
    kind = "projection"

    def __post_init__(self):
        if not self.radius > 0:
            raise ConstructionError(f"projection radius must be positive, got {self.radius}")

    def evaluate(self, m, x):
        if not m.has_log:
            raise UnsupportedInverseError(f"E=projection needs a log map; {m.kind} has none")
        x0 = np.asarray(self.anchor, float)
        u = m.log(x0, x)
        norm = float(m.norm(x0, u))
        if norm == 0.0:
            u = np.zeros(m.dim)
            u[0] = 1.0
            norm = float(m.norm(x0, u))
        return m.exp(x0, (self.radius / norm) * u)

    def to_dict(self):
        return {"kind": self.kind, "anchor": list(self.anchor), "radius": self.radius}


@dataclass(frozen=True)
class ExpressionE:
    components: tuple
    kind = "expression"

    def evaluate(self, m, x):
        if len(self.components) != m.dim:
            raise DslEvalError(f"E has {len(self.components)} components, manifold dimension is {m.dim}")
        out = np.array([float(dsl.eval_scalar(c, {"x": x}, m)) for c in self.components])
        m.check_coords(out)
        return out

    def to_dict(self):
        return {"kind": self.kind, "components": [dsl.unparse(c) for c in self.components]}


# ---------------------------------------------------------------------------
# Point-level helpers


def eval_eta(eta, a: Point, b: Point) -> TangentVector:
    return TangentVector(b, eta.evaluate(b.manifold, a.coords, b.coords))


def eval_alpha(alpha, a: Point, b: Point) -> float:
    return alpha.evaluate(a.manifold, a.coords, b.coords)


def eval_E(emap, x: Point) -> Point:
    return Point(emap.evaluate(x.manifold, x.coords), x.manifold)
