"""Riemannian geometry on chart coordinates.

Three manifolds are provided:

* ``Euclidean(n)``: flat R^n, everything in closed form.
* ``PoincareBall(n)``: the Poincare ball of curvature -1 with metric
  ``(2 / (1 - |x|^2))^2 * I``. Exp, log, distance and parallel transport are
  closed form (Moebius gyrovector calculus).
* ``CustomMetric(n, metric_fn)``: any coordinate metric. Christoffel symbols
  come from central differences of the metric; geodesics and parallel
  transport are integrated with fixed-step classical RK4.

Manifolds work on raw coordinate arrays internally. ``Point`` and
``TangentVector`` are the validated public wrappers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from geoinvex.config import DEFAULT_TOLERANCES, Tolerances
from geoinvex.errors import (
    BaseMismatchError,
    DomainError,
    DomainExitError,
    EvaluationError,
    GeoInvexError,
    MetricDegeneracyError,
    ParameterOrderError,
    UnsupportedInverseError,
)

POINCARE_BOUNDARY_EPS = 1e-12


# ---------------------------------------------------------------------------
# points and vectors


@dataclass(frozen=True, eq=False)
class Point:
    coords: np.ndarray
    manifold: "Manifold"

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)
        self.manifold.check_coords(arr)

    @property
    def dim(self):
        return self.coords.shape[0]

    def same_as(self, other, atol=0.0):
        if atol == 0.0:
            return np.array_equal(self.coords, other.coords)
        return bool(np.allclose(self.coords, other.coords, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Point({self.coords.tolist()}, {self.manifold!r})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    components: np.ndarray

    def __post_init__(self):
        arr = np.array(self.components, dtype=float).reshape(-1)
        if arr.shape[0] != self.base.dim:
            raise ValueError(
                f"tangent vector has {arr.shape[0]} components, manifold dimension is {self.base.dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("tangent vector components must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "components", arr)

    @property
    def manifold(self):
        return self.base.manifold

    def norm(self):
        return self.manifold.norm(self.base.coords, self.components)

    def scaled(self, c):
        return TangentVector(self.base, c * self.components)

    def __repr__(self):
        return f"TangentVector(base={self.base.coords.tolist()}, {self.components.tolist()})"


def _sq(x):
    return np.sum(x * x, axis=-1)


def _dot(x, y):
    return np.sum(x * y, axis=-1)


# ---------------------------------------------------------------------------
# manifolds


class Manifold:
    """Base class. Subclasses implement the coordinate-level primitives."""

    kind = "abstract"
    closed_form = True
    has_log = True

    def __init__(self, dim, tolerances: Tolerances = DEFAULT_TOLERANCES):
        if int(dim) != dim or dim < 1:
            raise ValueError(f"dimension must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.tol = tolerances

    # public wrappers -----------------------------------------------------
    def point(self, coords):
        return Point(coords, self)

    def vector(self, base, components):
        if not isinstance(base, Point):
            base = self.point(base)
        return TangentVector(base, components)

    def zero_vector(self, base):
        return self.vector(base, np.zeros(self.dim))

    def check_coords(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DomainError(f"point has {x.shape[-1]} coordinates, {self.kind} has dimension {self.dim}")
        if not np.all(np.isfinite(x)):
            raise DomainError(f"point {x.tolist()} has non-finite coordinates")
        if not np.all(self.contains(x)):
            raise DomainError(f"point {x.tolist()} lies outside the {self.kind} chart domain")

    def contains(self, x):
        return np.ones(np.shape(x)[:-1], dtype=bool)

    # coordinate primitives ---------------------------------------------------
    def metric(self, x):
        raise NotImplementedError

    def inner_coords(self, x, u, v):
        g = self.metric(x)
        return np.einsum("...i,...ij,...j->...", u, g, v)

    def norm(self, x, u):
        return np.sqrt(np.maximum(self.inner_coords(x, u, u), 0.0))

    def geodesic_point(self, x, v, t):
        raise NotImplementedError

    def exp(self, x, v):
        return self.geodesic_point(x, v, 1.0)

    def log(self, x, y):
        raise UnsupportedInverseError(f"log map is not available on {self.kind}")

    def dist(self, x, y):
        raise UnsupportedInverseError(f"closed-form distance is not available on {self.kind}")

    def geodesic(self, p: Point, v: TangentVector) -> "GeodesicHandle":
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.dim})"


class Euclidean(Manifold):
    kind = "euclidean"

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def inner_coords(self, x, u, v):
        return _dot(np.asarray(u, float), np.asarray(v, float))

    def geodesic_point(self, x, v, t):
        t = np.asarray(t, float)
        return np.asarray(x, float) + (t[..., None] if t.ndim else t) * np.asarray(v, float)

    def log(self, x, y):
        return np.asarray(y, float) - np.asarray(x, float)

    def dist(self, x, y):
        return np.sqrt(_sq(np.asarray(y, float) - np.asarray(x, float)))

    def transport_coords(self, a, b, w):
        return np.array(w, dtype=float)

    def christoffel(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def geodesic(self, p, v):
        return ClosedFormGeodesic(self, p, v)


class PoincareBall(Manifold):
    """Poincare ball model of hyperbolic n-space, curvature -1."""

    kind = "poincare"

    def contains(self, x):
        return _sq(np.asarray(x, float)) < (1.0 - POINCARE_BOUNDARY_EPS) ** 2

    def conformal_factor(self, x):
        return 2.0 / (1.0 - _sq(np.asarray(x, float)))

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        lam = self.conformal_factor(x)
        return (lam**2)[..., None, None] * np.eye(self.dim)

    def inner_coords(self, x, u, v):
        lam = self.conformal_factor(x)
        return lam**2 * _dot(np.asarray(u, float), np.asarray(v, float))

    # Moebius gyrovector operations
    @staticmethod
    def mobius_add(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        xy = _dot(x, y)[..., None]
        x2 = _sq(x)[..., None]
        y2 = _sq(y)[..., None]
        num = (1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y
        den = 1.0 + 2.0 * xy + x2 * y2
        return num / den

    @staticmethod
    def gyration(u, v, w):
        """gyr[u, v] w, linear in w."""
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        w = np.asarray(w, float)
        uv = _dot(u, v)[..., None]
        uw = _dot(u, w)[..., None]
        vw = _dot(v, w)[..., None]
        u2 = _sq(u)[..., None]
        v2 = _sq(v)[..., None]
        a = -uw * v2 + vw + 2.0 * uv * vw
        b = -vw * u2 - uw
        d = 1.0 + 2.0 * uv + u2 * v2
        return w + 2.0 * (a * u + b * v) / d

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        vn = np.sqrt(_sq(v))[..., None]
        lam = self.conformal_factor(x)[..., None]
        safe = np.where(vn > 0, vn, 1.0)
        step = np.tanh(lam * safe / 2.0) * v / safe
        out = self.mobius_add(x, step)
        return np.where(vn > 0, out, x)

    def geodesic_point(self, x, v, t):
        v = np.asarray(v, float)
        t = np.asarray(t, float)
        return self.exp(x, t[..., None] * v if t.ndim else t * v)

    def log(self, x, y):
        x = np.asarray(x, float)
        w = self.mobius_add(-x, y)
        wn = np.sqrt(_sq(w))[..., None]
        lam = self.conformal_factor(x)[..., None]
        safe = np.where(wn > 0, wn, 1.0)
        return np.where(wn > 0, (2.0 / lam) * np.arctanh(np.minimum(safe, 1.0 - 1e-16)) * w / safe, 0.0 * w)

    def dist(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        # arcosh(1 + delta) written as log1p(...) so small distances keep precision
        delta = 2.0 * _sq(x - y) / ((1.0 - _sq(x)) * (1.0 - _sq(y)))
        return np.log1p(delta + np.sqrt(delta * (delta + 2.0)))

    def transport_coords(self, a, b, w):
        """Parallel transport of ``w`` from ``a`` to ``b`` along their geodesic."""
        la = self.conformal_factor(a)[..., None]
        lb = self.conformal_factor(b)[..., None]
        return (la / lb) * self.gyration(b, -np.asarray(a, float), w)

    def christoffel(self, x):
        """Analytic Christoffel symbols Gamma[k, i, j] of the conformal metric."""
        x = np.asarray(x, float)
        dphi = 2.0 * x / (1.0 - _sq(x))[..., None]
        eye = np.eye(self.dim)
        return (
            np.einsum("ki,...j->...kij", eye, dphi)
            + np.einsum("kj,...i->...kij", eye, dphi)
            - np.einsum("ij,...k->...kij", eye, dphi)
        )

    def geodesic(self, p, v):
        return ClosedFormGeodesic(self, p, v)


class CustomMetric(Manifold):
    """User-supplied coordinate metric; geodesics by RK4 on the geodesic equation.

    ``metric_fn`` maps coordinates of shape ``(..., n)`` to ``(..., n, n)``.
    ``bounds`` is an optional per-coordinate ``(lo, hi)`` box and ``domain_fn``
    an optional scalar function that is negative inside the chart domain.
    """

    kind = "custom"
    closed_form = False
    has_log = False

    def __init__(self, dim, metric_fn, bounds=None, domain_fn=None, tolerances=DEFAULT_TOLERANCES,
                 description=None):
        super().__init__(dim, tolerances)
        self.metric_fn = metric_fn
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float).reshape(self.dim, 2)
        self.domain_fn = domain_fn
        self.description = description

    @classmethod
    def from_expressions(cls, dim, components, bounds=None, domain=None, tolerances=DEFAULT_TOLERANCES):
        """Build from DSL expressions ``components[i][j]`` over ``x``."""
        from geoinvex import dsl

        if len(components) != dim or any(len(row) != dim for row in components):
            raise ValueError(f"metric needs {dim}x{dim} component expressions")
        asts = [[dsl.parse(src, variables={"x"}) if isinstance(src, str) else src for src in row]
                for row in components]
        euclid = Euclidean(dim)

        def metric_fn(x):
            x = np.asarray(x, dtype=float)
            out = np.empty(x.shape[:-1] + (dim, dim))
            for i in range(dim):
                for j in range(dim):
                    out[..., i, j] = dsl.eval_scalar(asts[i][j], {"x": x}, euclid)
            return out

        domain_fn = None
        if domain is not None:
            dom_ast = dsl.parse(domain, variables={"x"}) if isinstance(domain, str) else domain

            def domain_fn(x):
                return dsl.eval_scalar(dom_ast, {"x": np.asarray(x, float)}, euclid)

        return cls(dim, metric_fn, bounds=bounds, domain_fn=domain_fn, tolerances=tolerances,
                   description=[[dsl.unparse(a) for a in row] for row in asts])

    def contains(self, x):
        x = np.asarray(x, float)
        ok = np.all(np.isfinite(x), axis=-1)
        if self.bounds is not None:
            ok &= np.all((x > self.bounds[:, 0]) & (x < self.bounds[:, 1]), axis=-1)
        if self.domain_fn is not None:
            with np.errstate(all="ignore"):
                ok &= np.asarray(self.domain_fn(x)) < 0
        return ok

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        g = np.asarray(self.metric_fn(x), dtype=float)
        if g.shape != x.shape[:-1] + (self.dim, self.dim):
            raise MetricDegeneracyError(f"metric returned shape {g.shape}, expected {(self.dim, self.dim)}")
        flat_g = g.reshape(-1, self.dim, self.dim)
        flat_x = x.reshape(-1, self.dim)
        asym = np.max(np.abs(flat_g - np.swapaxes(flat_g, -1, -2)), axis=(-1, -2))
        scale = np.maximum(1.0, np.max(np.abs(flat_g), axis=(-1, -2)))
        bad = ~np.isfinite(asym) | (asym > 1e-10 * scale)
        if not np.any(bad):
            try:
                np.linalg.cholesky(flat_g)
                return g
            except np.linalg.LinAlgError:
                eig = np.linalg.eigvalsh(flat_g)
                bad = eig[:, 0] <= 0
        k = int(np.argmax(bad))
        raise MetricDegeneracyError(
            f"metric is not symmetric positive-definite at point {flat_x[k].tolist()}", point=flat_x[k]
        )

    def christoffel(self, x):
        """Gamma[..., k, i, j] from central differences of the metric.

        Uses the fourth-order five-point central stencil at step ``h``; the
        two-point stencil loses about 1e-7 near a conformal boundary.
        """
        x = np.asarray(x, dtype=float)
        n = self.dim
        h = self.tol.christoffel_step
        shifts = h * np.eye(n)
        base = x[..., None, :]
        stencil = np.concatenate([base, base + shifts, base - shifts, base + 2 * shifts, base - 2 * shifts], axis=-2)
        g_all = self.metric(stencil)
        g0 = g_all[..., 0, :, :]
        gp1, gm1 = g_all[..., 1 : n + 1, :, :], g_all[..., n + 1 : 2 * n + 1, :, :]
        gp2, gm2 = g_all[..., 2 * n + 1 : 3 * n + 1, :, :], g_all[..., 3 * n + 1 :, :, :]
        dg = (8.0 * (gp1 - gm1) - (gp2 - gm2)) / (12.0 * h)
        # dg[..., l, i, j] = d_l g_ij
        lead = dg.ndim - 3
        ax = tuple(range(lead))
        term = (
            np.transpose(dg, ax + (lead + 2, lead, lead + 1))
            + np.transpose(dg, ax + (lead + 2, lead + 1, lead))
            - dg
        )
        ginv = np.linalg.inv(g0)
        return 0.5 * np.einsum("...kl,...lij->...kij", ginv, term)

    def _check_domain(self, x, t):
        inside = self.contains(x)
        if not np.all(inside):
            bad = np.asarray(x).reshape(-1, self.dim)[int(np.argmin(np.asarray(inside).reshape(-1)))]
            raise DomainExitError(f"trajectory left the chart domain near {bad.tolist()}", t=t)

    def _rhs(self, x, v, w):
        gam = self.christoffel(x)
        dv = -np.einsum("...kij,...i,...j->...k", gam, v, v)
        dw = None if w is None else -np.einsum("...kij,...i,...mj->...mk", gam, v, w)
        return v, dv, dw

    def advance(self, x, v, w=None, t0=0.0, duration=1.0, steps=None, record=False):
        """Integrate the geodesic (and optionally transported vectors ``w``).

        Shapes: ``x, v`` are ``(..., n)``; ``w`` is ``(..., m, n)``. Negative
        ``duration`` integrates backwards. Returns final ``(x, v, w)`` or, with
        ``record``, the stacked node states.
        """
        x = np.array(x, dtype=float)
        v = np.array(v, dtype=float)
        w = None if w is None else np.array(w, dtype=float)
        if steps is None:
            steps = max(1, int(math.ceil(abs(duration) * self.tol.ode_steps - 1e-9)))
        dt = duration / steps
        xs, vs, ws = [x], [v], [w]
        t = t0
        for k in range(steps):
            k1 = self._stage(x, v, w, t)
            k2 = self._stage(x + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1],
                             None if w is None else w + 0.5 * dt * k1[2], t + 0.5 * dt)
            k3 = self._stage(x + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1],
                             None if w is None else w + 0.5 * dt * k2[2], t + 0.5 * dt)
            k4 = self._stage(x + dt * k3[0], v + dt * k3[1],
                             None if w is None else w + dt * k3[2], t + dt)
            x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            v = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            if w is not None:
                w = w + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            t = t0 + (k + 1) * dt
            self._check_domain(x, t)
            if record:
                xs.append(x)
                vs.append(v)
                ws.append(w)
        if record:
            return np.stack(xs), np.stack(vs), (None if w is None else np.stack(ws))
        return x, v, w

    def _stage(self, x, v, w, t):
        self._check_domain(x, t)
        return self._rhs(x, v, w)

    def geodesic_point(self, x, v, t):
        t = float(t)
        if t == 0.0:
            return np.array(x, dtype=float)
        return self.advance(x, v, duration=t)[0]

    def geodesic(self, p, v):
        return OdeGeodesic(self, p, v)


# ---------------------------------------------------------------------------
# geodesics


class GeodesicHandle:
    """The unique geodesic with prescribed start point and initial velocity.

    ``coords_at`` accepts a scalar or an array of parameters; ``eval`` returns a
    validated ``Point``.
    """

    kind = "abstract"

    def __init__(self, manifold, start: Point, velocity: TangentVector):
        if velocity.base is not start and not start.same_as(velocity.base):
            raise BaseMismatchError("initial velocity is not based at the geodesic start point")
        self.manifold = manifold
        self.start = start
        self.velocity = velocity
        self._x0 = start.coords
        self._v0 = velocity.components

    def eval(self, t) -> Point:
        return Point(self.coords_at(float(t)), self.manifold)

    def coords_at(self, t):
        raise NotImplementedError

    def velocity_at(self, t) -> TangentVector:
        return TangentVector(self.eval(t), self.velocity_coords_at(float(t)))

    def velocity_coords_at(self, t):
        raise NotImplementedError

    def transport_coords(self, s, t, w):
        raise NotImplementedError

    def speed(self):
        return float(self.manifold.norm(self._x0, self._v0))

    def __call__(self, t):
        return self.coords_at(t)


class ClosedFormGeodesic(GeodesicHandle):
    kind = "closed-form"

    def coords_at(self, t):
        if np.ndim(t) == 0 and t == 0:
            return np.array(self._x0)
        out = self.manifold.geodesic_point(self._x0, self._v0, t)
        if not np.all(self.manifold.contains(out)):
            raise DomainExitError("geodesic left the Poincare ball", t=float(np.max(t)))
        return out

    def velocity_coords_at(self, t):
        return self.manifold.transport_coords(self._x0, self.coords_at(t), self._v0)

    def transport_coords(self, s, t, w):
        if s == t:
            return np.array(w, dtype=float)
        return self.manifold.transport_coords(self.coords_at(s), self.coords_at(t), w)


class OdeGeodesic(GeodesicHandle):
    """RK4-integrated geodesic with a cached node trajectory on [0, 1]."""

    kind = "ode"

    def __init__(self, manifold, start, velocity):
        super().__init__(manifold, start, velocity)
        self.steps = manifold.tol.ode_steps
        xs, vs, _ = manifold.advance(self._x0, self._v0, duration=1.0, steps=self.steps, record=True)
        xs.setflags(write=False)
        vs.setflags(write=False)
        self.nodes = np.linspace(0.0, 1.0, self.steps + 1)
        self.xs = xs
        self.vs = vs

    def _state(self, t):
        k = int(np.clip(np.floor(t * self.steps + 1e-12), 0, self.steps))
        dt = t - self.nodes[k]
        x, v = self.xs[k], self.vs[k]
        if abs(dt) < 1e-15:
            return np.array(x), np.array(v)
        x, v, _ = self.manifold.advance(x, v, t0=self.nodes[k], duration=dt)
        return x, v

    def coords_at(self, t):
        if np.ndim(t):
            return np.stack([self._state(float(s))[0] for s in np.ravel(t)]).reshape(np.shape(t) + (-1,))
        return self._state(float(t))[0]

    def velocity_coords_at(self, t):
        return self._state(float(t))[1]

    def transport_coords(self, s, t, w):
        w = np.asarray(w, dtype=float)
        if s == t:
            return np.array(w)
        x, v = self._state(float(s))
        _, _, out = self.manifold.advance(x, v, w[None, :], t0=s, duration=t - s)
        return out[0]


# ---------------------------------------------------------------------------
# module-level operations


def _as_point(m, p):
    return p if isinstance(p, Point) else m.point(p)


def metric_eval(m: Manifold, p) -> np.ndarray:
    p = _as_point(m, p)
    return m.metric(p.coords)


def _check_base(p, *vectors):
    for v in vectors:
        if v.base is not p and not p.same_as(v.base):
            raise BaseMismatchError(
                f"tangent vector based at {v.base.coords.tolist()}, expected {p.coords.tolist()}"
            )


def inner(m: Manifold, p, u: TangentVector, v: TangentVector) -> float:
    p = _as_point(m, p)
    _check_base(p, u, v)
    return float(m.inner_coords(p.coords, u.components, v.components))


def curve_length(m: Manifold, curve, a: float, b: float, tol: Tolerances | None = None) -> float:
    """Length of ``curve`` on ``[a, b]`` by adaptive quadrature.

    ``curve`` maps a parameter to chart coordinates (or a ``Point``). A
    ``GeodesicHandle`` contributes its exact velocity; other curves are
    differentiated numerically.
    """
    tol = tol or m.tol
    if a > b:
        raise ParameterOrderError(f"curve_length needs a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0

    def pos(t):
        c = curve(t)
        return c.coords if isinstance(c, Point) else np.asarray(c, dtype=float)

    if isinstance(curve, GeodesicHandle):
        def speed(t):
            return float(m.norm(curve.coords_at(t), curve.velocity_coords_at(t)))
    else:
        h0 = 1e-6 * (b - a)

        def speed(t):
            if t - a >= h0 and b - t >= h0:
                d = (pos(t + h0) - pos(t - h0)) / (2 * h0)
            elif t - a < h0:
                d = (-3 * pos(t) + 4 * pos(t + h0) - pos(t + 2 * h0)) / (2 * h0)
            else:
                d = (3 * pos(t) - 4 * pos(t - h0) + pos(t - 2 * h0)) / (2 * h0)
            return float(m.norm(pos(t), d))

    value, _ = integrate.quad(speed, a, b, epsabs=tol.quad * 1e-3, epsrel=1e-10, limit=200)
    return float(value)


def solve_geodesic(m: Manifold, p, v: TangentVector) -> GeodesicHandle:
    p = _as_point(m, p)
    _check_base(p, v)
    return m.geodesic(p, v)


def exp_map(m: Manifold, p, v: TangentVector) -> Point:
    p = _as_point(m, p)
    _check_base(p, v)
    if m.closed_form:
        out = m.exp(p.coords, v.components)
        if not np.all(m.contains(out)):
            raise DomainExitError("exp left the chart domain", t=1.0)
        return Point(out, m)
    return Point(m.geodesic_point(p.coords, v.components, 1.0), m)


def log_map(m: Manifold, p, q) -> TangentVector:
    if not m.has_log:
        raise UnsupportedInverseError(
            f"log map is only guaranteed on the built-in Hadamard models, not on {m.kind}"
        )
    p = _as_point(m, p)
    q = _as_point(m, q)
    return TangentVector(p, m.log(p.coords, q.coords))


def distance(m: Manifold, p, q) -> float:
    p = _as_point(m, p)
    q = _as_point(m, q)
    return float(m.dist(p.coords, q.coords))


def parallel_transport(m: Manifold, geo: GeodesicHandle, s: float, t: float, v: TangentVector) -> TangentVector:
    for name, val in (("s", s), ("t", t)):
        if not 0.0 <= val <= 1.0:
            raise ParameterOrderError(f"transport parameter {name}={val} outside [0, 1]")
    here = geo.coords_at(s)
    if not np.allclose(v.base.coords, here, rtol=0.0, atol=1e-12):
        raise BaseMismatchError(
            f"vector based at {v.base.coords.tolist()}, geodesic is at {np.asarray(here).tolist()} for s={s}"
        )
    if s == t:
        return v
    return TangentVector(geo.eval(t), geo.transport_coords(s, t, v.components))


def _call_scalar(f, x):
    try:
        val = f(x)
    except GeoInvexError as exc:
        raise EvaluationError(f"function could not be evaluated at {np.asarray(x).tolist()}: {exc}") from exc
    val = float(val)
    if not math.isfinite(val):
        raise EvaluationError(f"function is not finite at {np.asarray(x).tolist()}")
    return val


def differential(m: Manifold, f, p, v: TangentVector, h: float | None = None) -> float:
    """df_p(v): central difference of ``f`` along the geodesic through ``p``.

    ``f`` takes chart coordinates and returns a real.
    """
    p = _as_point(m, p)
    _check_base(p, v)
    h = h or m.tol.fd_step
    if not np.any(v.components):
        return 0.0
    try:
        fwd = m.geodesic_point(p.coords, v.components, h)
        bwd = m.geodesic_point(p.coords, v.components, -h)
    except DomainExitError as exc:
        raise EvaluationError(f"finite-difference stencil left the domain at {p.coords.tolist()}") from exc
    return (_call_scalar(f, fwd) - _call_scalar(f, bwd)) / (2.0 * h)


def gradient(m: Manifold, f, p, h: float | None = None) -> TangentVector:
    """Riemannian gradient g^{ij} df/dx_j with central-difference partials."""
    p = _as_point(m, p)
    h = h or m.tol.fd_step
    x = p.coords
    partials = np.empty(m.dim)
    for i in range(m.dim):
        e = np.zeros(m.dim)
        e[i] = h
        partials[i] = (_call_scalar(f, x + e) - _call_scalar(f, x - e)) / (2.0 * h)
    return TangentVector(p, np.linalg.solve(m.metric(x), partials))
