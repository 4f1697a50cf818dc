"""Sampling-based predicates for geodesic (alpha, E)-invexity.

A scenario bundles the manifold, an open set S, the maps E, eta, alpha and a
family of named scalar functions. Every check draws pairs (x, y) from S with a
per-index sub-seed, follows the family geodesic

    gamma(0) = E(y),  gamma'(0) = alpha(E(x), E(y)) * eta(E(x), E(y)),

and records witnesses for violated inequalities. Serial and threaded runs give
identical reports because each pair owns its random stream.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from geoinvex.config import DEFAULT_TOLERANCES, Tolerances
from geoinvex.errors import EmptySetError, GeoInvexError
from geoinvex.geometry import Euclidean, Point, TangentVector
from geoinvex.maps import ConstantAlpha, IdentityE, LogMapEta

MAX_REJECTIONS = 10_000
MAX_WITNESSES = 20

STREAM_PAIRS = 0
STREAM_ANCHORS = 1
STREAM_INF_Q = 2
STREAM_SEARCH = 3
STREAM_AUX = 4


# ---------------------------------------------------------------------------
# sets: a set is {x : margin(x) < 0}


@dataclass(frozen=True)
class BallUnion:
    """Union of open geodesic balls given as ((center, radius), ...)."""

    balls: tuple

    def margin(self, m, X):
        X = np.asarray(X, float)
        out = np.full(X.shape[:-1], np.inf)
        for c, r in self.balls:
            out = np.minimum(out, m.dist(np.asarray(c, float), X) - r)
        return out

    def box(self, m):
        boxes = [_ball_box(m, np.asarray(c, float), r) for c, r in self.balls]
        lo = np.min([b[:, 0] for b in boxes], axis=0)
        hi = np.max([b[:, 1] for b in boxes], axis=0)
        return np.stack([lo, hi], axis=1)

    def to_dict(self):
        return {"kind": "balls", "balls": [{"center": list(c), "radius": r} for c, r in self.balls]}


def _ball_box(m, c, r):
    if m.kind == "poincare":
        # hyperbolic balls are Euclidean balls symmetric about the line through 0 and c
        cn = np.linalg.norm(c)
        u = c / cn if cn > 0 else np.eye(m.dim)[0]
        ends = [m.exp(c, s * r * u / float(m.norm(c, u))) for s in (1.0, -1.0)]
        mid = 0.5 * (ends[0] + ends[1])
        rad = 0.5 * np.linalg.norm(ends[0] - ends[1]) * (1 + 1e-9)
        return np.stack([mid - rad, mid + rad], axis=1)
    if m.kind == "euclidean":
        return np.stack([c - r, c + r], axis=1)
    raise GeoInvexError(f"ball sets need a closed-form distance; {m.kind} has none")


@dataclass(frozen=True)
class ExpressionSet:
    """S = {x : g(x) < 0} inside a coordinate box."""

    fn: object
    box_bounds: tuple

    def margin(self, m, X):
        X = np.asarray(X, float)
        out = np.asarray(self.fn(X), float)
        lo, hi = np.asarray(self.box_bounds, float).T
        inside = np.all((X > lo) & (X < hi), axis=-1)
        return np.where(inside, out, np.inf)

    def box(self, m):
        return np.asarray(self.box_bounds, float)

    def to_dict(self):
        return {"kind": "expression", "expr": getattr(self.fn, "source", repr(self.fn)),
                "box": [list(b) for b in self.box_bounds]}


@dataclass(frozen=True)
class LowerSection:
    """{x in parent : f(x) <= level}; the comparison allows ``slack``."""

    parent: object
    fn: object
    level: float
    fname: str
    slack: float = 0.0

    def margin(self, m, X):
        base = self.parent.margin(m, X)
        inside = np.isfinite(base)
        vals = np.full(np.shape(base), np.inf)
        if np.any(inside):
            Xa = np.asarray(X, float)
            if Xa.ndim == 1:
                vals = np.asarray(self.fn(Xa), float) - self.level - self.slack
            else:
                vals[inside] = np.asarray(self.fn(Xa[inside]), float) - self.level - self.slack
        return np.maximum(base, vals)

    def box(self, m):
        return self.parent.box(m)

    def to_dict(self):
        return {"kind": "lower_section", "parent": self.parent.to_dict(), "function": self.fname,
                "level": self.level}


def default_box(m, half_width=5.0):
    if m.kind == "poincare":
        return np.stack([-np.ones(m.dim), np.ones(m.dim)], axis=1)
    if getattr(m, "bounds", None) is not None:
        return np.asarray(m.bounds, float)
    return np.stack([-half_width * np.ones(m.dim), half_width * np.ones(m.dim)], axis=1)


# ---------------------------------------------------------------------------
# scenario


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 42
    samples: int = 500
    t_grid: int = 33

    def __post_init__(self):
        if self.samples < 1:
            raise GeoInvexError(f"sample count must be positive, got {self.samples}")
        if self.t_grid < 2:
            raise GeoInvexError(f"t-grid needs at least 2 points, got {self.t_grid}")

    def ts(self):
        return np.linspace(0.0, 1.0, self.t_grid)


@dataclass(frozen=True)
class InvexityScenario:
    manifold: object
    set: object
    E: object = IdentityE()
    eta: object = LogMapEta()
    alpha: object = ConstantAlpha(1.0)
    functions: dict = field(default_factory=dict)
    sampler: SamplerConfig = SamplerConfig()
    tol: Tolerances = DEFAULT_TOLERANCES
    name: str = "scenario"
    box: object = None

    def with_sampler(self, **kwargs):
        return replace(self, sampler=replace(self.sampler, **kwargs))

    def with_functions(self, **fns):
        return replace(self, functions={**self.functions, **fns})

    def sample_box(self):
        if self.box is not None:
            return np.asarray(self.box, float)
        return np.asarray(self.set.box(self.manifold), float)

    def contains(self, X):
        X = np.asarray(X, float)
        ok = np.asarray(self.manifold.contains(X))
        margin = np.full(X.shape[:-1], np.inf)
        if np.any(ok):
            if X.ndim == 1:
                margin = np.asarray(self.set.margin(self.manifold, X))
            else:
                margin[ok] = self.set.margin(self.manifold, X[ok])
        return ok & (margin < 0)

    def margin(self, X):
        X = np.asarray(X, float)
        ok = np.asarray(self.manifold.contains(X))
        if X.ndim == 1:
            return float(self.set.margin(self.manifold, X)) if ok else math.inf
        out = np.full(X.shape[:-1], np.inf)
        out[ok] = self.set.margin(self.manifold, X[ok])
        return out

    def function(self, fname):
        try:
            return self.functions[fname]
        except KeyError:
            raise GeoInvexError(
                f"unknown function {fname!r}; scenario defines {sorted(self.functions)}"
            ) from None

    def ineq_tol(self):
        return self.tol.ineq if self.manifold.closed_form else self.tol.ineq_fd


# ---------------------------------------------------------------------------
# sampling


def sub_rng(seed, stream, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


def sample_point(sc, rng, chunk=64):
    box = sc.sample_box()
    lo, hi = box[:, 0], box[:, 1]
    rejected = 0
    while rejected <= MAX_REJECTIONS:
        cand = lo + (hi - lo) * rng.random((chunk, sc.manifold.dim))
        ok = sc.contains(cand)
        if np.any(ok):
            k = int(np.argmax(ok))
            if rejected + k <= MAX_REJECTIONS:
                return cand[k]
            break
        rejected += chunk
    raise EmptySetError(
        f"no point of the set found in {MAX_REJECTIONS} rejections (scenario {sc.name!r}); the set may be empty"
    )


def sample_pair(sc, index, stream=STREAM_PAIRS):
    rng = sub_rng(sc.sampler.seed, stream, index)
    return sample_point(sc, rng), sample_point(sc, rng)


def sample_pairs(sc, count=None, stream=STREAM_PAIRS):
    count = sc.sampler.samples if count is None else count
    return [sample_pair(sc, i, stream) for i in range(count)]


def sample_points(sc, count, stream):
    rng = sub_rng(sc.sampler.seed, stream, 0)
    return np.array([sample_point(sc, rng) for _ in range(count)])


# ---------------------------------------------------------------------------
# reports


@dataclass
class ViolationWitness:
    predicate: str
    x: list
    y: list
    t: float | None
    lhs: float
    rhs: float
    slack: float
    s: float | None = None
    function: str | None = None
    index: int | None = None

    def to_dict(self):
        return {
            "predicate": self.predicate,
            "function": self.function,
            "index": self.index,
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
            "s": self.s,
            "t": self.t,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "slack": float(self.slack),
        }


@dataclass
class CheckReport:
    predicate: str
    samples: int
    violations: list
    violation_count: int
    max_slack: float
    tolerance: float
    function: str | None = None
    approximate: bool = False
    wall_time: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.violations

    @property
    def status(self):
        if not self.passed:
            return "FAIL"
        return "APPROXIMATE-PASS" if self.approximate else "PASS"

    def to_dict(self, timing=False):
        out = {
            "predicate": self.predicate,
            "function": self.function,
            "status": self.status,
            "samples": self.samples,
            "violation_count": self.violation_count,
            "max_slack": _finite_or_none(self.max_slack),
            "tolerance": self.tolerance,
            "approximate": self.approximate,
            "violations": [w.to_dict() for w in self.violations],
            "notes": list(self.notes),
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out

    def summary(self):
        name = self.predicate + (f"[{self.function}]" if self.function else "")
        return (
            f"{self.status:16s} {name:32s} samples={self.samples} violations={self.violation_count} "
            f"max_slack={self.max_slack:.3e} tol={self.tolerance:.1e}"
        )


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _run_pairs(sc, predicate, per_pair, pairs=None, tolerance=0.0, function=None, workers=None,
               approximate=False, notes=()):
    start = time.perf_counter()
    pairs = sample_pairs(sc) if pairs is None else pairs
    idx = range(len(pairs))
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda i: per_pair(i, *pairs[i]), idx))
    else:
        results = [per_pair(i, *pairs[i]) for i in idx]
    slacks = [r[0] for r in results]
    found = [r[1] for r in results if r[1] is not None]
    return CheckReport(
        predicate=predicate,
        samples=len(pairs),
        violations=found[:MAX_WITNESSES],
        violation_count=len(found),
        max_slack=float(max(slacks)) if slacks else -math.inf,
        tolerance=tolerance,
        function=function,
        approximate=approximate,
        wall_time=time.perf_counter() - start,
        notes=list(notes),
    )


# ---------------------------------------------------------------------------
# family geodesic


@dataclass
class FamilyGeodesic:
    Ex: np.ndarray
    Ey: np.ndarray
    alpha: float
    eta: np.ndarray
    geodesic: object

    @property
    def velocity(self):
        return self.alpha * self.eta


def _family(sc, x, y):
    m = sc.manifold
    Ex = sc.E.evaluate(m, np.asarray(getattr(x, "coords", x), float))
    Ey = sc.E.evaluate(m, np.asarray(getattr(y, "coords", y), float))
    a = sc.alpha.evaluate(m, Ex, Ey)
    eta = np.asarray(sc.eta.evaluate(m, Ex, Ey), float)
    start = Point(Ey, m)
    geo = m.geodesic(start, TangentVector(start, a * eta))
    return FamilyGeodesic(Ex, Ey, a, eta, geo)


def family_geodesic(sc, x, y):
    """gamma_{E(x),E(y)}: starts at E(y) with velocity alpha*eta at (E(x), E(y))."""
    return _family(sc, x, y).geodesic


# ---------------------------------------------------------------------------
# predicate kernels (shared by checks, replay and counterexample search)


def set_slack(sc, fam, t):
    return sc.margin(fam.geodesic.coords_at(t))


def preinvex_terms(sc, f, fam, t):
    lhs = np.asarray(f(fam.geodesic.coords_at(t)), float)
    rhs = t * float(f(fam.Ex)) + (1.0 - t) * float(f(fam.Ey))
    return lhs, rhs


def invex_terms(sc, f, fam):
    from geoinvex.geometry import differential

    m = sc.manifold
    start = Point(fam.Ey, m)
    lhs = differential(m, f, start, TangentVector(start, fam.velocity))
    rhs = float(f(fam.Ex)) - float(f(fam.Ey))
    return lhs, rhs


def property_p_deviation(sc, fam, s, t):
    m = sc.manifold
    geo = fam.geodesic
    gs = geo.coords_at(s)
    gt = geo.coords_at(t)
    lhs = (t - s) * geo.velocity_coords_at(s)
    rhs = sc.alpha.evaluate(m, gt, gs) * np.asarray(sc.eta.evaluate(m, gt, gs), float)
    return float(m.norm(gs, lhs - rhs)), float(m.norm(gs, lhs)), float(m.norm(gs, rhs))


def condition_c_deviation(sc, fam, s):
    """Deviations of both transport identities at parameter s (Riemannian norms at E(y))."""
    m = sc.manifold
    geo = fam.geodesic
    q = geo.coords_at(s)
    w = fam.velocity
    first = sc.alpha.evaluate(m, fam.Ey, q) * np.asarray(sc.eta.evaluate(m, fam.Ey, q), float)
    second = sc.alpha.evaluate(m, fam.Ex, q) * np.asarray(sc.eta.evaluate(m, fam.Ex, q), float)
    back1 = geo.transport_coords(s, 0.0, first)
    back2 = geo.transport_coords(s, 0.0, second)
    d1 = float(m.norm(fam.Ey, back1 + s * w))
    d2 = float(m.norm(fam.Ey, back2 - (1.0 - s) * w))
    return d1, d2


def cancellation_norm(sc, fam, t):
    """|t*alpha*eta(E(x), q) + (1-t)*alpha*eta(E(y), q)| at q = gamma(t)."""
    m = sc.manifold
    q = fam.geodesic.coords_at(t)
    vx = sc.alpha.evaluate(m, fam.Ex, q) * np.asarray(sc.eta.evaluate(m, fam.Ex, q), float)
    vy = sc.alpha.evaluate(m, fam.Ey, q) * np.asarray(sc.eta.evaluate(m, fam.Ey, q), float)
    return float(m.norm(q, t * vx + (1.0 - t) * vy))


# ---------------------------------------------------------------------------
# checks


def check_invex_set(sc, pairs=None, workers=None):
    """gamma_{E(x),E(y)}(t) in S for sampled pairs and the t-grid."""
    ts = sc.sampler.ts()

    def per_pair(i, x, y):
        fam = _family(sc, x, y)
        margins = np.asarray(sc.margin(fam.geodesic.coords_at(ts)), float)
        bad = np.nonzero(margins >= 0)[0]
        worst = float(np.max(margins))
        if bad.size == 0:
            return worst, None
        k = int(bad[0])
        return worst, ViolationWitness("invex-set", list(x), list(y), float(ts[k]), float(margins[k]), 0.0,
                                       float(margins[k]), index=i)

    return _run_pairs(sc, "invex-set", per_pair, pairs, tolerance=0.0, workers=workers)


def check_preinvex(sc, fname, pairs=None, extra_tol=0.0, workers=None, approximate=False):
    """f(gamma(t)) <= t f(E(x)) + (1 - t) f(E(y)) on sampled pairs and the t-grid."""
    f = sc.function(fname)
    ts = sc.sampler.ts()
    tol = sc.ineq_tol() + extra_tol

    def per_pair(i, x, y):
        fam = _family(sc, x, y)
        lhs, rhs = preinvex_terms(sc, f, fam, ts)
        slack = lhs - rhs
        k = int(np.argmax(slack))
        worst = float(slack[k])
        if worst <= tol:
            return worst, None
        return worst, ViolationWitness("preinvex", list(x), list(y), float(ts[k]), float(lhs[k]), float(rhs[k]),
                                       worst, function=fname, index=i)

    return _run_pairs(sc, "preinvex", per_pair, pairs, tolerance=tol, function=fname, workers=workers,
                      approximate=approximate)


def check_invex_function(sc, fname, pairs=None, extra_tol=0.0, workers=None, approximate=False):
    """f(E(x)) - f(E(y)) >= df_{E(y)}(alpha * eta) with df by central differences."""
    f = sc.function(fname)
    tol = sc.tol.ineq_fd + extra_tol

    def per_pair(i, x, y):
        fam = _family(sc, x, y)
        lhs, rhs = invex_terms(sc, f, fam)
        slack = lhs - rhs
        if slack <= tol:
            return slack, None
        return slack, ViolationWitness("invex-function", list(x), list(y), None, lhs, rhs, slack,
                                       function=fname, index=i)

    return _run_pairs(sc, "invex-function", per_pair, pairs, tolerance=tol, function=fname, workers=workers,
                      approximate=approximate)


def check_property_P(sc, x, y, grid=11):
    """(t - s) gamma'(s) == alpha(gamma(t), gamma(s)) eta(gamma(t), gamma(s)) on an (s, t) grid."""
    start = time.perf_counter()
    x = np.asarray(getattr(x, "coords", x), float)
    y = np.asarray(getattr(y, "coords", y), float)
    fam = _family(sc, x, y)
    grid_pts = np.linspace(0.0, 1.0, grid)
    tol = sc.tol.cond
    worst, witness, count = -math.inf, None, 0
    for s in grid_pts:
        for t in grid_pts:
            dev, lhs, rhs = property_p_deviation(sc, fam, float(s), float(t))
            if dev > worst:
                worst = dev
                if dev > tol:
                    witness = ViolationWitness("property-P", list(x), list(y), float(t), lhs, rhs, dev, s=float(s))
            if dev > tol:
                count += 1
    return CheckReport("property-P", grid * grid, [witness] if witness else [], count, worst, tol,
                       wall_time=time.perf_counter() - start)


def check_condition_C(sc, x, y, grid=None):
    """Both parallel-transport identities of Condition (C) on an s-grid."""
    start = time.perf_counter()
    x = np.asarray(getattr(x, "coords", x), float)
    y = np.asarray(getattr(y, "coords", y), float)
    fam = _family(sc, x, y)
    ss = sc.sampler.ts() if grid is None else np.linspace(0.0, 1.0, grid)
    tol = sc.tol.cond
    worst, witness, count = -math.inf, None, 0
    for s in ss:
        d1, d2 = condition_c_deviation(sc, fam, float(s))
        dev = max(d1, d2)
        if dev > worst:
            worst = dev
            if dev > tol:
                witness = ViolationWitness("condition-C", list(x), list(y), None, d1, d2, dev, s=float(s))
        if dev > tol:
            count += 1
    return CheckReport("condition-C", len(ss), [witness] if witness else [], count, worst, tol,
                       wall_time=time.perf_counter() - start)


def _sampled_pairwise(sc, name, check, count, **kwargs):
    start = time.perf_counter()
    reports = [check(sc, x, y, **kwargs) for x, y in sample_pairs(sc, count)]
    found = []
    for i, rep in enumerate(reports):
        for w in rep.violations:
            w.index = i
            found.append(w)
    return CheckReport(
        predicate=name,
        samples=sum(r.samples for r in reports),
        violations=found[:MAX_WITNESSES],
        violation_count=sum(r.violation_count for r in reports),
        max_slack=max(r.max_slack for r in reports),
        tolerance=sc.tol.cond,
        wall_time=time.perf_counter() - start,
    )


def check_property_P_sampled(sc, count=20, grid=11):
    return _sampled_pairwise(sc, "property-P", check_property_P, count, grid=grid)


def check_condition_C_sampled(sc, count=20, grid=None):
    return _sampled_pairwise(sc, "condition-C", check_condition_C, count, grid=grid)


def lower_section(sc, fname, level):
    """Scenario restricted to S_level = {x in S : f(x) <= level}."""
    f = sc.function(fname)
    sub = LowerSection(sc.set, f, float(level), fname, slack=sc.ineq_tol())
    return replace(sc, set=sub, name=f"{sc.name}|{fname}<={level:g}")


# ---------------------------------------------------------------------------
# single-point evaluation (replay and search)

PREDICATES = ("invex-set", "preinvex", "invex-function", "property-P", "condition-C")


def evaluate_witness(sc, predicate, x, y, t=None, s=None, fname=None):
    """Recompute (lhs, rhs, slack, tolerance) of one predicate instance."""
    fam = _family(sc, x, y)
    if predicate == "invex-set":
        margin = float(set_slack(sc, fam, float(t)))
        return margin, 0.0, margin, 0.0
    if predicate == "preinvex":
        lhs, rhs = preinvex_terms(sc, sc.function(fname), fam, float(t))
        return float(lhs), float(rhs), float(lhs - rhs), sc.ineq_tol()
    if predicate == "invex-function":
        lhs, rhs = invex_terms(sc, sc.function(fname), fam)
        return lhs, rhs, lhs - rhs, sc.tol.ineq_fd
    if predicate == "property-P":
        dev, lhs, rhs = property_p_deviation(sc, fam, float(s), float(t))
        return lhs, rhs, dev, sc.tol.cond
    if predicate == "condition-C":
        d1, d2 = condition_c_deviation(sc, fam, float(s))
        return d1, d2, max(d1, d2), sc.tol.cond
    raise GeoInvexError(f"unknown predicate {predicate!r}; expected one of {', '.join(PREDICATES)}")


def replay(sc, witness: ViolationWitness):
    """True when the witness still violates its predicate beyond tolerance."""
    _, _, slack, tol = evaluate_witness(
        sc, witness.predicate, witness.x, witness.y, t=witness.t, s=witness.s, fname=witness.function
    )
    if witness.predicate == "invex-set":
        return slack >= 0.0
    return slack > tol


def euclidean_scenario(dim, balls=(((0.0, 0.0), 1.0),), functions=None, **kwargs):
    """Convenience: Euclidean scenario with canonical maps over a ball union."""
    from geoinvex.dsl import ExprFunction

    m = Euclidean(dim)
    fns = {k: (ExprFunction(v, m) if isinstance(v, str) else v) for k, v in (functions or {}).items()}
    return InvexityScenario(manifold=m, set=BallUnion(tuple((tuple(c), r) for c, r in balls)), functions=fns,
                            **kwargs)
