"""Empirical stress tests for the lower-section, preinvex/invex, composition,
supremum and infimum results, plus counterexample search and the two-ball
Cartan-Hadamard construction.

Every theorem test first checks its hypotheses on the scenario. A case whose
hypotheses fail is reported as SKIPPED-HYPOTHESIS and never as a failure.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from geoinvex import dsl
from geoinvex.engine import (
    STREAM_ANCHORS,
    STREAM_AUX,
    STREAM_INF_Q,
    STREAM_SEARCH,
    BallUnion,
    CheckReport,
    InvexityScenario,
    ViolationWitness,
    _family,
    check_condition_C_sampled,
    check_invex_function,
    check_invex_set,
    check_preinvex,
    cancellation_norm,
    evaluate_witness,
    lower_section,
    sample_pair,
    sample_pairs,
    sub_rng,
)
from geoinvex.errors import ConstructionError, EmptySetError, GeoInvexError
from geoinvex.geometry import PoincareBall, differential, Point, TangentVector
from geoinvex.maps import ConstantAlpha, GeodesicProjectionE, PiecewiseBallsEta

PASS = "PASS"
FAIL = "FAIL"
SKIPPED = "SKIPPED-HYPOTHESIS"
APPROX_PASS = "APPROXIMATE-PASS"

THEOREM_ORDER = ("P4.1", "T4.2", "T4.3", "T4.4", "T4.5", "T4.6")

DQ_STEPS = (1e-2, 1e-3, 1e-4)
DQ_NOISE = 1e-3
DQ_SHRINK = 0.1
DQ_PAIRS = 10
CONDITION_C_PAIRS = 20
PHI_GRID = 101
INF_ANCHORS = 5
INF_Q_SIZE = 200
GOLDEN_ITERATIONS = 40


@dataclass
class CaseResult:
    theorem: str
    label: str
    status: str
    hypotheses: list = field(default_factory=list)
    conclusions: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self, timing=False):
        return {
            "theorem": self.theorem,
            "label": self.label,
            "status": self.status,
            "hypotheses": [r.to_dict(timing) for r in self.hypotheses],
            "conclusions": [r.to_dict(timing) for r in self.conclusions],
            "notes": list(self.notes),
        }


def _verdict(theorem, label, hypotheses, conclusions, notes=()):
    if not all(r.passed for r in hypotheses):
        status = SKIPPED
    elif not all(r.passed for r in conclusions):
        status = FAIL
    elif any(r.approximate for r in conclusions):
        status = APPROX_PASS
    else:
        status = PASS
    return CaseResult(theorem, label, status, list(hypotheses), list(conclusions) if status != SKIPPED else [],
                      list(notes))


def _skipped(theorem, label, hypotheses, notes=()):
    return CaseResult(theorem, label, SKIPPED, list(hypotheses), [], list(notes))


# ---------------------------------------------------------------------------
# derived functions


class ComposedFunction:
    def __init__(self, outer, inner, name):
        self.outer = outer
        self.inner = inner
        self.source = name

    def __call__(self, X):
        return self.outer(np.asarray(self.inner(X), float))


class MaxFunction:
    def __init__(self, fns, name):
        self.fns = list(fns)
        self.source = name

    def __call__(self, X):
        out = np.asarray(self.fns[0](X), float)
        for f in self.fns[1:]:
            out = np.maximum(out, np.asarray(f(X), float))
        return out


class InfOverSample:
    """p -> min over a fixed finite sample Q of F(p, q)."""

    def __init__(self, F_ast, manifold, Q, name):
        self.ast = F_ast
        self.manifold = manifold
        self.Q = np.asarray(Q, float)
        self.source = name

    def __call__(self, X):
        X = np.asarray(X, float)
        vals = dsl.eval_scalar(self.ast, {"p": X[..., None, :], "q": self.Q}, self.manifold)
        return np.min(np.asarray(vals, float), axis=-1)


def _scalar_fn(ast, var):
    def fn(u):
        return np.asarray(dsl.eval_scalar(ast, {var: np.asarray(u, float)}), float)

    return fn


def function_range(sc, f, count=None):
    """Min/max of f over E-images and family-geodesic points of sampled pairs."""
    ts = sc.sampler.ts()
    lo, hi = math.inf, -math.inf
    for x, y in sample_pairs(sc, count):
        fam = _family(sc, x, y)
        vals = np.concatenate([np.atleast_1d(f(fam.geodesic.coords_at(ts))), [f(fam.Ex), f(fam.Ey)]])
        lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
    return lo, hi


# ---------------------------------------------------------------------------
# theorem tests


def test_lower_sections(sc, fname, levels, label=None):
    """Sublevel sets of a preinvex function are (alpha, E)-invex sets."""
    label = label or f"{sc.name}:{fname}"
    hyps = [check_invex_set(sc), check_preinvex(sc, fname)]
    if not all(r.passed for r in hyps):
        return _skipped("P4.1", label, hyps)
    conclusions, notes = [], []
    for level in levels:
        sub = lower_section(sc, fname, level)
        try:
            rep = check_invex_set(sub)
        except EmptySetError:
            notes.append(f"level {level:g}: lower section empty, skipped")
            continue
        rep.notes.append(f"level={level:g}")
        rep.function = fname
        conclusions.append(rep)
    return _verdict("P4.1", label, hyps, conclusions, notes)


def difference_quotient_report(sc, fname, count=DQ_PAIRS, steps=DQ_STEPS, noise=DQ_NOISE):
    """[f(gamma(t)) - f(E(y))] / t approaches df_{E(y)}(alpha eta) as t shrinks.

    Per pair, the errors at the decreasing steps must be non-increasing up to
    ``noise`` and the last error must be at most ``noise + DQ_SHRINK * first``.
    """
    start = time.perf_counter()
    f = sc.function(fname)
    m = sc.manifold
    worst, found = -math.inf, []
    for i, (x, y) in enumerate(sample_pairs(sc, count, stream=STREAM_AUX)):
        fam = _family(sc, x, y)
        base = Point(fam.Ey, m)
        target = differential(m, f, base, TangentVector(base, fam.velocity))
        f0 = float(f(fam.Ey))
        errs = [abs((float(f(fam.geodesic.coords_at(t))) - f0) / t - target) for t in steps]
        # monotone within noise, and shrinking: a plateau means the quotient has the wrong limit
        monotone = [errs[k + 1] - errs[k] - noise for k in range(len(errs) - 1)]
        shrink = errs[-1] - noise - DQ_SHRINK * errs[0]
        excess = max(monotone + [shrink])
        worst = max(worst, excess)
        if excess > 0:
            found.append(ViolationWitness("difference-quotient", list(x), list(y), steps[-1], errs[-1], target,
                                          excess, function=fname, index=i))
    return CheckReport("difference-quotient", count, found[:20], len(found), worst, noise, function=fname,
                       wall_time=time.perf_counter() - start)


def test_preinvex_implies_invex(sc, fname, label=None):
    label = label or f"{sc.name}:{fname}"
    hyps = [check_preinvex(sc, fname)]
    if not hyps[0].passed:
        return _skipped("T4.2", label, hyps)
    return _verdict("T4.2", label, hyps, [check_invex_function(sc, fname), difference_quotient_report(sc, fname)])


def cancellation_report(sc, count=CONDITION_C_PAIRS):
    """Norm of t*alpha*eta(E(x), q) + (1-t)*alpha*eta(E(y), q) at q = gamma(t)."""
    start = time.perf_counter()
    tol = sc.tol.cond
    worst, found = -math.inf, []
    for i, (x, y) in enumerate(sample_pairs(sc, count)):
        fam = _family(sc, x, y)
        for t in sc.sampler.ts():
            val = cancellation_norm(sc, fam, float(t))
            worst = max(worst, val)
            if val > tol:
                found.append(ViolationWitness("cancellation", list(x), list(y), float(t), val, 0.0, val, index=i))
                break
    return CheckReport("cancellation", count * sc.sampler.t_grid, found[:20], len(found), worst, tol,
                       wall_time=time.perf_counter() - start)


def test_invex_plus_C_implies_preinvex(sc, fname, label=None):
    label = label or f"{sc.name}:{fname}"
    hyps = [check_invex_function(sc, fname), check_condition_C_sampled(sc, CONDITION_C_PAIRS)]
    if not all(r.passed for r in hyps):
        return _skipped("T4.3", label, hyps)
    return _verdict("T4.3", label, hyps, [check_preinvex(sc, fname), cancellation_report(sc)])


def phi_report(phi, lo, hi, grid=PHI_GRID, tol=1e-9):
    """phi increasing and convex on [lo, hi] by a 1-D grid check."""
    start = time.perf_counter()
    us = np.linspace(lo, hi, grid)
    vals = np.asarray(phi(us), float) * np.ones_like(us)
    scale = max(1.0, float(np.max(np.abs(vals))))
    d1 = np.diff(vals)
    d2 = np.diff(vals, 2)
    dec = -float(np.min(d1)) if d1.size else 0.0
    conc = -float(np.min(d2)) if d2.size else 0.0
    worst = max(dec, conc) / scale
    found = []
    if dec / scale > tol:
        k = int(np.argmin(d1))
        found.append(ViolationWitness("phi-increasing", [us[k]], [us[k + 1]], None, vals[k], vals[k + 1],
                                      dec / scale))
    if conc / scale > tol:
        k = int(np.argmin(d2))
        found.append(ViolationWitness("phi-convex", [us[k]], [us[k + 2]], None, vals[k + 1],
                                      0.5 * (vals[k] + vals[k + 2]), conc / scale))
    rep = CheckReport("phi-increasing-convex", grid, found, len(found), worst, tol,
                      wall_time=time.perf_counter() - start)
    rep.notes.append(f"range=[{lo:.6g}, {hi:.6g}]")
    return rep


def test_composition(sc, fname, phi_src, label=None):
    """phi o f is preinvex for preinvex f and increasing convex phi."""
    label = label or f"{sc.name}:{phi_src}∘{fname}"
    phi_ast = dsl.parse(phi_src, variables={"u"}) if isinstance(phi_src, str) else phi_src
    phi = _scalar_fn(phi_ast, "u")
    f = sc.function(fname)
    hyps = [check_preinvex(sc, fname)]
    if hyps[0].passed:
        lo, hi = function_range(sc, f)
        hyps.append(phi_report(phi, lo, hi))
    if not all(r.passed for r in hyps):
        return _skipped("T4.4", label, hyps)
    name = f"phi({fname})"
    comp = sc.with_functions(**{name: ComposedFunction(phi, f, f"{dsl.unparse(phi_ast)} o {fname}")})
    return _verdict("T4.4", label, hyps, [check_preinvex(comp, name)])


def test_sup_family(sc, fnames, label=None):
    """Pointwise max of a finite preinvex family is preinvex."""
    label = label or f"{sc.name}:sup({','.join(fnames)})"
    hyps = [check_preinvex(sc, fn) for fn in fnames]
    if not all(r.passed for r in hyps):
        return _skipped("T4.5", label, hyps)
    name = f"sup({','.join(fnames)})"
    sup = sc.with_functions(**{name: MaxFunction([sc.function(fn) for fn in fnames], name)})
    rep = check_preinvex(sup, name)
    rep.notes.append("finite family")
    return _verdict("T4.5", label, hyps, [rep])


def inf_sample(sc, size=INF_Q_SIZE):
    """Fixed low-discrepancy q-sample of S (Halton in the sampling box, filtered by membership)."""
    box = sc.sample_box()
    lo, hi = box[:, 0], box[:, 1]
    seed = int(sub_rng(sc.sampler.seed, STREAM_INF_Q, 0).integers(2**31))
    halton = qmc.Halton(d=sc.manifold.dim, scramble=True, seed=seed)
    out = []
    drawn = 0
    while len(out) < size:
        cand = lo + (hi - lo) * halton.random(256)
        drawn += 256
        out.extend(cand[sc.contains(cand)])
        if drawn > 10_000 * size:
            raise EmptySetError("could not fill the infimum sample from the set")
    return np.array(out[:size])


def test_inf_bivariate(sc, F_src, exact_src=None, label=None, q_size=INF_Q_SIZE):
    """p -> inf_q F(p, q) is preinvex when F is preinvex in each variable.

    The infimum runs over a fixed finite sample Q of S, so the conclusion is
    checked with the extra allowance ``tol.inf`` and labelled approximate.
    """
    label = label or f"{sc.name}:inf_q {F_src}"
    F_ast = dsl.parse(F_src, variables={"p", "q"}) if isinstance(F_src, str) else F_src
    m = sc.manifold
    anchors = []
    rng = sub_rng(sc.sampler.seed, STREAM_ANCHORS, 0)
    from geoinvex.engine import sample_point

    for _ in range(INF_ANCHORS):
        anchors.append(sample_point(sc, rng))
    fns = {}
    for k, a in enumerate(anchors):
        fns[f"F(.,a{k})"] = dsl.ExprFunction(F_ast, m, var="p", fixed={"q": a})
        fns[f"F(a{k},.)"] = dsl.ExprFunction(F_ast, m, var="q", fixed={"p": a})
    hsc = sc.with_functions(**fns)
    hyps = [check_preinvex(hsc, name) for name in fns]
    if not all(r.passed for r in hyps):
        return _skipped("T4.6", label, hyps)
    Q = inf_sample(sc, q_size)
    name = "inf_q F"
    fhat = InfOverSample(F_ast, m, Q, f"min over |Q|={len(Q)} of {dsl.unparse(F_ast)}")
    csc = sc.with_functions(**{name: fhat})
    conclusions = [check_preinvex(csc, name, extra_tol=sc.tol.inf, approximate=True)]
    if exact_src is not None:
        exact_ast = dsl.parse(exact_src, variables={"p"}) if isinstance(exact_src, str) else exact_src
        conclusions.append(inf_accuracy_report(sc, fhat, dsl.ExprFunction(exact_ast, m, var="p")))
    return _verdict("T4.6", label, hyps, conclusions, [f"|Q|={len(Q)}, INF_TOL={sc.tol.inf:g}"])


def inf_accuracy_report(sc, fhat, exact, count=None):
    """|f_hat(p) - exact(p)| over sampled points, tolerance tol.inf."""
    start = time.perf_counter()
    pts = np.array([p for pair in sample_pairs(sc, count) for p in pair])
    err = np.abs(np.asarray(fhat(pts), float) - np.asarray(exact(pts), float))
    tol = sc.tol.inf
    bad = np.nonzero(err > tol)[0]
    found = [ViolationWitness("inf-accuracy", list(pts[k]), list(pts[k]), None, float(fhat(pts[k])),
                              float(exact(pts[k])), float(err[k]), index=int(k)) for k in bad[:20]]
    rep = CheckReport("inf-accuracy", len(pts), found, len(bad), float(err.max()), tol, approximate=True,
                      wall_time=time.perf_counter() - start)
    rep.notes.append(f"exact={exact.source}")
    return rep


# ---------------------------------------------------------------------------
# theorem cases from scenario data


def run_case(sc, case):
    tid = case["id"]
    if tid == "P4.1":
        return test_lower_sections(sc, case["function"], case["levels"])
    if tid == "T4.2":
        return test_preinvex_implies_invex(sc, case["function"])
    if tid == "T4.3":
        return test_invex_plus_C_implies_preinvex(sc, case["function"])
    if tid == "T4.4":
        return test_composition(sc, case["function"], case["phi"])
    if tid == "T4.5":
        return test_sup_family(sc, case["functions"])
    if tid == "T4.6":
        return test_inf_bivariate(sc, case["F"], case.get("exact"))
    raise GeoInvexError(f"unknown theorem id {tid!r}")


def default_cases(sc):
    """Cases for a scenario file without a ``theorems`` section."""
    cases = []
    for name in sorted(sc.functions):
        cases.append({"id": "T4.2", "function": name})
        cases.append({"id": "T4.3", "function": name})
    if len(sc.functions) > 1:
        cases.append({"id": "T4.5", "functions": sorted(sc.functions)})
    return cases


SUITES = {
    "canonical-euclidean": ("euclidean-canonical", "euclidean-line"),
    "hyperbolic": ("hyperbolic-canonical", "hyperbolic-scaled", "example31"),
    "example31": ("example31",),
}
SUITES["all"] = SUITES["canonical-euclidean"] + SUITES["hyperbolic"]


def run_cases(loaded_list, workers=1):
    """Run every case of each (scenario, cases) pair; results sorted by theorem id.

    Cases are independent, so ``workers > 1`` runs them on a thread pool. The
    order of the result list does not depend on ``workers``.
    """
    jobs = [(sc, case) for sc, cases in loaded_list for case in (cases or default_cases(sc))]
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda job: run_case(*job), jobs))
    else:
        results = [run_case(sc, case) for sc, case in jobs]
    order = {t: i for i, t in enumerate(THEOREM_ORDER)}
    return sorted(results, key=lambda r: order[r.theorem])


def run_suite(name, workers=1, **load_kwargs):
    from geoinvex.scenario_io import load_builtin

    if name not in SUITES:
        raise GeoInvexError(f"unknown suite {name!r}; known suites: {', '.join(sorted(SUITES))}")
    loaded = [load_builtin(s, **load_kwargs) for s in SUITES[name]]
    return run_cases([(ls.scenario, ls.theorems) for ls in loaded], workers)


# ---------------------------------------------------------------------------
# counterexample search


@dataclass(frozen=True)
class SearchBudget:
    max_samples: int = 1000
    max_seconds: float = 30.0
    seed: int = 42

    def __post_init__(self):
        if not (self.max_samples > 0 and self.max_seconds > 0):
            raise GeoInvexError("search budget limits must be positive")


def golden_max(fn, a, b, iterations=GOLDEN_ITERATIONS):
    """Golden-section maximisation of ``fn`` on [a, b]; returns (argmax, value)."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iterations):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return (c, fc) if fc > fd else (d, fd)


def _refine(slack_at, grid):
    vals = [slack_at(float(t)) for t in grid]
    k = int(np.argmax(vals))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    t_ref, v_ref = golden_max(slack_at, float(lo), float(hi))
    return (t_ref, v_ref) if v_ref > vals[k] else (float(grid[k]), vals[k])


def search_counterexample(sc, predicate, budget=SearchBudget(), fname=None, coarse=17):
    """Random restarts over pairs, golden-section refinement of t (or s).

    Returns the maximal-slack violating witness, or None when nothing beyond
    tolerance turned up within the budget.
    """
    if predicate not in ("invex-set", "preinvex", "invex-function", "property-P", "condition-C"):
        raise GeoInvexError(f"unknown predicate {predicate!r}")
    if predicate in ("preinvex", "invex-function") and fname is None:
        if len(sc.functions) != 1:
            raise GeoInvexError(f"predicate {predicate} needs a function name")
        fname = next(iter(sc.functions))
    start = time.perf_counter()
    bsc = replace(sc, sampler=replace(sc.sampler, seed=budget.seed))
    grid = np.linspace(0.0, 1.0, coarse)
    best = None
    for i in range(budget.max_samples):
        if time.perf_counter() - start > budget.max_seconds:
            break
        x, y = sample_pair(bsc, i, STREAM_SEARCH)
        s_val = t_val = None
        if predicate in ("invex-set", "preinvex"):
            t_val, slack = _refine(lambda t: evaluate_witness(sc, predicate, x, y, t=t, fname=fname)[2], grid)
        elif predicate == "invex-function":
            slack = evaluate_witness(sc, predicate, x, y, fname=fname)[2]
        elif predicate == "condition-C":
            s_val, slack = _refine(lambda s: evaluate_witness(sc, predicate, x, y, s=s)[2], grid)
        else:
            coarse_pts = np.linspace(0.0, 1.0, 5)
            cands = [(evaluate_witness(sc, predicate, x, y, s=float(s), t=float(t))[2], float(s))
                     for s in coarse_pts for t in coarse_pts]
            s_val = max(cands)[1]
            t_val, slack = _refine(lambda t: evaluate_witness(sc, predicate, x, y, s=s_val, t=t)[2], grid)
        if best is None or slack > best.slack:
            lhs, rhs, slack, _ = evaluate_witness(sc, predicate, x, y, t=t_val, s=s_val, fname=fname)
            best = ViolationWitness(predicate, [float(v) for v in x], [float(v) for v in y], t_val, lhs, rhs, slack,
                                    s=s_val, function=fname, index=i)
    if best is None:
        return None
    tol = evaluate_witness(sc, predicate, best.x, best.y, t=best.t, s=best.s, fname=fname)[3]
    violated = best.slack >= 0.0 if predicate == "invex-set" else best.slack > tol
    return best if violated else None


# ---------------------------------------------------------------------------
# two disjoint balls in the Poincare ball


def build_example_31(x0, y0, r1, r2, alpha=None, E=None, eta=None, functions=None, sampler=None, tol=None):
    """Scenario on A = B(x0, r1) u B(y0, r2) in the Poincare disc.

    E projects onto the sphere of radius r1/2 about x0; eta is the log map for
    pairs in a common ball and zero otherwise.
    """
    m = PoincareBall(2) if tol is None else PoincareBall(2, tol)
    x0 = np.asarray(x0, float)
    y0 = np.asarray(y0, float)
    m.check_coords(x0)
    m.check_coords(y0)
    d = float(m.dist(x0, y0))
    if d == 0.0:
        raise ConstructionError("x0 and y0 must differ")
    for name, r in (("r1", r1), ("r2", r2)):
        if not 0 < r < d / 2:
            raise ConstructionError(f"need 0 < {name} < d(x0, y0)/2 = {d / 2:.6g}, got {name} = {r}")
    if not r1 + r2 < d:
        raise ConstructionError(f"balls intersect: r1 + r2 = {r1 + r2:.6g} >= d(x0, y0) = {d:.6g}")
    c1, c2 = tuple(float(v) for v in x0), tuple(float(v) for v in y0)
    kwargs = {}
    if sampler is not None:
        kwargs["sampler"] = sampler
    if tol is not None:
        kwargs["tol"] = tol
    fns = functions or {"sqx0": dsl.ExprFunction(f"sqdist(x, [{c1[0]!r}, {c1[1]!r}])", m)}
    return InvexityScenario(
        manifold=m,
        set=BallUnion(((c1, float(r1)), (c2, float(r2)))),
        E=E or GeodesicProjectionE(c1, r1 / 2.0),
        eta=eta or PiecewiseBallsEta(c1, float(r1), c2, float(r2)),
        alpha=alpha or ConstantAlpha(1.0),
        functions=fns,
        name="example31",
        **kwargs,
    )
