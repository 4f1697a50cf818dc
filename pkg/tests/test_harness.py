"""Theorem harness, counterexample search and the two-ball construction."""

import math
from dataclasses import replace

import numpy as np
import pytest

from geoinvex import harness as H
from geoinvex.engine import (
    SamplerConfig,
    check_invex_set,
    euclidean_scenario,
    lower_section,
    replay,
    sample_pairs,
)
from geoinvex.errors import ConstructionError, GeoInvexError
from geoinvex.geometry import PoincareBall
from geoinvex.maps import ConstantAlpha, IdentityE, LogMapEta
from geoinvex.scenario_io import load_builtin

H2 = PoincareBall(2)
FNS = {"sq": "x[0]^2 + x[1]^2", "negsq": "-(x[0]^2 + x[1]^2)", "xpos": "x[0]", "xneg": "-x[0]"}


@pytest.fixture(scope="module")
def disc():
    return euclidean_scenario(2, functions=FNS, sampler=SamplerConfig(samples=200))


@pytest.fixture(scope="module")
def hyper():
    return load_builtin("hyperbolic-canonical", sampler_overrides={"samples": 200}).scenario


@pytest.fixture(scope="module")
def ex31():
    return H.build_example_31((-0.5, 0.0), (0.5, 0.0), 0.5, 0.5)


# ---------------------------------------------------------------------------
# lower sections


def test_lower_sections_euclidean():
    sc = euclidean_scenario(2, balls=(((0.0, 0.0), 2.0),), functions={"sq": FNS["sq"]},
                            sampler=SamplerConfig(samples=200))
    res = H.test_lower_sections(sc, "sq", [0.25, 1.0, 4.0])
    assert res.status == H.PASS and len(res.conclusions) == 3


def test_lower_section_empty_level_skipped(disc):
    res = H.test_lower_sections(disc, "sq", [-1.0, 0.5])
    assert res.status == H.PASS
    assert len(res.conclusions) == 1
    assert any("empty" in n for n in res.notes)


@pytest.mark.parametrize("level", [0.0625, 0.1])
def test_lower_sections_example31(ex31, level):
    res = H.test_lower_sections(ex31, "sqx0", [level])
    assert res.status == H.PASS


def test_lower_sections_example31_below_projection_radius(ex31):
    # E maps every point onto the sphere of radius r1/2 = 0.25 about x0, where
    # f = d(., x0)^2 equals 0.0625. Below that level the lower section contains
    # points whose E-image lies outside it, so the conclusion cannot hold with
    # E != id. This is recorded as a known gap, not a defect of the checker.
    res = H.test_lower_sections(ex31, "sqx0", [0.03])
    assert res.status == H.FAIL
    w = res.conclusions[0].violations[0]
    sub = lower_section(ex31, "sqx0", 0.03)
    assert replay(sub, w)
    assert sub.margin(ex31.E.evaluate(H2, np.array(w.y))) > 0


# ---------------------------------------------------------------------------
# preinvex => invex


def test_preinvex_implies_invex(disc, hyper):
    assert H.test_preinvex_implies_invex(disc, "sq").status == H.PASS
    assert H.test_preinvex_implies_invex(hyper, "sqd_a").status == H.PASS


def test_preinvex_implies_invex_skips_concave(disc):
    res = H.test_preinvex_implies_invex(disc, "negsq")
    assert res.status == H.SKIPPED and res.conclusions == []


def test_difference_quotient_converges(hyper):
    rep = H.difference_quotient_report(hyper, "coshd")
    assert rep.passed and rep.samples == 10


# ---------------------------------------------------------------------------
# invex + (C) => preinvex


def test_invex_plus_C(disc, hyper):
    res = H.test_invex_plus_C_implies_preinvex(disc, "sq")
    assert res.status == H.PASS
    cancel = [r for r in res.conclusions if r.predicate == "cancellation"][0]
    assert cancel.max_slack <= 1e-15  # zero up to rounding
    res = H.test_invex_plus_C_implies_preinvex(hyper, "sqd_a")
    assert res.status == H.PASS
    assert [r for r in res.conclusions if r.predicate == "cancellation"][0].max_slack <= 1e-6


def test_invex_plus_C_skips_without_invexity(disc):
    assert H.test_invex_plus_C_implies_preinvex(disc, "negsq").status == H.SKIPPED


# ---------------------------------------------------------------------------
# composition, supremum, infimum


@pytest.mark.parametrize("phi, status", [("u", H.PASS), ("exp(u)", H.PASS), ("-u", H.SKIPPED),
                                         ("-u^2", H.SKIPPED)])
def test_composition(disc, phi, status):
    assert H.test_composition(disc, "sq", phi).status == status


def test_phi_report_grid():
    rep = H.phi_report(lambda u: np.exp(u), 0.0, 1.0)
    assert rep.passed and rep.samples == 101
    assert not H.phi_report(lambda u: np.sin(6 * u), 0.0, 1.0).passed


def test_sup_family(disc, hyper):
    assert H.test_sup_family(disc, ["sq"]).status == H.PASS
    assert H.test_sup_family(disc, ["xpos", "xneg"]).status == H.PASS
    assert H.test_sup_family(hyper, ["sqd_a", "sqd_b"]).status == H.PASS
    assert H.test_sup_family(disc, ["sq", "negsq"]).status == H.SKIPPED


def test_inf_quadratic_matches_half_square():
    line = load_builtin("euclidean-line").scenario
    res = H.test_inf_bivariate(line, "(p[0] - q[0])^2 + q[0]^2", exact_src="p[0]^2 / 2")
    assert res.status == H.APPROX_PASS
    acc = [r for r in res.conclusions if r.predicate == "inf-accuracy"][0]
    assert acc.max_slack <= 1e-3


def test_inf_separable():
    line = load_builtin("euclidean-line").scenario
    res = H.test_inf_bivariate(line, "p[0]^2 + (q[0] - 0.3)^2", exact_src="p[0]^2")
    assert res.status == H.APPROX_PASS


def test_inf_sqdist_nearly_zero():
    line = load_builtin("euclidean-line").scenario
    res = H.test_inf_bivariate(line, "sqdist(p, q)", exact_src="0")
    assert res.status == H.APPROX_PASS


def test_inf_sample_deterministic(hyper):
    np.testing.assert_array_equal(H.inf_sample(hyper, 50), H.inf_sample(hyper, 50))
    assert np.all(hyper.contains(H.inf_sample(hyper, 50)))


def test_inf_skips_nonconvex_F(disc):
    res = H.test_inf_bivariate(disc, "-sqdist(p, q)")
    assert res.status == H.SKIPPED


# ---------------------------------------------------------------------------
# hypothesis gating over every shipped case


def test_gating_never_fails_with_bad_hypotheses():
    sc = euclidean_scenario(2, balls=(((-2.0, 0.0), 1.0), ((2.0, 0.0), 1.0)), functions={"sq": FNS["sq"]},
                            sampler=SamplerConfig(samples=100))
    res = H.test_lower_sections(sc, "sq", [1.0])
    assert res.status == H.SKIPPED


def test_run_cases_workers_independent():
    loaded = load_builtin("euclidean-canonical", sampler_overrides={"samples": 100})
    serial = H.run_cases([(loaded.scenario, loaded.theorems)])
    threaded = H.run_cases([(loaded.scenario, loaded.theorems)], workers=4)
    assert [r.to_dict() for r in serial] == [r.to_dict() for r in threaded]
    order = [H.THEOREM_ORDER.index(r.theorem) for r in serial]
    assert order == sorted(order)


def test_unknown_suite():
    with pytest.raises(GeoInvexError):
        H.run_suite("nope")


# ---------------------------------------------------------------------------
# counterexample search


def test_search_two_balls_cross_pair():
    sc = load_builtin("two-ball-global-eta").scenario
    w = H.search_counterexample(sc, "invex-set", H.SearchBudget(200, 30.0))
    assert w is not None and replay(sc, w)
    assert np.sign(w.x[0]) != np.sign(w.y[0])
    assert 0.2 < w.t < 0.8


def test_search_convex_none(disc):
    assert H.search_counterexample(disc, "preinvex", H.SearchBudget(200, 30.0), fname="sq") is None


def test_search_concave_slack():
    sc = euclidean_scenario(2, functions={"negsq": FNS["negsq"]})
    w = H.search_counterexample(sc, "preinvex", H.SearchBudget(1000, 30.0), fname="negsq")
    assert w is not None and w.slack >= 0.5
    # analytic slack t(1-t)|x-y|^2
    x, y = np.array(w.x), np.array(w.y)
    assert w.slack == pytest.approx(w.t * (1 - w.t) * np.sum((x - y) ** 2), abs=1e-12)
    assert replay(sc, w)


@pytest.mark.parametrize("predicate", ["property-P", "condition-C", "invex-function"])
def test_search_witnesses_replay(disc, predicate):
    sc = replace(disc, alpha=ConstantAlpha(2.0))
    w = H.search_counterexample(sc, predicate, H.SearchBudget(30, 30.0), fname="negsq")
    if w is not None:
        assert replay(sc, w)


def test_search_bad_predicate(disc):
    with pytest.raises(GeoInvexError):
        H.search_counterexample(disc, "bogus")


def test_golden_max():
    t, v = H.golden_max(lambda t: -(t - 0.3) ** 2, 0.0, 1.0)
    assert t == pytest.approx(0.3, abs=1e-6)


# ---------------------------------------------------------------------------
# two balls in the Poincare disc


def test_example31_passes(ex31):
    assert H2.dist([-0.5, 0], [0.5, 0]) == pytest.approx(2.1972, abs=1e-4)
    assert check_invex_set(ex31).passed


def test_example31_projection_invariant(ex31):
    for x, y in sample_pairs(ex31, 100):
        for p in (x, y):
            assert H2.dist([-0.5, 0.0], ex31.E.evaluate(H2, p)) == pytest.approx(0.25, abs=1e-7)


def test_example31_negative_control(ex31):
    neg = replace(ex31, E=IdentityE(), eta=LogMapEta())
    rep = check_invex_set(neg)
    assert not rep.passed
    w = rep.violations[0]
    assert np.sign(w.x[0]) != np.sign(w.y[0])
    assert replay(neg, w)


@pytest.mark.parametrize(
    "r1, r2, fragment",
    [(2 * math.log(3), 0.5, "r1 <"), (0.5, 1.2, "r2 <"), (0.0, 0.5, "0 < r1")],
)
def test_example31_preconditions(r1, r2, fragment):
    with pytest.raises(ConstructionError) as info:
        H.build_example_31((-0.5, 0.0), (0.5, 0.0), r1, r2)
    assert fragment in str(info.value)


def test_example31_rejects_equal_centres():
    with pytest.raises(ConstructionError):
        H.build_example_31((0.1, 0.0), (0.1, 0.0), 0.1, 0.1)
