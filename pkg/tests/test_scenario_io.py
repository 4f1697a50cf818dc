"""Scenario files: strict schema, located diagnostics, shipped library."""

import textwrap

import pytest

from geoinvex.errors import ScenarioError
from geoinvex.scenario_io import builtin_names, load_builtin, load_text, resolve

BASE = textwrap.dedent(
    """\
    name: tiny
    manifold: {kind: euclidean, dimension: 2}
    set:
      balls:
        - {center: [0, 0], radius: 1}
    maps:
      E: {kind: identity}
      eta: {kind: log}
      alpha: {kind: constant, value: 1}
    functions:
      sq: "x[0]^2 + x[1]^2"
    sampler: {seed: 1, samples: 10, t_grid: 5}
    """
)


def diagnostics(text):
    with pytest.raises(ScenarioError) as info:
        load_text(text)
    return info.value.diagnostics


def test_minimal_document():
    ls = load_text(BASE)
    assert ls.scenario.name == "tiny"
    assert set(ls.scenario.functions) == {"sq"}
    assert ls.scenario.sampler.samples == 10
    assert len(ls.digest) == 64


def test_digest_tracks_content():
    assert load_text(BASE).digest == load_text(BASE).digest
    assert load_text(BASE).digest != load_text(BASE.replace("seed: 1", "seed: 2")).digest


def test_unknown_key_located():
    text = BASE.replace("manifold: {kind: euclidean, dimension: 2}",
                        "manifold:\n  kind: euclidean\n  dimension: 2\n  metric2: 1")
    diags = diagnostics(text)
    assert any("metric2" in d.message and d.line == 5 for d in diags)


def test_zero_alpha_constant():
    diags = diagnostics(BASE.replace("alpha: {kind: constant, value: 1}", "alpha: {kind: expression, expr: \"0\"}"))
    assert any("alpha may evaluate to zero" in d.message for d in diags)


def test_zero_alpha_sampled():
    diags = diagnostics(BASE.replace("alpha: {kind: constant, value: 1}",
                                     "alpha: {kind: expression, expr: \"x[0] - x[0]\"}"))
    assert any("alpha may evaluate to zero" in d.message for d in diags)


def test_expression_syntax_error_located():
    diags = diagnostics(BASE.replace('sq: "x[0]^2 + x[1]^2"', 'sq: "x[0] +"'))
    (d,) = diags
    assert d.line == 11 and "column 7" in d.message


def test_all_expressions_parse_first():
    text = BASE.replace('sq: "x[0]^2 + x[1]^2"', 'sq: "x[0] +"\n  bad: "foo(x)"')
    assert len(diagnostics(text)) == 2


def test_wrong_types():
    diags = diagnostics(BASE.replace("dimension: 2", "dimension: two"))
    assert diags and diags[0].line == 2


def test_ball_dimension_mismatch():
    diags = diagnostics(BASE.replace("center: [0, 0]", "center: [0, 0, 0]"))
    assert any("expected 2 coordinates" in d.message and d.line == 5 for d in diags)


def test_invalid_sampler():
    diags = diagnostics(BASE.replace("samples: 10", "samples: 0"))
    assert any("invalid configuration" in d.message for d in diags)


def test_tolerance_overrides():
    ls = load_text(BASE + "tolerances: {ineq: 1e-6}\n", tol_overrides={"cond": 1e-4})
    assert ls.scenario.tol.ineq == 1e-6 and ls.scenario.tol.cond == 1e-4
    assert diagnostics(BASE + "tolerances: {nope: 1}\n")


def test_yaml_error_located():
    diags = diagnostics("name: [unclosed\n")
    assert diags[0].line is not None


def test_theorem_section_validated():
    text = BASE + "theorems:\n  - {id: T4.2, function: missing}\n"
    assert any("missing" in d.message for d in diagnostics(text))


def test_library_size_and_loading():
    names = builtin_names()
    assert len(names) >= 6
    kinds = set()
    for name in names:
        ls = load_builtin(name)
        kinds.add(ls.scenario.manifold.kind)
    assert {"euclidean", "poincare", "custom"} <= kinds


def test_resolve_by_name_and_path(tmp_path):
    assert resolve("example31").scenario.name == "example31"
    p = tmp_path / "tiny.yaml"
    p.write_text(BASE)
    assert resolve(str(p)).scenario.name == "tiny"
    with pytest.raises(ScenarioError):
        resolve(str(tmp_path / "absent.yaml"))
