"""Scenario files: YAML documents checked against a strict JSON Schema.

Diagnostics carry the line and column of the offending YAML node so that
``geoinvex validate`` can point at the exact spot.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from geoinvex import dsl
from geoinvex.config import Tolerances
from geoinvex.engine import BallUnion, ExpressionSet, InvexityScenario, SamplerConfig, default_box
from geoinvex.errors import DslSyntaxError, GeoInvexError, ScenarioError
from geoinvex.geometry import CustomMetric, Euclidean, PoincareBall
from geoinvex.maps import (
    ConstantAlpha,
    ExpressionAlpha,
    ExpressionE,
    ExpressionEta,
    GeodesicProjectionE,
    IdentityE,
    LogMapEta,
    PiecewiseBallsEta,
    ZeroEta,
)

_NUM = {"type": ["number", "string"]}
_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_BOX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}
_BALL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["center", "radius"],
    "properties": {"center": _VEC, "radius": {"type": "number", "exclusiveMinimum": 0}},
}
_EXPRS = {"type": "array", "items": {"type": "string"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["manifold", "set"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "manifold": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "dimension"],
            "properties": {
                "kind": {"enum": ["euclidean", "poincare", "custom"]},
                "dimension": {"type": "integer", "minimum": 1},
                "metric": {"type": "array", "items": _EXPRS},
                "bounds": _BOX,
                "domain": {"type": "string"},
            },
        },
        "set": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "balls": {"type": "array", "items": _BALL, "minItems": 1},
                "expr": {"type": "string"},
                "box": _BOX,
            },
            "oneOf": [{"required": ["balls"]}, {"required": ["expr"]}],
        },
        "maps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "E": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["identity", "projection", "expression"]},
                        "anchor": _VEC,
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "components": _EXPRS,
                    },
                },
                "eta": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["log", "zero", "piecewise_balls", "expression"]},
                        "scale": {"type": "number", "not": {"const": 0}},
                        "balls": {"type": "array", "items": _BALL, "minItems": 2, "maxItems": 2},
                        "components": _EXPRS,
                    },
                },
                "alpha": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["constant", "expression"]},
                        "value": {"type": "number"},
                        "expr": {"type": "string"},
                    },
                },
            },
        },
        "functions": {"type": "object", "additionalProperties": {"type": "string"}},
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer"},
                "t_grid": {"type": "integer"},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _NUM for k in Tolerances().as_dict()},
        },
        "theorems": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id"],
                "properties": {
                    "id": {"enum": ["P4.1", "T4.2", "T4.3", "T4.4", "T4.5", "T4.6"]},
                    "function": {"type": "string"},
                    "functions": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "levels": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    "phi": {"type": "string"},
                    "F": {"type": "string"},
                    "exact": {"type": "string"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int | None = None
    column: int | None = None
    path: str = ""

    def __str__(self):
        where = f"line {self.line}, column {self.column}" if self.line else "<document>"
        path = f" [{self.path}]" if self.path else ""
        return f"{where}{path}: {self.message}"


@dataclass
class LoadedScenario:
    scenario: InvexityScenario
    theorems: list
    digest: str
    source: dict
    path: str | None = None


# ---------------------------------------------------------------------------
# YAML node lookup


def _node_at(root, path):
    node = root
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    break
            else:
                return node
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            return node
    return node


def _key_node(mapping, key):
    if isinstance(mapping, yaml.MappingNode):
        for k, _ in mapping.value:
            if k.value == key:
                return k
    return None


def _loc(node):
    if node is None:
        return None, None
    return node.start_mark.line + 1, node.start_mark.column + 1


def _fmt_path(path):
    return ".".join(str(p) for p in path)


def _schema_diagnostics(data, root):
    out = []
    validator = jsonschema.Draft202012Validator(SCHEMA)
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        path = list(err.absolute_path)
        node = _node_at(root, path)
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            allowed = set(err.schema.get("properties", {}))
            for key in err.instance:
                if key not in allowed:
                    line, col = _loc(_key_node(node, key) or node)
                    out.append(Diagnostic(f"unknown key {key!r}", line, col, _fmt_path(path + [key])))
            continue
        line, col = _loc(node)
        out.append(Diagnostic(f"schema: {err.message}", line, col, _fmt_path(path)))
    return out


# ---------------------------------------------------------------------------
# building


def _expr_diag(exc, node, path):
    line, col = _loc(node)
    if line is not None and exc.line == 1 and node is not None and node.style is None:
        col = col + exc.column - 1
    return Diagnostic(f"expression: {exc}", line, col, path)


class _Builder:
    def __init__(self, data, root, tolerances):
        self.data = data
        self.root = root
        self.tol = tolerances
        self.diags = []

    def expr(self, src, path, variables=None):
        try:
            return dsl.parse(src, variables=variables)
        except DslSyntaxError as exc:
            self.diags.append(_expr_diag(exc, _node_at(self.root, path), _fmt_path(path)))
            return None

    def fail(self, message, path):
        line, col = _loc(_node_at(self.root, path))
        self.diags.append(Diagnostic(message, line, col, _fmt_path(path)))

    def manifold(self):
        cfg = self.data["manifold"]
        n = cfg["dimension"]
        kind = cfg["kind"]
        for key in ("metric", "bounds", "domain"):
            if key in cfg and kind != "custom":
                self.fail(f"'{key}' is only valid for custom manifolds", ["manifold", key])
        if kind == "euclidean":
            return Euclidean(n, self.tol)
        if kind == "poincare":
            return PoincareBall(n, self.tol)
        if "metric" not in cfg:
            self.fail("custom manifold needs 'metric'", ["manifold"])
            return None
        rows = cfg["metric"]
        if len(rows) != n or any(len(r) != n for r in rows):
            self.fail(f"metric must be {n}x{n}", ["manifold", "metric"])
            return None
        asts = [[self.expr(src, ["manifold", "metric", i, j], {"x"}) for j, src in enumerate(row)]
                for i, row in enumerate(rows)]
        dom = self.expr(cfg["domain"], ["manifold", "domain"], {"x"}) if "domain" in cfg else None
        if any(a is None for row in asts for a in row) or ("domain" in cfg and dom is None):
            return None
        return CustomMetric.from_expressions(n, asts, bounds=cfg.get("bounds"), domain=dom, tolerances=self.tol)

    def _vec(self, v, n, path):
        if len(v) != n:
            self.fail(f"expected {n} coordinates, got {len(v)}", path)
            return None
        return tuple(float(c) for c in v)

    def set(self, m):
        cfg = self.data["set"]
        if "balls" in cfg:
            if "box" in cfg:
                self.fail("'box' is only used with expression sets", ["set", "box"])
            balls = []
            for i, b in enumerate(cfg["balls"]):
                c = self._vec(b["center"], m.dim, ["set", "balls", i, "center"])
                if c is not None:
                    try:
                        m.check_coords(np.asarray(c))
                    except GeoInvexError as exc:
                        self.fail(str(exc), ["set", "balls", i, "center"])
                        continue
                    balls.append((c, float(b["radius"])))
            if m.kind == "custom":
                self.fail("ball sets need a closed-form distance; use an expression set on custom manifolds",
                          ["set", "balls"])
                return None
            return BallUnion(tuple(balls))
        ast = self.expr(cfg["expr"], ["set", "expr"], {"x"})
        box = cfg.get("box")
        if box is not None and len(box) != m.dim:
            self.fail(f"box needs {m.dim} intervals", ["set", "box"])
            return None
        box = default_box(m) if box is None else np.asarray(box, float)
        if ast is None:
            return None
        fn = dsl.ExprFunction(ast, m, source=cfg["expr"])
        return ExpressionSet(fn, tuple(tuple(float(v) for v in row) for row in box))

    def maps(self, m):
        cfg = self.data.get("maps", {})
        E, eta, alpha = IdentityE(), LogMapEta(), ConstantAlpha(1.0)
        e = cfg.get("E")
        if e:
            if e["kind"] == "projection":
                if "anchor" not in e or "radius" not in e:
                    self.fail("projection E needs 'anchor' and 'radius'", ["maps", "E"])
                else:
                    anchor = self._vec(e["anchor"], m.dim, ["maps", "E", "anchor"])
                    if anchor is not None:
                        E = GeodesicProjectionE(anchor, float(e["radius"]))
            elif e["kind"] == "expression":
                comps = [self.expr(c, ["maps", "E", "components", i], {"x"})
                         for i, c in enumerate(e.get("components", []))]
                if len(comps) != m.dim:
                    self.fail(f"E needs {m.dim} component expressions", ["maps", "E"])
                elif all(c is not None for c in comps):
                    E = ExpressionE(tuple(comps))
        h = cfg.get("eta")
        if h:
            scale = float(h.get("scale", 1.0))
            if h["kind"] == "log":
                eta = LogMapEta(scale)
            elif h["kind"] == "zero":
                eta = ZeroEta()
            elif h["kind"] == "piecewise_balls":
                balls = h.get("balls")
                if not balls:
                    self.fail("piecewise_balls eta needs two 'balls'", ["maps", "eta"])
                else:
                    c1 = self._vec(balls[0]["center"], m.dim, ["maps", "eta", "balls", 0, "center"])
                    c2 = self._vec(balls[1]["center"], m.dim, ["maps", "eta", "balls", 1, "center"])
                    if c1 is not None and c2 is not None:
                        eta = PiecewiseBallsEta(c1, float(balls[0]["radius"]), c2, float(balls[1]["radius"]), scale)
            else:
                pair = {"a", "b", "x", "y"}
                comps = [self.expr(c, ["maps", "eta", "components", i], pair)
                         for i, c in enumerate(h.get("components", []))]
                if len(comps) != m.dim:
                    self.fail(f"eta needs {m.dim} component expressions", ["maps", "eta"])
                elif all(c is not None for c in comps):
                    eta = ExpressionEta(tuple(comps))
        a = cfg.get("alpha")
        if a:
            if a["kind"] == "constant":
                value = float(a.get("value", 1.0))
                if value == 0.0:
                    self.fail("alpha may evaluate to zero (codomain R - {0})", ["maps", "alpha", "value"])
                else:
                    alpha = ConstantAlpha(value)
            else:
                if "expr" not in a:
                    self.fail("expression alpha needs 'expr'", ["maps", "alpha"])
                else:
                    ast = self.expr(a["expr"], ["maps", "alpha", "expr"], {"a", "b", "x", "y"})
                    if ast is not None:
                        if not dsl.free_variables(ast):
                            try:
                                zero = float(dsl.eval_scalar(ast, {}, m)) == 0.0
                            except GeoInvexError:
                                zero = False
                            if zero:
                                self.fail("alpha may evaluate to zero (codomain R - {0})",
                                          ["maps", "alpha", "expr"])
                        alpha = ExpressionAlpha(ast)
        return E, eta, alpha

    def functions(self, m):
        fns = {}
        for name, src in self.data.get("functions", {}).items():
            ast = self.expr(src, ["functions", name], {"x"})
            if ast is not None:
                fns[name] = dsl.ExprFunction(ast, m, source=src)
        return fns

    def theorems(self, fns):
        cases = self.data.get("theorems", [])
        for i, case in enumerate(cases):
            names = ([case["function"]] if "function" in case else []) + case.get("functions", [])
            for nm in names:
                if nm not in fns:
                    self.fail(f"unknown function {nm!r}", ["theorems", i])
            needs = {"P4.1": ("function", "levels"), "T4.2": ("function",), "T4.3": ("function",),
                     "T4.4": ("function", "phi"), "T4.5": ("functions",), "T4.6": ("F",)}[case["id"]]
            for key in needs:
                if key not in case:
                    self.fail(f"{case['id']} needs '{key}'", ["theorems", i])
            if "phi" in case:
                self.expr(case["phi"], ["theorems", i, "phi"], {"u"})
            if "F" in case:
                self.expr(case["F"], ["theorems", i, "F"], {"p", "q"})
            if "exact" in case:
                self.expr(case["exact"], ["theorems", i, "exact"], {"p"})
        return cases


def _tolerances(data, root, overrides, diags):
    tol = Tolerances()
    raw = dict(data.get("tolerances", {}))
    raw.update(overrides or {})
    try:
        return tol.with_overrides(**{k: float(v) for k, v in raw.items()})
    except (KeyError, ValueError) as exc:
        line, col = _loc(_node_at(root, ["tolerances"]))
        diags.append(Diagnostic(f"tolerances: {exc}", line, col, "tolerances"))
        return tol


def load_text(text, *, path=None, tol_overrides=None, sampler_overrides=None, probe_alpha=True):
    """Parse and validate a scenario document; raise ``ScenarioError`` on any diagnostic."""
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line, col = (mark.line + 1, mark.column + 1) if mark else (None, None)
        raise ScenarioError([Diagnostic(f"YAML: {getattr(exc, 'problem', exc)}", line, col)]) from None
    if not isinstance(data, dict):
        raise ScenarioError([Diagnostic("scenario document must be a mapping", 1, 1)])
    diags = _schema_diagnostics(data, root)
    if diags:
        raise ScenarioError(diags)

    tol = _tolerances(data, root, tol_overrides, diags)
    b = _Builder(data, root, tol)
    m = b.manifold()
    S = b.set(m) if m is not None else None
    E, eta, alpha = b.maps(m) if m is not None else (None, None, None)
    fns = b.functions(m) if m is not None else {}
    theorems = b.theorems(fns)
    diags.extend(b.diags)
    sampler_kwargs = dict(data.get("sampler", {}))
    sampler_kwargs.update({k: v for k, v in (sampler_overrides or {}).items() if v is not None})
    try:
        sampler = SamplerConfig(**sampler_kwargs)
    except GeoInvexError as exc:
        diags.append(Diagnostic(f"invalid configuration: {exc}", *_loc(_node_at(root, ["sampler"])), "sampler"))
    if diags:
        raise ScenarioError(diags)

    sc = InvexityScenario(manifold=m, set=S, E=E, eta=eta, alpha=alpha, functions=fns, sampler=sampler, tol=tol,
                          name=data.get("name", Path(path).stem if path else "scenario"))
    if probe_alpha and isinstance(alpha, ExpressionAlpha):
        _probe_alpha(sc, root)
    return LoadedScenario(sc, theorems, digest, data, path)


def _probe_alpha(sc, root, count=16):
    from geoinvex.engine import sample_pair

    for i in range(count):
        try:
            x, y = sample_pair(sc, i, stream=99)
            Ex, Ey = sc.E.evaluate(sc.manifold, x), sc.E.evaluate(sc.manifold, y)
            sc.alpha.evaluate(sc.manifold, Ex, Ey)
        except GeoInvexError as exc:
            if type(exc).__name__ == "ZeroAlphaError":
                line, col = _loc(_node_at(root, ["maps", "alpha", "expr"]))
                raise ScenarioError(
                    [Diagnostic(f"alpha may evaluate to zero (codomain R - {{0}}): {exc}", line, col,
                                "maps.alpha.expr")]
                ) from None
            return


def load_scenario(path, **kwargs):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([Diagnostic(f"cannot read {path}: {exc.strerror or exc}")]) from None
    return load_text(text, path=str(p), **kwargs)


# ---------------------------------------------------------------------------
# shipped library


def builtin_names():
    root = resources.files("geoinvex") / "scenarios"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def builtin_path(name):
    return resources.files("geoinvex") / "scenarios" / f"{name}.yaml"


def load_builtin(name, **kwargs):
    if name not in builtin_names():
        raise ScenarioError([Diagnostic(f"unknown builtin scenario {name!r}; known: {', '.join(builtin_names())}")])
    text = builtin_path(name).read_text(encoding="utf-8")
    return load_text(text, path=f"{name}.yaml", **kwargs)


def resolve(ref, **kwargs):
    """Load a scenario from a file path or a builtin name."""
    if Path(ref).exists():
        return load_scenario(ref, **kwargs)
    stem = Path(ref).stem
    if not str(ref).endswith((".yaml", ".yml")) and stem in builtin_names():
        return load_builtin(stem, **kwargs)
    return load_scenario(ref, **kwargs)
