"""Expression language for scalar functions over chart coordinates.

Grammar (EBNF; ``^`` binds tighter than unary minus, which binds tighter than
``* /``, which bind tighter than ``+ -``; ``^`` is right-associative)::

    expr     = term { ("+" | "-") term } ;
    term     = unary { ("*" | "/") unary } ;
    unary    = "-" unary | power ;
    power    = postfix [ "^" unary ] ;
    postfix  = primary [ "[" INTEGER "]" ] ;
    primary  = NUMBER | NAME | NAME "(" [ expr { "," expr } ] ")"
             | "(" expr ")" | "[" expr { "," expr } "]" ;

Point variables (``x y a b p q``) are indexed as ``x[0]``; ``u`` is a scalar
variable. ``[e0, e1]`` is a point literal. ``pi`` and ``e`` are constants.
Evaluation is numpy-vectorised: a point bound to an array of shape ``(..., n)``
yields results of shape ``(...)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from geoinvex.errors import DslEvalError, DslSyntaxError

POINT_VARS = frozenset({"x", "y", "a", "b", "p", "q"})
SCALAR_VARS = frozenset({"u"})
DEFAULT_VARIABLES = POINT_VARS | SCALAR_VARS
CONSTANTS = {"pi": math.pi, "e": math.e}

UNARY_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "tanh": np.tanh,
    "artanh": np.arctanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arcosh": np.arccosh,
}
BINARY_FUNCS = {"min": np.minimum, "max": np.maximum}
POINT_FUNCS = {"dist", "sqdist"}
FUNCTIONS = set(UNARY_FUNCS) | set(BINARY_FUNCS) | POINT_FUNCS


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Node:
    pos: tuple = field(default=(0, 0), compare=False, repr=False, kw_only=True)


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Index(Node):
    name: str
    index: int


@dataclass(frozen=True)
class PointLit(Node):
    items: tuple


@dataclass(frozen=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()\[\],])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def _lineno(source, offset):
    line = source.count("\n", 0, offset) + 1
    col = offset - (source.rfind("\n", 0, offset) + 1) + 1
    return line, col


def tokenize(source):
    tokens = []
    i = 0
    while i < len(source):
        m = _TOKEN_RE.match(source, i)
        if not m:
            line, col = _lineno(source, i)
            raise DslSyntaxError(f"unexpected character {source[i]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            line, col = _lineno(source, i)
            tokens.append(Token(kind, m.group(), line, col))
        i = m.end()
    line, col = _lineno(source, len(source))
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser

_OPERAND_START = ("number", "name", "'('", "'['", "'-'")


class _Parser:
    def __init__(self, source, variables):
        self.tokens = tokenize(source)
        self.i = 0
        self.variables = variables

    @property
    def tok(self):
        return self.tokens[self.i]

    def _error(self, message, expected=(), tok=None):
        tok = tok or self.tok
        raise DslSyntaxError(message, tok.line, tok.col, expected)

    def _accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text):
        if not self._accept(text):
            found = "end of input" if self.tok.kind == "eof" else repr(self.tok.text)
            self._error(f"unexpected {found}", (f"'{text}'",))

    def parse(self):
        node = self.expr()
        if self.tok.kind != "eof":
            self._error(f"unexpected {self.tok.text!r}", ("operator", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            tok = self.tok
            self.i += 1
            node = BinOp(tok.text, node, self.term(), pos=(tok.line, tok.col))
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            tok = self.tok
            self.i += 1
            node = BinOp(tok.text, node, self.unary(), pos=(tok.line, tok.col))
        return node

    def unary(self):
        tok = self.tok
        if self._accept("-"):
            return Neg(self.unary(), pos=(tok.line, tok.col))
        return self.power()

    def power(self):
        node = self.postfix()
        tok = self.tok
        if self._accept("^"):
            node = BinOp("^", node, self.unary(), pos=(tok.line, tok.col))
        return node

    def postfix(self):
        node = self.primary()
        tok = self.tok
        if self._accept("["):
            if not isinstance(node, Var) or node.name not in POINT_VARS:
                self._error("only point variables can be indexed", tok=tok)
            itok = self.tok
            if itok.kind != "number" or not itok.text.isdigit():
                self._error("expected a non-negative integer index", ("integer",))
            self.i += 1
            self._expect("]")
            node = Index(node.name, int(itok.text), pos=node.pos)
        return node

    def primary(self):
        tok = self.tok
        pos = (tok.line, tok.col)
        if tok.kind == "number":
            self.i += 1
            return Num(float(tok.text), pos=pos)
        if tok.kind == "name":
            self.i += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                return self._call(tok)
            if tok.text in CONSTANTS:
                return Num(CONSTANTS[tok.text], pos=pos)
            if tok.text in FUNCTIONS:
                self._error(f"function {tok.text!r} needs an argument list", ("'('",), tok=self.tok)
            if tok.text not in self.variables:
                self._error(f"unknown identifier {tok.text!r}", tok=tok)
            return Var(tok.text, pos=pos)
        if self._accept("("):
            node = self.expr()
            self._expect(")")
            return node
        if self._accept("["):
            items = [self.expr()]
            while self._accept(","):
                items.append(self.expr())
            self._expect("]")
            return PointLit(tuple(items), pos=pos)
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        self._error(f"unexpected {found}, expected operand", _OPERAND_START)

    def _call(self, name_tok):
        name = name_tok.text
        if name not in FUNCTIONS:
            self._error(f"unknown function {name!r}", tok=name_tok)
        self._expect("(")
        args = []
        if not self._accept(")"):
            args.append(self.expr())
            while self._accept(","):
                args.append(self.expr())
            self._expect(")")
        arity = 1 if name in UNARY_FUNCS else 2
        if len(args) != arity:
            self._error(f"{name} takes {arity} argument(s), got {len(args)}", tok=name_tok)
        return Call(name, tuple(args), pos=(name_tok.line, name_tok.col))


def _typecheck(node, want_point=False):
    """Point-valued nodes only as dist/sqdist arguments; scalars elsewhere."""
    is_point = isinstance(node, PointLit) or (isinstance(node, Var) and node.name in POINT_VARS)
    if want_point and not is_point:
        raise DslSyntaxError("expected a point (point variable or [..] literal)", *node.pos)
    if not want_point and is_point:
        raise DslSyntaxError("point used where a scalar is required; index it like x[0]", *node.pos)
    if isinstance(node, PointLit):
        for item in node.items:
            _typecheck(item)
    elif isinstance(node, Neg):
        _typecheck(node.operand)
    elif isinstance(node, BinOp):
        _typecheck(node.left)
        _typecheck(node.right)
    elif isinstance(node, Call):
        for arg in node.args:
            _typecheck(arg, want_point=node.func in POINT_FUNCS)


def parse(source: str, variables=None) -> Node:
    """Parse ``source`` into an AST; raises ``DslSyntaxError`` with a location."""
    variables = DEFAULT_VARIABLES if variables is None else frozenset(variables)
    node = _Parser(source, variables).parse()
    _typecheck(node)
    return node


# ---------------------------------------------------------------------------
# pretty printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return 0
    return _PREC["atom"]


def _wrap(node, min_prec):
    text = unparse(node)
    return f"({text})" if _prec(node) < min_prec else text


def unparse(node: Node) -> str:
    if isinstance(node, Num):
        v = float(node.value)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Index):
        return f"{node.name}[{node.index}]"
    if isinstance(node, PointLit):
        return "[" + ", ".join(unparse(i) for i in node.items) + "]"
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(unparse(a) for a in node.args) + ")"
    if isinstance(node, Neg):
        return "-" + _wrap(node.operand, _PREC["neg"])
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        if node.op == "^":
            return f"{_wrap(node.left, _PREC['atom'])}^{_wrap(node.right, _PREC['neg'])}"
        return f"{_wrap(node.left, p)} {node.op} {_wrap(node.right, p + 1)}"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Node) -> set:
    if isinstance(node, (Var, Index)):
        return {node.name}
    out = set()
    for child in _children(node):
        out |= free_variables(child)
    return out


def _children(node):
    if isinstance(node, PointLit):
        return node.items
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


# ---------------------------------------------------------------------------
# evaluation


def _fail(message, node):
    raise DslEvalError(message, node.pos if node.pos != (0, 0) else None)


def _eval(node, env, m):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Index):
        if node.name not in env:
            _fail(f"unbound name {node.name!r}", node)
        arr = env[node.name]
        if node.index >= arr.shape[-1]:
            _fail(f"index {node.index} out of range for {node.name} of dimension {arr.shape[-1]}", node)
        return arr[..., node.index]
    if isinstance(node, Var):
        if node.name not in env:
            _fail(f"unbound name {node.name!r}", node)
        return env[node.name]
    if isinstance(node, PointLit):
        return np.stack(np.broadcast_arrays(*[np.asarray(_eval(i, env, m), float) for i in node.items]), axis=-1)
    if isinstance(node, Neg):
        return -_eval(node.operand, env, m)
    if isinstance(node, BinOp):
        left = _eval(node.left, env, m)
        right = _eval(node.right, env, m)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            if np.any(np.asarray(right) == 0):
                _fail("division by zero", node)
            return left / right
        base = np.asarray(left, float)
        expo = np.asarray(right, float)
        if np.any((base < 0) & (expo != np.round(expo))):
            _fail("negative base raised to a non-integer power", node)
        if np.any((base == 0) & (expo < 0)):
            _fail("zero raised to a negative power", node)
        out = np.power(base, expo)
        return out if out.ndim else float(out)
    if isinstance(node, Call):
        return _eval_call(node, env, m)
    raise TypeError(f"not an expression node: {node!r}")


_DOMAINS = {
    "log": (lambda v: v > 0, "log of a non-positive value"),
    "sqrt": (lambda v: v >= 0, "sqrt of a negative value"),
    "artanh": (lambda v: np.abs(v) < 1, "artanh outside (-1, 1)"),
    "arcosh": (lambda v: v >= 1, "arcosh below 1"),
}


def _eval_call(node, env, m):
    if node.func in POINT_FUNCS:
        a, b = (np.asarray(_eval(arg, env, m), float) for arg in node.args)
        if m is None:
            _fail(f"{node.func} needs a manifold", node)
        if a.shape[-1] != m.dim or b.shape[-1] != m.dim:
            _fail(f"{node.func} arguments must have dimension {m.dim}", node)
        d = m.dist(a, b)
        d = d * d if node.func == "sqdist" else d
        return d if np.ndim(d) else float(d)
    args = [_eval(arg, env, m) for arg in node.args]
    if node.func in BINARY_FUNCS:
        out = BINARY_FUNCS[node.func](*args)
        return out if np.ndim(out) else float(out)
    (val,) = args
    if node.func in _DOMAINS:
        ok, msg = _DOMAINS[node.func]
        if not np.all(ok(np.asarray(val))):
            _fail(msg, node)
    out = UNARY_FUNCS[node.func](val)
    return out if np.ndim(out) else float(out)


def eval_scalar(ast: Node, bindings: dict, m=None):
    """Evaluate ``ast`` with ``bindings`` (points as coordinate arrays or ``Point``).

    Returns a float for scalar bindings, an array when points are batched.
    """
    env = {}
    for name, value in bindings.items():
        coords = getattr(value, "coords", value)
        env[name] = np.asarray(coords, dtype=float) if name in POINT_VARS else coords
    with np.errstate(all="ignore"):
        out = _eval(ast, env, m)
    if not np.all(np.isfinite(out)):
        _fail("expression evaluated to a non-finite value", ast)
    return out


class ExprFunction:
    """A parsed expression as a callable of chart coordinates.

    ``var`` names the point argument; ``fixed`` binds any other variables.
    """

    def __init__(self, ast, manifold, var="x", fixed=None, source=None):
        if isinstance(ast, str):
            source = ast
            ast = parse(ast)
        self.ast = ast
        self.manifold = manifold
        self.var = var
        self.fixed = dict(fixed or {})
        self.source = source if source is not None else unparse(ast)
        unbound = free_variables(ast) - {var} - set(self.fixed)
        if unbound:
            raise DslEvalError(f"expression {self.source!r} uses unbound name(s) {sorted(unbound)}")

    def __call__(self, coords):
        out = eval_scalar(self.ast, {**self.fixed, self.var: coords}, self.manifold)
        coords = np.asarray(coords)
        if coords.ndim > 1 and np.ndim(out) == 0:
            out = np.full(coords.shape[:-1], float(out))
        return out

    def __repr__(self):
        return f"ExprFunction({self.source!r})"
