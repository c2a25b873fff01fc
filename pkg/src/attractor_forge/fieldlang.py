"""Parser and evaluator for vector-field expressions from config files.

A d-dimensional field is written as d expressions separated by ";", e.g.
``"x2; -x1"`` for a rotation or ``"-x1 + 0.2*sin(t)"`` for a forced decay.

Grammar (whitespace-insensitive):

    field    := expr (";" expr)*
    expr     := term  (("+"|"-") term)*        left associative
    term     := unary (("*"|"/") unary)*       left associative
    unary    := "-" unary | power
    power    := atom ("^" unary)?              right associative
    atom     := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"

Identifiers are the time variable ``t``, state variables ``x1..xd``, the
functions sin, cos, tanh, exp, abs, and any extra symbols passed to
``parse`` (used for perturbation amplitudes like ``eps`` and forcing
components ``u1..um``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "abs": np.abs,
}


class ParseError(ValueError):
    """Syntax or name error, with the 0-based character position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ArithmeticError):
    """Non-finite result during evaluation; carries the component index."""

    def __init__(self, message, component):
        super().__init__(message)
        self.component = component


# ---------------------------------------------------------------------------
# AST nodes

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    # "t", "x<k>" (index stored separately), or an extra symbol name
    name: str
    index: int = 0  # 1-based state index for x-variables, else 0


@dataclass(frozen=True)
class Neg:
    child: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^();]))"
)


def _tokenize(source):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            # skip leading whitespace before reporting
            stripped = pos + len(source[pos:]) - len(source[pos:].lstrip())
            if stripped >= len(source):
                break
            raise ParseError(f"unexpected character {source[stripped]!r}", stripped)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens, dim, extra_symbols):
        self.tokens = tokens
        self.i = 0
        self.dim = dim
        self.extra = set(extra_symbols)
        self.uses_time = False
        self.used_symbols = set()

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", pos)
        return self.next()

    def parse_field(self):
        exprs = [self.parse_expr()]
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text == ";":
                self.next()
                exprs.append(self.parse_expr())
            elif kind == "end":
                break
            else:
                raise ParseError(f"unexpected token {text!r}", pos)
        return exprs

    def parse_expr(self):
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                node = BinOp(text, node, self.parse_term())
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                node = BinOp(text, node, self.parse_unary())
            else:
                return node

    def parse_unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return Neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self):
        node = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            node = BinOp("^", node, self.parse_unary())
        return node

    def parse_atom(self):
        kind, text, pos = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.next()
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(text, arg)
            return self._variable(text, pos)
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {text!r}" if text else "unexpected end of input", pos)

    def _variable(self, name, pos):
        if name == "t":
            self.uses_time = True
            return Var("t")
        m = re.fullmatch(r"x(\d+)", name)
        if m is not None:
            idx = int(m.group(1))
            if idx < 1 or idx > self.dim:
                raise ParseError(
                    f"variable {name!r} exceeds field dimension {self.dim}", pos)
            return Var(name, idx)
        if name in self.extra:
            self.used_symbols.add(name)
            return Var(name)
        raise ParseError(f"unknown identifier {name!r}", pos)


# ---------------------------------------------------------------------------
# Compilation to vectorized closures

def _compile(node):
    if isinstance(node, Num):
        v = np.float64(node.value)
        return lambda t, X, params: v
    if isinstance(node, Var):
        if node.name == "t":
            return lambda t, X, params: t
        if node.index > 0:
            i = node.index - 1
            return lambda t, X, params: X[:, i]
        name = node.name
        return lambda t, X, params: params[name]
    if isinstance(node, Neg):
        c = _compile(node.child)
        return lambda t, X, params: -c(t, X, params)
    if isinstance(node, BinOp):
        lf, rf = _compile(node.left), _compile(node.right)
        op = node.op
        if op == "+":
            return lambda t, X, params: lf(t, X, params) + rf(t, X, params)
        if op == "-":
            return lambda t, X, params: lf(t, X, params) - rf(t, X, params)
        if op == "*":
            return lambda t, X, params: lf(t, X, params) * rf(t, X, params)
        if op == "/":
            return lambda t, X, params: lf(t, X, params) / rf(t, X, params)
        return lambda t, X, params: np.power(lf(t, X, params), rf(t, X, params))
    if isinstance(node, Call):
        f = FUNCTIONS[node.fn]
        c = _compile(node.arg)
        return lambda t, X, params: f(c(t, X, params))
    raise TypeError(f"unknown node {node!r}")


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _pretty(node, context):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        s = "-" + _pretty(node.child, 3)
        return f"({s})" if context > 3 else s
    if isinstance(node, BinOp):
        p = _PRECEDENCE[node.op]
        if node.op == "^":
            s = _pretty(node.left, p + 1) + "^" + _pretty(node.right, p)
        else:
            s = _pretty(node.left, p) + f" {node.op} " + _pretty(node.right, p + 1)
        return f"({s})" if context > p else s
    if isinstance(node, Call):
        return f"{node.fn}({_pretty(node.arg, 0)})"
    raise TypeError(f"unknown node {node!r}")


def _substitute(node, name, value):
    if isinstance(node, Var) and node.name == name:
        return Num(value)
    if isinstance(node, Neg):
        return Neg(_substitute(node.child, name, value))
    if isinstance(node, BinOp):
        return BinOp(node.op, _substitute(node.left, name, value),
                     _substitute(node.right, name, value))
    if isinstance(node, Call):
        return Call(node.fn, _substitute(node.arg, name, value))
    return node


def _collect_uses(node, out):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _collect_uses(node.child, out)
    elif isinstance(node, BinOp):
        _collect_uses(node.left, out)
        _collect_uses(node.right, out)
    elif isinstance(node, Call):
        _collect_uses(node.arg, out)


@dataclass(frozen=True)
class FieldAst:
    """Parsed d-dimensional vector field, immutable and pure to evaluate."""

    dim: int
    exprs: tuple
    uses_time: bool
    symbols: tuple = ()  # extra parameter names that appear in the expressions
    _compiled: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.exprs) != self.dim:
            raise ValueError(f"expected {self.dim} expressions, got {len(self.exprs)}")
        object.__setattr__(self, "_compiled", tuple(_compile(e) for e in self.exprs))

    def eval_batch(self, t, X, params=None, check=True):
        """Evaluate at a batch of states.

        t is a scalar (or an array broadcastable over the batch), X has shape
        (n, dim). Returns (n, dim). With check=True a non-finite component
        raises EvalError; with check=False non-finite values pass through (the
        flow kernels treat them as escapes).
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"state batch must have shape (n, {self.dim})")
        if params is None:
            params = {}
        out = np.empty_like(X)
        with np.errstate(all="ignore"):
            for i, fn in enumerate(self._compiled):
                out[:, i] = fn(t, X, params)
        if check and not np.all(np.isfinite(out)):
            bad = int(np.argwhere(~np.isfinite(out))[0][1])
            raise EvalError(f"non-finite value in component {bad + 1}", bad)
        return out

    def eval(self, t, x, params=None):
        """Evaluate at a single state vector; returns a (dim,) array."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"state must have length {self.dim}")
        return self.eval_batch(float(t), x[None, :], params=params)[0]

    def pretty(self) -> str:
        """Render back to source text; re-parsing gives identical evaluations."""
        return "; ".join(_pretty(e, 0) for e in self.exprs)

    def substitute(self, name: str, value: float) -> "FieldAst":
        """Replace an extra symbol by a constant, e.g. the amplitude eps."""
        if name not in self.symbols:
            raise KeyError(f"{name!r} is not a symbol of this field")
        exprs = tuple(_substitute(e, name, float(value)) for e in self.exprs)
        used = set()
        for e in exprs:
            _collect_uses(e, used)
        remaining = tuple(s for s in self.symbols if s in used)
        return FieldAst(self.dim, exprs, "t" in used, remaining)


def parse(source: str, dim: int, extra_symbols=()) -> FieldAst:
    """Parse a semicolon-separated list of dim expressions.

    extra_symbols lists additional identifiers permitted besides t and
    x1..xd (e.g. ("eps",) or ("u1", "u2")).
    """
    if dim < 1:
        raise ValueError("dim must be a positive integer")
    tokens = _tokenize(source)
    parser = _Parser(tokens, dim, extra_symbols)
    exprs = parser.parse_field()
    if len(exprs) != dim:
        raise ParseError(
            f"expected {dim} expressions separated by ';', got {len(exprs)}",
            len(source))
    return FieldAst(dim, tuple(exprs), parser.uses_time,
                    tuple(s for s in extra_symbols if s in parser.used_symbols))
