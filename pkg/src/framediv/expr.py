"""A small arithmetic expression language.

Grammar (``^`` and ``**`` are synonyms and associate to the right; a factor
directly followed by a number, name or parenthesis is multiplied, so
``3x`` and ``2 sin(x1)`` are accepted)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary | power)*
    unary   := ("+" | "-") unary | power
    power   := primary (("^" | "**") unary)?
    primary := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Names are coordinate symbols, the constants ``pi`` and ``e``, or one of
the functions in :data:`FUNCTIONS`.  Parsed expressions can be
differentiated symbolically, compiled into vectorised numpy callables and,
when polynomial in one variable, converted to coefficient arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .errors import ExpressionError

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh")
CONSTANTS = {"pi": math.pi, "e": math.e}


# ---------------------------------------------------------------------------
# syntax tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Call]


def unparse(node: Node) -> str:
    """Render a tree as text that parses back to an equal tree."""
    if isinstance(node, Num):
        return repr(float(node.value)) if node.value >= 0 else f"({float(node.value)!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{unparse(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({unparse(node.arg)})"
    return f"({unparse(node.left)} {node.op} {unparse(node.right)})"


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    return free_variables(node.left) | free_variables(node.right)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            pos += len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[pos:pos + 1]!r} at {pos} in {text!r}")
        kind = m.lastgroup
        tok = m.group(kind)
        tokens.append((kind, "^" if tok == "**" else tok))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> tuple[str, str]:
        return self.tokens[self.i]

    def take(self) -> tuple[str, str]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        kind, tok = self.take()
        if tok != value:
            raise ExpressionError(f"expected {value!r}, found {tok or 'end of input'!r} in {self.text!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"unexpected {self.peek()[1]!r} in {self.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, tok = self.peek()
            if tok in ("*", "/"):
                self.take()
                node = Bin(tok, node, self.unary())
            elif kind in ("num", "name") or tok == "(":
                node = Bin("*", node, self.power())
            else:
                return node

    def unary(self) -> Node:
        tok = self.peek()[1]
        if tok == "-":
            self.take()
            return Neg(self.unary())
        if tok == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def primary(self) -> Node:
        kind, tok = self.take()
        if kind == "num":
            return Num(float(tok))
        if kind == "name":
            if tok in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok, arg)
            if tok in CONSTANTS:
                return Num(CONSTANTS[tok])
            return Var(tok)
        if tok == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected {tok or 'end of input'!r} in {self.text!r}")


def parse(text: str) -> Node:
    """Parse ``text`` into a syntax tree.

    Examples
    --------
    >>> parse("x^3-3x") == parse("(x ** 3) - 3 * x")
    True
    """
    if not isinstance(text, str):
        text = str(text)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# simplifying constructors and differentiation
# ---------------------------------------------------------------------------


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def add(a: Node, b: Node) -> Node:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Bin("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Bin("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return Num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Bin("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return Num(0.0)
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Bin("/", a, b)


def power(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return Num(1.0)
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        try:
            return Num(float(a.value**b.value))
        except (OverflowError, ZeroDivisionError, TypeError):
            pass
    return Bin("^", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(fn: str, a: Node) -> Node:
    if isinstance(a, Num):
        return Num(float(_NUMPY_FUNCS[fn](a.value)))
    return Call(fn, a)


def differentiate(node: Node, var: str) -> Node:
    """Symbolic derivative of ``node`` with respect to ``var``."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return neg(differentiate(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u, var)
        if _is(du, 0.0):
            return Num(0.0)
        fn = node.fn
        if fn == "sin":
            outer = call("cos", u)
        elif fn == "cos":
            outer = neg(call("sin", u))
        elif fn == "tan":
            outer = div(Num(1.0), power(call("cos", u), Num(2.0)))
        elif fn == "exp":
            outer = node
        elif fn == "log":
            outer = div(Num(1.0), u)
        elif fn == "sqrt":
            outer = div(Num(0.5), node)
        elif fn == "sinh":
            outer = call("cosh", u)
        elif fn == "cosh":
            outer = call("sinh", u)
        elif fn == "tanh":
            outer = sub(Num(1.0), power(node, Num(2.0)))
        else:  # pragma: no cover - the parser only admits FUNCTIONS
            raise ExpressionError(f"no derivative rule for {fn}")
        return mul(outer, du)
    a, b = node.left, node.right
    da, db = differentiate(a, var), differentiate(b, var)
    if node.op == "+":
        return add(da, db)
    if node.op == "-":
        return sub(da, db)
    if node.op == "*":
        return add(mul(da, b), mul(a, db))
    if node.op == "/":
        return sub(div(da, b), div(mul(a, db), power(b, Num(2.0))))
    # power
    if var not in free_variables(b):
        if _is(da, 0.0):
            return Num(0.0)
        return mul(mul(b, power(a, sub(b, Num(1.0)))), da)
    # a^b = exp(b log a)
    return mul(node, add(mul(db, call("log", a)), div(mul(b, da), a)))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

_NUMPY_FUNCS: dict[str, Callable] = {name: getattr(np, name) for name in FUNCTIONS}


def _source(node: Node) -> str:
    if isinstance(node, Num):
        return f"({float(node.value)!r})"
    if isinstance(node, Var):
        return f"_v[{node.name!r}]"
    if isinstance(node, Neg):
        return f"(-{_source(node.arg)})"
    if isinstance(node, Call):
        return f"_np.{node.fn}({_source(node.arg)})"
    op = "**" if node.op == "^" else node.op
    return f"({_source(node.left)} {op} {_source(node.right)})"


class Expression:
    """A parsed expression with symbolic derivatives and numpy evaluation.

    Parameters
    ----------
    source : str or Node
        Expression text or an already-built tree.

    Examples
    --------
    >>> f = Expression("sin(x1)^2")
    >>> float(f.diff("x1").evaluate({"x1": 0.5}))  # 2 sin cos
    0.8414709848078965
    """

    def __init__(self, source: Union[str, Node, float, int]) -> None:
        if isinstance(source, (int, float)):
            source = Num(float(source))
        self.node: Node = parse(source) if isinstance(source, str) else source
        self._code = None

    def __repr__(self) -> str:
        return f"Expression({unparse(self.node)!r})"

    def __str__(self) -> str:
        return unparse(self.node)

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.node == other.node

    def __hash__(self) -> int:
        return hash(self.node)

    @property
    def variables(self) -> set[str]:
        return free_variables(self.node)

    @property
    def is_constant(self) -> bool:
        return isinstance(self.node, Num)

    def diff(self, var: str) -> "Expression":
        return Expression(differentiate(self.node, var))

    def evaluate(self, env: Mapping[str, object]):
        """Evaluate with numpy semantics; ``env`` maps names to scalars or arrays."""
        missing = self.variables - set(env)
        if missing:
            raise ExpressionError(f"unbound variables {sorted(missing)} in {self}")
        if self._code is None:
            self._code = compile(_source(self.node), "<expression>", "eval")
        with np.errstate(all="ignore"):
            return eval(self._code, {"_np": np, "__builtins__": {}}, {"_v": env})


def compile_components(
    exprs: Sequence[Union[str, Expression]], variables: Sequence[str]
) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised evaluator for a list of expressions.

    The returned callable takes points of shape ``(N, len(variables))`` and
    returns an array of shape ``(N, len(exprs))``; constant expressions are
    broadcast.
    """
    parsed = [e if isinstance(e, Expression) else Expression(e) for e in exprs]
    names = list(variables)
    for e in parsed:
        unknown = e.variables - set(names)
        if unknown:
            raise ExpressionError(f"unknown symbols {sorted(unknown)} in {e}; coordinates are {names}")

    # identical expressions (e.g. symmetric matrix entries) are evaluated once
    slots: dict[str, list[int]] = {}
    unique: list[Expression] = []
    for j, e in enumerate(parsed):
        key = str(e)
        if key not in slots:
            slots[key] = []
            unique.append(e)
        slots[key].append(j)
    targets = [slots[str(e)] for e in unique]

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        env = {name: pts[..., i] for i, name in enumerate(names)}
        out = np.empty(pts.shape[:-1] + (len(parsed),))
        for e, cols in zip(unique, targets):
            value = e.evaluate(env)
            for j in cols:
                out[..., j] = value
        return out

    return evaluate


# ---------------------------------------------------------------------------
# polynomials
# ---------------------------------------------------------------------------


def polynomial_coefficients(source: Union[str, Expression], var: str = "x") -> np.ndarray:
    """Ascending coefficients of an expression that is a polynomial in ``var``.

    Raises :class:`ExpressionError` if the expression is not polynomial
    (a non-constant division, a non-integer power, a function of ``var``,
    or another free symbol).

    Examples
    --------
    >>> polynomial_coefficients("x^3-3x").tolist()
    [0.0, -3.0, 0.0, 1.0]
    """
    node = source.node if isinstance(source, Expression) else parse(source)
    poly = _to_poly(node, var)
    coeffs = np.trim_zeros(poly.coef, "b")
    return coeffs if coeffs.size else np.zeros(1)


def _to_poly(node: Node, var: str) -> np.polynomial.Polynomial:
    P = np.polynomial.Polynomial
    if isinstance(node, Num):
        return P([node.value])
    if isinstance(node, Var):
        if node.name != var:
            raise ExpressionError(f"symbol {node.name!r} in a polynomial in {var!r}")
        return P([0.0, 1.0])
    if isinstance(node, Neg):
        return -_to_poly(node.arg, var)
    if isinstance(node, Call):
        if var in free_variables(node.arg):
            raise ExpressionError(f"{node.fn}() of {var!r} is not polynomial")
        return P([float(Expression(node).evaluate({}))])
    a = _to_poly(node.left, var)
    b = _to_poly(node.right, var)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if b.degree() > 0 or np.all(b.coef == 0.0):
            raise ExpressionError("division by a non-constant polynomial")
        return a / b.coef[0]
    k = b.coef[0] if b.degree() == 0 else None
    if k is None or k != int(k) or k < 0:
        raise ExpressionError("polynomial exponents must be non-negative integers")
    return a ** int(k)
