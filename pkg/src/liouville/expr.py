"""Expression trees over phase-space variables and named parameters.

Variables are ``q1..qn`` and ``p1..pn`` for an ``n``-degree phase space;
any other identifier is a named real parameter.  Nodes are immutable and
compare structurally, so trees can be shared freely.

Grammar accepted by :func:`parse`::

    expr     := term (("+" | "-") term)*
    term     := factor (("*" | "/") factor)*
    factor   := "-" factor | base ("^" exponent)?
    base     := number | ident | "(" expr ")" | func "(" expr ")"
    exponent := number | "-" number | "(" "-"? number ")"

``func`` is one of ``ln``, ``sqrt``, ``sin``, ``cos``, ``exp``; these names
are reserved and may not be used as parameters.  A unary minus applied to a
bare numeric literal folds into the constant, so printing round-trips
structurally.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Const", "Var", "Param", "Neg", "Call", "BinOp", "Pow", "Expr",
    "EvalPoint", "ExprError", "ParseError", "DomainError",
    "UnboundSymbolError", "IndeterminateError",
    "parse", "to_string", "differentiate", "evaluate", "simplify",
    "numerically_equivalent", "sample_eval_points", "dimension_of",
    "parameters_of", "substitute_param", "compile_functions",
    "q", "p", "const", "param",
]

FUNCTIONS = ("ln", "sqrt", "sin", "cos", "exp")

_VAR_RE = re.compile(r"^([qp])([1-9][0-9]*)$")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER_RE = re.compile(r"(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")


class ExprError(Exception):
    """Base class for expression-layer failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} (column {position + 1})")


class DomainError(ExprError):
    """Evaluation left the real domain (ln <= 0, division by zero, ...)."""


class UnboundSymbolError(ExprError):
    """A variable or parameter had no binding at evaluation time."""


class IndeterminateError(ExprError):
    """Every sampled point hit a domain error; no verdict possible."""


class _Node:
    """Operator sugar shared by all node classes."""

    __slots__ = ()

    def __add__(self, other):
        return BinOp("+", self, _coerce(other))

    def __radd__(self, other):
        return BinOp("+", _coerce(other), self)

    def __sub__(self, other):
        return BinOp("-", self, _coerce(other))

    def __rsub__(self, other):
        return BinOp("-", _coerce(other), self)

    def __mul__(self, other):
        return BinOp("*", self, _coerce(other))

    def __rmul__(self, other):
        return BinOp("*", _coerce(other), self)

    def __truediv__(self, other):
        return BinOp("/", self, _coerce(other))

    def __rtruediv__(self, other):
        return BinOp("/", _coerce(other), self)

    def __pow__(self, exponent):
        return Pow(self, float(exponent))

    def __neg__(self):
        return Neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Const(_Node):
    value: float


@dataclass(frozen=True)
class Var(_Node):
    name: str  # q<i> or p<i>, 1-based index


@dataclass(frozen=True)
class Param(_Node):
    name: str


@dataclass(frozen=True)
class Neg(_Node):
    arg: "Expr"


@dataclass(frozen=True)
class Call(_Node):
    func: str  # one of FUNCTIONS
    arg: "Expr"


@dataclass(frozen=True)
class BinOp(_Node):
    op: str  # + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow(_Node):
    base: "Expr"
    exponent: float


Expr = Union[Const, Var, Param, Neg, Call, BinOp, Pow]


def _coerce(value) -> Expr:
    if isinstance(value, _Node):
        return value
    return Const(float(value))


def q(i: int) -> Var:
    return Var(f"q{i}")


def p(i: int) -> Var:
    return Var(f"p{i}")


def const(value: float) -> Const:
    return Const(float(value))


def param(name: str) -> Param:
    return Param(name)


@dataclass
class EvalPoint:
    """A fully or partially bound phase-space point with parameter bindings."""

    q: tuple[float, ...]
    p: tuple[float, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.q = tuple(float(v) for v in self.q)
        self.p = tuple(float(v) for v in self.p)
        if len(self.q) != len(self.p):
            raise ValueError("q and p must have equal length")

    @property
    def n(self) -> int:
        return len(self.q)

    def state(self) -> np.ndarray:
        return np.array(self.q + self.p, dtype=float)


# ---------------------------------------------------------------------------
# parsing


class _Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind: str, value, pos: int):
        self.kind = kind
        self.value = value
        self.pos = pos


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            tokens.append(_Token("number", float(m.group()), i))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            tokens.append(_Token("ident", m.group(), i))
            i = m.end()
            continue
        if ch in "+-*/^()":
            tokens.append(_Token(ch, ch, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", i, text)
    tokens.append(_Token("end", None, len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, dimension: int):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.dimension = dimension

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.kind!r}", tok.pos, self.text)
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected trailing {tok.kind!r}", tok.pos, self.text)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.advance().kind
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek().kind in ("*", "/"):
            op = self.advance().kind
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek().kind == "-":
            self.advance()
            inner = self.factor()
            # fold "-5" into a constant so printing round-trips
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        base = self.base()
        if self.peek().kind == "^":
            self.advance()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return float(tok.value)
        if tok.kind == "-":
            self.advance()
            num = self.expect("number")
            return -float(num.value)
        if tok.kind == "(":
            self.advance()
            sign = 1.0
            if self.peek().kind == "-":
                self.advance()
                sign = -1.0
            num = self.expect("number")
            self.expect(")")
            return sign * float(num.value)
        raise ParseError("exponent must be a numeric literal", tok.pos, self.text)

    def base(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Const(float(tok.value))
        if tok.kind == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            self.advance()
            name = tok.value
            if name in FUNCTIONS:
                if self.peek().kind != "(":
                    raise ParseError(f"reserved function name {name!r} needs an argument list",
                                     tok.pos, self.text)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(name, arg)
            m = _VAR_RE.match(name)
            if m:
                index = int(m.group(2))
                if index > self.dimension:
                    raise ParseError(
                        f"variable {name!r} out of range for dimension {self.dimension}",
                        tok.pos, self.text)
                return Var(name)
            if self.peek().kind == "(":
                raise ParseError(f"unknown function {name!r}", tok.pos, self.text)
            return Param(name)
        raise ParseError(f"expected a value, found {tok.kind!r}", tok.pos, self.text)


def parse(text: str, dimension: int) -> Expr:
    """Parse ``text`` into an expression tree for an n=``dimension`` phase space."""
    return _Parser(text, dimension).parse()


# ---------------------------------------------------------------------------
# printing

# precedence levels: +,- = 1; *,/ = 2; unary minus = 2.5; ^ and atoms higher
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expr) -> float:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 2.5
    if isinstance(e, Pow):
        return 3.0
    return 9.0


def _fmt_number(v: float) -> str:
    if v != v or v in (math.inf, -math.inf):
        raise ValueError("cannot print a non-finite constant")
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def to_string(e: Expr) -> str:
    if isinstance(e, Const):
        if e.value < 0 or (e.value == 0 and math.copysign(1.0, e.value) < 0):
            return "-" + _fmt_number(-e.value)
        return _fmt_number(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < 3.0:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_string(e.base)
        # a leading minus would rebind under ^, turning (-3)^2 into -(3^2)
        if _prec(e.base) < 9.0 or base.startswith("-"):
            base = f"({base})"
        if e.exponent < 0:
            return f"{base}^(-{_fmt_number(-e.exponent)})"
        return f"{base}^{_fmt_number(e.exponent)}"
    if isinstance(e, BinOp):
        lhs = to_string(e.left)
        if _prec(e.left) < _PREC[e.op]:
            lhs = f"({lhs})"
        rhs = to_string(e.right)
        # left-associative grammar: equal precedence on the right needs parens,
        # and a leading minus on the right is parenthesized for readability
        if _prec(e.right) <= _PREC[e.op] or isinstance(e.right, Neg) \
                or (isinstance(e.right, Const) and e.right.value < 0):
            rhs = f"({rhs})"
        return f"{lhs}{e.op}{rhs}"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(e: Expr, point: EvalPoint) -> float:
    """Evaluate ``e`` at ``point``; raises DomainError outside the real domain."""
    value = _eval(e, point)
    if not math.isfinite(value):
        raise DomainError(f"evaluation produced a non-finite value for {to_string(e)!r}")
    return value


def _eval(e: Expr, u: EvalPoint) -> float:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        kind, idx = e.name[0], int(e.name[1:])
        values = u.q if kind == "q" else u.p
        if idx > len(values):
            raise UnboundSymbolError(f"variable {e.name} unbound at a {len(values)}-degree point")
        return values[idx - 1]
    if isinstance(e, Param):
        try:
            return float(u.params[e.name])
        except KeyError:
            raise UnboundSymbolError(f"parameter {e.name!r} unbound") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, u)
    if isinstance(e, BinOp):
        a = _eval(e.left, u)
        b = _eval(e.right, u)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if b == 0.0:
            raise DomainError("division by zero")
        return a / b
    if isinstance(e, Pow):
        base = _eval(e.base, u)
        c = e.exponent
        if float(c).is_integer():
            if base == 0.0 and c < 0:
                raise DomainError("zero raised to a negative power")
            try:
                return math.pow(base, c)
            except OverflowError:
                raise DomainError("overflow in power") from None
        if base < 0:
            raise DomainError("negative base with a non-integer exponent")
        if base == 0.0 and c < 0:
            raise DomainError("zero raised to a negative power")
        try:
            return math.pow(base, c)
        except OverflowError:
            raise DomainError("overflow in power") from None
    if isinstance(e, Call):
        x = _eval(e.arg, u)
        if e.func == "ln":
            if x <= 0.0:
                raise DomainError("ln of a non-positive value")
            return math.log(x)
        if e.func == "sqrt":
            if x < 0.0:
                raise DomainError("sqrt of a negative value")
            return math.sqrt(x)
        if e.func == "sin":
            return math.sin(x)
        if e.func == "cos":
            return math.cos(x)
        try:
            return math.exp(x)
        except OverflowError:
            raise DomainError("overflow in exp") from None
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, symbol: str) -> Expr:
    """Exact partial derivative with respect to the named symbol.

    ``symbol`` is usually a phase-space variable (``q3``, ``p1``); any other
    symbol name is treated as a parameter and differentiated the same way.
    Constants and unrelated symbols have derivative zero.
    """
    return simplify(_diff(e, symbol))


def _diff(e: Expr, s: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, (Var, Param)):
        return Const(1.0) if e.name == s else Const(0.0)
    if isinstance(e, Neg):
        return Neg(_diff(e.arg, s))
    if isinstance(e, BinOp):
        da, db = _diff(e.left, s), _diff(e.right, s)
        if e.op == "+":
            return BinOp("+", da, db)
        if e.op == "-":
            return BinOp("-", da, db)
        if e.op == "*":
            return BinOp("+", BinOp("*", da, e.right), BinOp("*", e.left, db))
        num = BinOp("-", BinOp("*", da, e.right), BinOp("*", e.left, db))
        return BinOp("/", num, Pow(e.right, 2.0))
    if isinstance(e, Pow):
        inner = _diff(e.base, s)
        scaled = BinOp("*", Const(e.exponent), Pow(e.base, e.exponent - 1.0))
        return BinOp("*", scaled, inner)
    if isinstance(e, Call):
        inner = _diff(e.arg, s)
        if e.func == "ln":
            outer = BinOp("/", Const(1.0), e.arg)
        elif e.func == "sqrt":
            outer = BinOp("/", Const(0.5), Call("sqrt", e.arg))
        elif e.func == "sin":
            outer = Call("cos", e.arg)
        elif e.func == "cos":
            outer = Neg(Call("sin", e.arg))
        else:
            outer = Call("exp", e.arg)
        return BinOp("*", outer, inner)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# simplification


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 0.0


def _is_one(e: Expr) -> bool:
    return isinstance(e, Const) and e.value == 1.0


def _add_terms(e: Expr, sign: int, out: list[tuple[int, Expr]]):
    if isinstance(e, BinOp) and e.op == "+":
        _add_terms(e.left, sign, out)
        _add_terms(e.right, sign, out)
    elif isinstance(e, BinOp) and e.op == "-":
        _add_terms(e.left, sign, out)
        _add_terms(e.right, -sign, out)
    elif isinstance(e, Neg):
        _add_terms(e.arg, -sign, out)
    else:
        out.append((sign, e))


def _mul_factors(e: Expr, out: list[Expr]) -> int:
    """Flatten a product chain; returns the sign picked up from Neg wrappers."""
    if isinstance(e, BinOp) and e.op == "*":
        return _mul_factors(e.left, out) * _mul_factors(e.right, out)
    if isinstance(e, Neg):
        return -_mul_factors(e.arg, out)
    out.append(e)
    return 1


def _rebuild_sum(terms: list[tuple[int, Expr]], const_acc: float) -> Expr:
    node: Expr | None = None
    for sign, t in terms:
        if node is None:
            node = t if sign > 0 else Neg(t)
        else:
            node = BinOp("+" if sign > 0 else "-", node, t)
    if node is None:
        return Const(const_acc)
    if const_acc != 0.0:
        op = "+" if const_acc > 0 else "-"
        node = BinOp(op, node, Const(abs(const_acc)))
    return node


def _rebuild_product(factors: list[Expr], const_acc: float) -> Expr:
    node: Expr | None = None
    for f in factors:
        node = f if node is None else BinOp("*", node, f)
    if node is None:
        return Const(const_acc)
    if const_acc == 1.0:
        return node
    if const_acc == -1.0:
        return Neg(node)
    return BinOp("*", Const(const_acc), node)


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 identities, and flattening of sums and products.

    The result evaluates identically to the input on every point where both
    are defined; this is deliberately not a full canonicalization.
    """
    if isinstance(e, (Const, Var, Param)):
        return e
    if isinstance(e, Neg):
        arg = simplify(e.arg)
        if isinstance(arg, Const):
            return Const(-arg.value)
        if isinstance(arg, Neg):
            return arg.arg
        return Neg(arg)
    if isinstance(e, Call):
        arg = simplify(e.arg)
        if isinstance(arg, Const):
            try:
                return Const(evaluate(Call(e.func, arg), EvalPoint((), ())))
            except ExprError:
                pass
        return Call(e.func, arg)
    if isinstance(e, Pow):
        base = simplify(e.base)
        if e.exponent == 0.0:
            return Const(1.0)
        if e.exponent == 1.0:
            return base
        if isinstance(base, Const):
            try:
                return Const(evaluate(Pow(base, e.exponent), EvalPoint((), ())))
            except ExprError:
                pass
        return Pow(base, e.exponent)
    if isinstance(e, BinOp) and e.op in ("+", "-"):
        left = simplify(e.left)
        right = simplify(e.right)
        raw: list[tuple[int, Expr]] = []
        _add_terms(BinOp(e.op, left, right), 1, raw)
        const_acc = 0.0
        terms: list[tuple[int, Expr]] = []
        for sign, t in raw:
            if isinstance(t, Const):
                const_acc += sign * t.value
            else:
                terms.append((sign, t))
        # cancel exact +t / -t pairs (structural equality)
        cancelled: list[tuple[int, Expr]] = []
        for sign, t in terms:
            for k, (s2, t2) in enumerate(cancelled):
                if s2 == -sign and t2 == t:
                    del cancelled[k]
                    break
            else:
                cancelled.append((sign, t))
        return _rebuild_sum(cancelled, const_acc)
    if isinstance(e, BinOp) and e.op == "*":
        left = simplify(e.left)
        right = simplify(e.right)
        factors: list[Expr] = []
        sign = _mul_factors(BinOp("*", left, right), factors)
        const_acc = float(sign)
        kept: list[Expr] = []
        for f in factors:
            if isinstance(f, Const):
                const_acc *= f.value
            else:
                kept.append(f)
        if const_acc == 0.0:
            return Const(0.0)
        return _rebuild_product(kept, const_acc)
    if isinstance(e, BinOp) and e.op == "/":
        num = simplify(e.left)
        den = simplify(e.right)
        if _is_zero(num):
            return Const(0.0)
        if _is_one(den):
            return num
        if isinstance(num, Const) and isinstance(den, Const) and den.value != 0.0:
            return Const(num.value / den.value)
        return BinOp("/", num, den)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# structure queries


def dimension_of(*exprs: Expr) -> int:
    """Smallest phase-space dimension that binds every variable used."""
    best = 0
    stack = list(exprs)
    while stack:
        e = stack.pop()
        if isinstance(e, Var):
            best = max(best, int(e.name[1:]))
        elif isinstance(e, Neg):
            stack.append(e.arg)
        elif isinstance(e, Call):
            stack.append(e.arg)
        elif isinstance(e, Pow):
            stack.append(e.base)
        elif isinstance(e, BinOp):
            stack.append(e.left)
            stack.append(e.right)
    return best


def parameters_of(*exprs: Expr) -> set[str]:
    names: set[str] = set()
    stack = list(exprs)
    while stack:
        e = stack.pop()
        if isinstance(e, Param):
            names.add(e.name)
        elif isinstance(e, Neg):
            stack.append(e.arg)
        elif isinstance(e, Call):
            stack.append(e.arg)
        elif isinstance(e, Pow):
            stack.append(e.base)
        elif isinstance(e, BinOp):
            stack.append(e.left)
            stack.append(e.right)
    return names


def substitute_param(e: Expr, name: str, replacement: Expr) -> Expr:
    """Replace every occurrence of parameter ``name`` by ``replacement``."""
    if isinstance(e, Param):
        return replacement if e.name == name else e
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Neg):
        return Neg(substitute_param(e.arg, name, replacement))
    if isinstance(e, Call):
        return Call(e.func, substitute_param(e.arg, name, replacement))
    if isinstance(e, Pow):
        return Pow(substitute_param(e.base, name, replacement), e.exponent)
    if isinstance(e, BinOp):
        return BinOp(e.op,
                     substitute_param(e.left, name, replacement),
                     substitute_param(e.right, name, replacement))
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# sampling and numeric comparison


def sample_eval_points(n: int, count: int, seed: int,
                       param_names: Iterable[str] = (),
                       params: Mapping[str, float] | None = None) -> list[EvalPoint]:
    """Seeded sample points, each coordinate uniform on [-2,-0.5] U [0.5,2].

    The two-sided band keeps samples away from coordinate hyperplanes, where
    logarithms and rational potentials are typically singular.  Names in
    ``param_names`` are sampled from the same distribution; ``params`` gives
    fixed bindings merged on top.
    """
    rng = np.random.default_rng(seed)
    names = sorted(set(param_names))
    points = []
    for _ in range(count):
        vals = rng.uniform(0.5, 2.0, size=2 * n + len(names))
        signs = rng.integers(0, 2, size=2 * n + len(names)) * 2 - 1
        vals = vals * signs
        bound = dict(zip(names, vals[2 * n:]))
        if params:
            bound.update(params)
        points.append(EvalPoint(tuple(vals[:n]), tuple(vals[n:2 * n]), bound))
    return points


def numerically_equivalent(a: Expr, b: Expr, samples: int = 40,
                           tol: float = 1e-9, seed: int = 0,
                           params: Mapping[str, float] | None = None) -> bool:
    """True iff |a - b| <= tol * (1 + |a|) at every usable sampled point.

    Points where either side raises a domain error are skipped; if every
    sample is skipped an :class:`IndeterminateError` is raised.
    """
    n = max(dimension_of(a), dimension_of(b), 1)
    free = parameters_of(a) | parameters_of(b)
    if params:
        free -= set(params)
    points = sample_eval_points(n, samples, seed, param_names=free, params=params)
    used = 0
    for u in points:
        try:
            va = evaluate(a, u)
            vb = evaluate(b, u)
        except DomainError:
            continue
        used += 1
        if abs(va - vb) > tol * (1.0 + abs(va)):
            return False
    if used == 0:
        raise IndeterminateError("every sampled point hit a domain error")
    return True


# ---------------------------------------------------------------------------
# compilation to plain Python callables (used by the flow integrators)


def _emit(e: Expr, n: int, param_index: Mapping[str, int]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        kind, idx = e.name[0], int(e.name[1:])
        offset = idx - 1 if kind == "q" else n + idx - 1
        return f"y[{offset}]"
    if isinstance(e, Param):
        if e.name not in param_index:
            raise UnboundSymbolError(f"parameter {e.name!r} unbound at compile time")
        return f"c[{param_index[e.name]}]"
    if isinstance(e, Neg):
        return f"(-{_emit(e.arg, n, param_index)})"
    if isinstance(e, Call):
        fn = {"ln": "log", "sqrt": "sqrt", "sin": "sin", "cos": "cos", "exp": "exp"}[e.func]
        return f"_{fn}({_emit(e.arg, n, param_index)})"
    if isinstance(e, BinOp):
        return f"({_emit(e.left, n, param_index)}{e.op}{_emit(e.right, n, param_index)})"
    if isinstance(e, Pow):
        if float(e.exponent).is_integer() and abs(e.exponent) <= 64:
            return f"({_emit(e.base, n, param_index)}**{int(e.exponent)})"
        return f"_pow({_emit(e.base, n, param_index)},{e.exponent!r})"
    raise TypeError(f"not an expression node: {e!r}")


def compile_functions(exprs: Sequence[Expr], n: int,
                      params: Mapping[str, float] | None = None
                      ) -> Callable[[Sequence[float]], tuple[float, ...]]:
    """Compile expressions into one fast callable of the state vector.

    The state layout is ``y = (q1..qn, p1..pn)``; parameter values are baked
    in at compile time.  Domain failures surface as :class:`DomainError`.
    """
    params = dict(params or {})
    param_index = {name: i for i, name in enumerate(sorted(params))}
    body = ",".join(_emit(simplify(e), n, param_index) for e in exprs)
    source = f"def _compiled(y, c):\n    return ({body}{',' if len(exprs) == 1 else ''})\n"
    namespace = {
        "_log": math.log, "_sqrt": math.sqrt, "_sin": math.sin,
        "_cos": math.cos, "_exp": math.exp, "_pow": math.pow,
    }
    exec(compile(source, "<liouville-expr>", "exec"), namespace)
    compiled = namespace["_compiled"]
    c = tuple(params[name] for name in sorted(params))
    isfinite = math.isfinite

    def runner(y: Sequence[float]) -> tuple[float, ...]:
        # numpy scalars turn zero division into a warning plus inf; plain
        # floats raise, which keeps the DomainError path uniform and quiet
        try:
            out = compiled(tuple(map(float, y)), c)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise DomainError(str(exc)) from None
        for v in out:
            if not isfinite(v):
                raise DomainError("non-finite value in compiled evaluation")
        return out

    return runner
