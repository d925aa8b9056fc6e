"""Scalar math expressions over named variables, with forward-mode derivatives.

This module supplies the symbolic layer of the toolkit: right-hand sides of
vector fields, output maps, and Lyapunov candidates are all plain text parsed
into immutable expression trees, evaluated either on floats or elementwise on
numpy arrays, and differentiated exactly with dual numbers.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;            (* left-assoc *)
    term    = unary , { ("*" | "/") , unary } ;          (* left-assoc *)
    unary   = "-" , unary | power ;
    power   = atom , [ "^" , unary ] ;                   (* right-assoc *)
    atom    = NUMBER | NAME | NAME , "(" , expr , ")" | "(" , expr , ")" ;
    NUMBER  = ( DIGITS , [ "." , [DIGITS] ] | "." , DIGITS ) , [EXPONENT] ;
    EXPONENT= ("e" | "E") , ["+" | "-"] , DIGITS ;
    NAME    = LOWER , { LOWER | DIGIT | "_" } ;

Binding strength, loosest to tightest: "+" and binary "-", then "*" and "/",
then unary "-", then "^".  "^" is right-associative, so "2^3^2" is 2^(3^2) =
512, and unary minus binds looser than "^", so "-x^2" is -(x^2).  There is no
implicit multiplication ("2x" is a syntax error).  "pi" denotes the circle
constant.  Calls are restricted to sin, cos, tan, exp, ln, sqrt, abs, tanh.

Expression trees are immutable after parsing and safe to share between
concurrent evaluations; evaluation is pure.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Token", "Expr", "Const", "Var", "Neg", "Bin", "Call", "Dual",
    "ExprSyntaxError", "ExprEvalError", "FUNCTIONS",
    "tokenize", "parse", "to_source", "free_vars",
    "evaluate", "evaluate_dual", "dual_env",
    "differentiate", "compile_expr",
]

#: callable names accepted by the grammar
FUNCTIONS = frozenset({"sin", "cos", "tan", "exp", "ln", "sqrt", "abs", "tanh"})

Number = Union[float, np.ndarray]


class ExprSyntaxError(ValueError):
    """Source text could not be parsed; `position` is the character index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.message = message
        self.position = position


class ExprEvalError(ArithmeticError):
    """Unbound variable or numeric domain violation during evaluation."""

    def __init__(self, message: str, subexpr: "Expr | None" = None):
        if subexpr is not None:
            message = f"{message} in '{to_source(subexpr)}'"
        super().__init__(message)
        self.subexpr = subexpr


# ---------------------------------------------------------------------------
# tokens and syntax tree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str       # number | identifier | operator | paren | comma
    lexeme: str
    position: int


class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class Bin(Expr):
    op: str         # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str         # member of FUNCTIONS
    arg: Expr


_NUMBER_RE = re.compile(r"(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?")
_NAME_RE = re.compile(r"[a-z][a-z0-9_]*")


def tokenize(source: str) -> list[Token]:
    """Split source text into tokens; positions are character indices."""
    tokens: list[Token] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*/^":
            tokens.append(Token("operator", ch, i))
            i += 1
            continue
        if ch in "()":
            tokens.append(Token("paren", ch, i))
            i += 1
            continue
        if ch == ",":
            tokens.append(Token("comma", ch, i))
            i += 1
            continue
        m = _NUMBER_RE.match(source, i)
        if m:
            tokens.append(Token("number", m.group(), i))
            i = m.end()
            continue
        m = _NAME_RE.match(source, i)
        if m:
            tokens.append(Token("identifier", m.group(), i))
            i = m.end()
            continue
        raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    return tokens


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", len(self.source))
        self.pos += 1
        return tok

    def expect(self, kind: str, lexeme: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind or tok.lexeme != lexeme:
            at = tok.position if tok else len(self.source)
            found = repr(tok.lexeme) if tok else "end of input"
            raise ExprSyntaxError(f"expected {lexeme!r}, found {found}", at)
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExprSyntaxError(f"trailing input {tok.lexeme!r}", tok.position)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while (tok := self.peek()) and tok.kind == "operator" and tok.lexeme in "+-":
            self.advance()
            node = Bin(tok.lexeme, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while (tok := self.peek()) and tok.kind == "operator" and tok.lexeme in "*/":
            self.advance()
            node = Bin(tok.lexeme, node, self.unary())
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok and tok.kind == "operator" and tok.lexeme == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok and tok.kind == "operator" and tok.lexeme == "^":
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "number":
            return Const(float(tok.lexeme))
        if tok.kind == "identifier":
            nxt = self.peek()
            if nxt and nxt.kind == "paren" and nxt.lexeme == "(":
                if tok.lexeme not in FUNCTIONS:
                    raise ExprSyntaxError(
                        f"unknown function {tok.lexeme!r}", tok.position)
                self.advance()
                arg = self.expr()
                self.expect("paren", ")")
                return Call(tok.lexeme, arg)
            if tok.lexeme == "pi":
                return Const(math.pi)
            return Var(tok.lexeme)
        if tok.kind == "paren" and tok.lexeme == "(":
            node = self.expr()
            self.expect("paren", ")")
            return node
        raise ExprSyntaxError(f"unexpected token {tok.lexeme!r}", tok.position)


def parse(source: str) -> Expr:
    """Parse source text into an expression tree.

    Raises ExprSyntaxError (with character position) on malformed input,
    unknown functions, unbalanced parentheses, or trailing tokens.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(source).parse()


# ---------------------------------------------------------------------------
# canonical printer
# ---------------------------------------------------------------------------

# binding levels used for minimal parenthesisation
_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5


def _print(e: Expr, need: int) -> str:
    if isinstance(e, Const):
        text = repr(float(e.value))
        level = _NEG if e.value < 0 else _ATOM
    elif isinstance(e, Var):
        text, level = e.name, _ATOM
    elif isinstance(e, Neg):
        text, level = "-" + _print(e.operand, _NEG), _NEG
    elif isinstance(e, Call):
        text, level = f"{e.fn}({_print(e.arg, 0)})", _ATOM
    elif isinstance(e, Bin):
        if e.op in "+-":
            text = f"{_print(e.left, _ADD)} {e.op} {_print(e.right, _MUL)}"
            level = _ADD
        elif e.op in "*/":
            text = f"{_print(e.left, _MUL)}{e.op}{_print(e.right, _NEG)}"
            level = _MUL
        else:  # ^ is right-associative with an atom-level base
            text = f"{_print(e.left, _ATOM)}^{_print(e.right, _NEG)}"
            level = _POW
    else:
        raise TypeError(f"not an expression node: {e!r}")
    return f"({text})" if level < need else text


def to_source(e: Expr) -> str:
    """Render a tree as canonical source text.

    Re-parsing the result of `to_source` reproduces the tree for any tree
    produced by `parse` (the parser never emits negative constants, the one
    node kind the printer has to canonicalise).
    """
    return _print(e, 0)


def free_vars(e: Expr) -> frozenset[str]:
    """Names of the variables occurring in the tree."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, Call):
        return free_vars(e.arg)
    if isinstance(e, Bin):
        return free_vars(e.left) | free_vars(e.right)
    return frozenset()


# ---------------------------------------------------------------------------
# plain evaluation
# ---------------------------------------------------------------------------

def _check_pow_domain(a: Number, b: Number, at: Expr) -> None:
    neg_base = np.asarray(a) < 0
    if np.any(neg_base & (np.asarray(b) != np.floor(b))):
        raise ExprEvalError("negative base with non-integer exponent", at)
    if np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
        raise ExprEvalError("zero raised to a negative power", at)


def evaluate(e: Expr, env: Mapping[str, Number]) -> Number:
    """Evaluate a tree in IEEE double precision.

    Values bound in `env` may be floats or numpy arrays of a common shape;
    array values evaluate elementwise.  Raises ExprEvalError for unbound
    variables and for domain violations (ln of a non-positive value, square
    root of a negative value, division by zero), naming the offending
    subexpression.
    """
    with np.errstate(all="ignore"):
        return _eval(e, env)


def _eval(e: Expr, env: Mapping[str, Number]) -> Number:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Bin):
        a = _eval(e.left, env)
        b = _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprEvalError("division by zero", e)
            return a / b
        _check_pow_domain(a, b, e)
        return a ** b
    if isinstance(e, Call):
        v = _eval(e.arg, env)
        if e.fn == "ln" and np.any(np.asarray(v) <= 0):
            raise ExprEvalError("ln of a non-positive value", e)
        if e.fn == "sqrt" and np.any(np.asarray(v) < 0):
            raise ExprEvalError("sqrt of a negative value", e)
        return _CALLS[e.fn](v)
    raise TypeError(f"not an expression node: {e!r}")


_CALLS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "ln": np.log, "sqrt": np.sqrt, "abs": np.abs, "tanh": np.tanh,
}


# ---------------------------------------------------------------------------
# dual numbers (forward mode)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dual:
    """Value plus gradient with respect to the active variables.

    `grad` has shape ``(k,) + shape(value)`` where k is the number of active
    variables, so batched evaluation differentiates every sample at once.
    """

    value: Number
    grad: np.ndarray


def dual_env(values: Mapping[str, Number], active: Sequence[str]) -> dict[str, Dual]:
    """Build a dual environment with unit seeds on the `active` names.

    Every name in `values` is bound; names listed in `active` get the i-th
    unit gradient (identity seeding), all others a zero gradient.
    """
    shape = np.broadcast_shapes(*(np.shape(v) for v in values.values()))
    k = len(active)
    index = {name: i for i, name in enumerate(active)}
    env: dict[str, Dual] = {}
    for name, value in values.items():
        grad = np.zeros((k,) + shape)
        i = index.get(name)
        if i is not None:
            grad[i] = 1.0
        env[name] = Dual(np.broadcast_to(np.asarray(value, dtype=float), shape), grad)
    return env


def evaluate_dual(e: Expr, env: Mapping[str, Dual]) -> Dual:
    """Evaluate a tree on dual numbers, propagating exact partial derivatives.

    The value part equals `evaluate` on the value parts of `env`; the
    gradient part carries the partial derivatives with respect to the active
    variables seeded by the caller.  abs is given the subgradient 0 at the
    origin.  Domain errors match `evaluate`.
    """
    with np.errstate(all="ignore"):
        return _eval_dual(e, env)


def _grad_shape(env: Mapping[str, Dual]) -> tuple[int, ...]:
    for d in env.values():
        return d.grad.shape
    raise ExprEvalError("empty dual environment")


def _eval_dual(e: Expr, env: Mapping[str, Dual]) -> Dual:
    if isinstance(e, Const):
        return Dual(e.value, np.zeros(_grad_shape(env)))
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprEvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        d = _eval_dual(e.operand, env)
        return Dual(-d.value, -d.grad)
    if isinstance(e, Bin):
        a = _eval_dual(e.left, env)
        b = _eval_dual(e.right, env)
        if e.op == "+":
            return Dual(a.value + b.value, a.grad + b.grad)
        if e.op == "-":
            return Dual(a.value - b.value, a.grad - b.grad)
        if e.op == "*":
            return Dual(a.value * b.value, a.grad * b.value + a.value * b.grad)
        if e.op == "/":
            if np.any(np.asarray(b.value) == 0):
                raise ExprEvalError("division by zero", e)
            return Dual(a.value / b.value,
                        (a.grad * b.value - a.value * b.grad) / (b.value * b.value))
        return _dual_pow(a, b, e)
    if isinstance(e, Call):
        return _dual_call(e, _eval_dual(e.arg, env))
    raise TypeError(f"not an expression node: {e!r}")


def _dual_pow(a: Dual, b: Dual, at: Expr) -> Dual:
    _check_pow_domain(a.value, b.value, at)
    if not np.any(b.grad):
        # constant exponent: plain power rule, valid for negative bases too
        p = b.value
        value = a.value ** p
        grad = p * a.value ** (np.asarray(p) - 1) * a.grad
        return Dual(value, grad)
    if np.any(np.asarray(a.value) <= 0):
        raise ExprEvalError(
            "non-positive base with a variable exponent", at)
    value = a.value ** b.value
    grad = value * (b.grad * np.log(a.value) + b.value * a.grad / a.value)
    return Dual(value, grad)


# ---------------------------------------------------------------------------
# symbolic differentiation
# ---------------------------------------------------------------------------

def _c(v: float) -> Const:
    return Const(float(v))


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return Neg(b)
    return Bin("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return _c(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) and not _is(b, 0.0):
        return _c(0.0)
    if _is(b, 1.0):
        return a
    return Bin("/", a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return _c(1.0)
    return Bin("^", a, b)


_DERIVS = {
    "sin": lambda u: Call("cos", u),
    "cos": lambda u: Neg(Call("sin", u)),
    "tan": lambda u: _add(_c(1.0), _pow(Call("tan", u), _c(2.0))),
    "exp": lambda u: Call("exp", u),
    "ln": lambda u: _div(_c(1.0), u),
    "sqrt": lambda u: _div(_c(1.0), _mul(_c(2.0), Call("sqrt", u))),
    "tanh": lambda u: _sub(_c(1.0), _pow(Call("tanh", u), _c(2.0))),
}


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic partial derivative with respect to `var`.

    Lightly constant-folded so derivative trees stay compact.  abs is not
    differentiable and is rejected; use the dual-number path for expressions
    that may contain it.
    """
    if isinstance(e, Const):
        return _c(0.0)
    if isinstance(e, Var):
        return _c(1.0 if e.name == var else 0.0)
    if isinstance(e, Neg):
        d = differentiate(e.operand, var)
        return _c(0.0) if _is(d, 0.0) else Neg(d)
    if isinstance(e, Bin):
        da = differentiate(e.left, var)
        db = differentiate(e.right, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        if e.op == "/":
            return _div(_sub(_mul(da, e.right), _mul(e.left, db)),
                        _pow(e.right, _c(2.0)))
        # power rule when the exponent is constant, log form otherwise
        if isinstance(e.right, Const):
            return _mul(_mul(e.right, _pow(e.left, _c(e.right.value - 1.0))), da)
        return _mul(e, _add(_mul(db, Call("ln", e.left)),
                            _mul(e.right, _div(da, e.left))))
    if isinstance(e, Call):
        if e.fn == "abs":
            raise ExprEvalError("abs is not differentiable symbolically", e)
        inner = differentiate(e.arg, var)
        if _is(inner, 0.0):
            return _c(0.0)
        return _mul(_DERIVS[e.fn](e.arg), inner)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# compilation to plain Python (hot-loop evaluation)
# ---------------------------------------------------------------------------

def _g_div(a, b, src):
    if np.any(np.asarray(b) == 0):
        raise ExprEvalError(f"division by zero in '{src}'")
    return a / b


def _g_pow(a, b, src):
    neg = np.asarray(a) < 0
    if np.any(neg & (np.asarray(b) != np.floor(b))):
        raise ExprEvalError(f"negative base with non-integer exponent in '{src}'")
    if np.any((np.asarray(a) == 0) & (np.asarray(b) < 0)):
        raise ExprEvalError(f"zero raised to a negative power in '{src}'")
    return a ** b


def _g_ln(a, src):
    if np.any(np.asarray(a) <= 0):
        raise ExprEvalError(f"ln of a non-positive value in '{src}'")
    return np.log(a)


def _g_sqrt(a, src):
    if np.any(np.asarray(a) < 0):
        raise ExprEvalError(f"sqrt of a negative value in '{src}'")
    return np.sqrt(a)


_SAFE_CALLS = {"sin": "np.sin", "cos": "np.cos", "tan": "np.tan",
               "exp": "np.exp", "abs": "np.abs", "tanh": "np.tanh"}


def _emit(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_emit(e.operand)})"
    if isinstance(e, Bin):
        a, b = _emit(e.left), _emit(e.right)
        if e.op in "+-*":
            return f"({a} {e.op} {b})"
        if e.op == "/":
            return f"_div({a}, {b}, {to_source(e)!r})"
        if isinstance(e.right, Const) and e.right.value == np.floor(e.right.value) \
                and e.right.value >= 0:
            return f"({a} ** {b})"
        return f"_pow({a}, {b}, {to_source(e)!r})"
    if isinstance(e, Call):
        a = _emit(e.arg)
        if e.fn in _SAFE_CALLS:
            return f"{_SAFE_CALLS[e.fn]}({a})"
        return f"_{e.fn}({a}, {to_source(e)!r})"
    raise TypeError(f"not an expression node: {e!r}")


def compile_expr(e: Expr):
    """Compile a tree into ``fn(env) -> value`` for hot loops.

    Semantics match `evaluate` (same domain guards, same arithmetic); only
    the per-node interpretation overhead is gone.  Intended for integrator
    fields, which evaluate the same trees millions of times.
    """
    names = sorted(free_vars(e))
    lines = ["def _compiled(env):"]
    lines += [f"    {name} = env[{name!r}]" for name in names]
    lines.append(f"    return {_emit(e)}")
    namespace = {"np": np, "_div": _g_div, "_pow": _g_pow,
                 "_ln": _g_ln, "_sqrt": _g_sqrt}
    exec(compile("\n".join(lines), f"<expr {to_source(e)!r}>", "exec"), namespace)
    return namespace["_compiled"]


def _dual_call(e: Call, d: Dual) -> Dual:
    v, g = d.value, d.grad
    fn = e.fn
    if fn == "sin":
        return Dual(np.sin(v), np.cos(v) * g)
    if fn == "cos":
        return Dual(np.cos(v), -np.sin(v) * g)
    if fn == "tan":
        t = np.tan(v)
        return Dual(t, (1.0 + t * t) * g)
    if fn == "exp":
        ev = np.exp(v)
        return Dual(ev, ev * g)
    if fn == "ln":
        if np.any(np.asarray(v) <= 0):
            raise ExprEvalError("ln of a non-positive value", e)
        return Dual(np.log(v), g / v)
    if fn == "sqrt":
        if np.any(np.asarray(v) < 0):
            raise ExprEvalError("sqrt of a negative value", e)
        s = np.sqrt(v)
        return Dual(s, g / (2.0 * s))
    if fn == "abs":
        # sign(0) = 0, i.e. the symmetric subgradient at the kink
        return Dual(np.abs(v), np.sign(v) * g)
    if fn == "tanh":
        th = np.tanh(v)
        return Dual(th, (1.0 - th * th) * g)
    raise ExprEvalError(f"unknown function {fn!r}", e)
