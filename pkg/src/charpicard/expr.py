"""Expression language for coefficients and initial data.

Scalar expressions over the space variable ``x``, time ``t`` and solution
components ``u1`` ... ``u99``, with infix arithmetic (``+ - * / ^``),
parentheses and function calls.  Expressions are parsed to an immutable
AST that supports pointwise evaluation, symbolic partial differentiation
and compilation to a flat postfix program executed by the numeric
backends.

Builtin functions: ``sin cos exp log sqrt tanh abs`` plus three helpers
``sign`` (derivative convention for ``abs``), ``bump`` (the C-infinity
mollifier ``exp(-1/(1-y^2))`` on ``|y|<1``, zero outside) and ``dbump``
(its derivative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ExprError(ValueError):
    """Base class for expression-language failures."""


class ParseError(ExprError):
    """Syntax or name error, with the byte offset of the offending token."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DomainError(ExprError):
    """Evaluation left the real domain (log of nonpositive, x/0, ...)."""


# ---------------------------------------------------------------------------
# AST

@dataclass(frozen=True)
class Expr:
    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str  # "x" or "t"


@dataclass(frozen=True)
class UVar(Expr):
    index: int  # 1-based component index


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "tanh", "abs",
               "sign", "bump", "dbump")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

_ZERO = Const(0.0)
_ONE = Const(1.0)


# ---------------------------------------------------------------------------
# Tokenizer / parser

_OP_CHARS = {"+": "+", "-": "-", "*": "*", "/": "/", "^": "^",
             "(": "(", ")": ")"}


def _tokenize(text):
    tokens = []
    i, size = 0, len(text)
    while i < size:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OP_CHARS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < size and text[i + 1].isdigit()):
            j = i
            while j < size and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < size and text[j] in "eE":
                k = j + 1
                if k < size and text[k] in "+-":
                    k += 1
                if k < size and text[k].isdigit():
                    j = k
                    while j < size and text[j].isdigit():
                        j += 1
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ParseError(f"bad number literal '{lit}'", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < size and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character '{c}'", i)
    tokens.append(("end", None, size))
    return tokens


class _Parser:
    def __init__(self, tokens, n):
        self.tokens = tokens
        self.pos = 0
        self.n = n

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.advance()
        if tok[0] != kind:
            raise ParseError(f"expected '{kind}', found '{tok[1]}'", tok[2])
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.term()
            node = Binary("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.unary()
            node = Binary("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek()[0] == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "^":
            self.advance()
            # exponent may itself carry a unary minus: x^-2
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        kind, value, offset = self.advance()
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            if self.peek()[0] == "(":
                if value not in UNARY_FUNCS:
                    raise ParseError(f"unknown function '{value}'", offset)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            return self.variable(value, offset)
        raise ParseError(f"unexpected token '{value}'", offset)

    def variable(self, name, offset):
        if name in ("x", "t"):
            return Var(name)
        if name.startswith("u") and name[1:].isdigit():
            index = int(name[1:])
            if not 1 <= index <= 99:
                raise ParseError(f"component index '{name}' outside u1..u99",
                                 offset)
            if index > self.n:
                raise ParseError(
                    f"variable index out of range: '{name}' but n={self.n}",
                    offset)
            return UVar(index)
        raise ParseError(f"unknown identifier '{name}'", offset)


def parse(text, n):
    """Parse ``text`` into an Expr; ``n`` bounds the component indices."""
    parser = _Parser(_tokenize(text), n)
    node = parser.expr()
    tok = parser.peek()
    if tok[0] != "end":
        raise ParseError(f"trailing input '{tok[1]}'", tok[2])
    return node


# ---------------------------------------------------------------------------
# Printing (round-trips through parse to a structurally identical AST)

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


def _prec(e):
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    return 5


def to_string(e):
    if isinstance(e, Const):
        return repr(abs(e.value)) if e.value >= 0 else f"(-{abs(e.value)!r})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, UVar):
        return f"u{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_string(e.arg)
            if _prec(e.arg) < _PREC["neg"]:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_string(e.arg)})"
    if isinstance(e, Binary):
        lhs, rhs = to_string(e.left), to_string(e.right)
        p = _PREC[e.op]
        if e.op == "pow":
            if _prec(e.left) <= p:   # pow is right-associative
                lhs = f"({lhs})"
            if _prec(e.right) < _PREC["neg"]:
                rhs = f"({rhs})"
        else:
            # left-associative: an equal-precedence right child must keep
            # its parentheses or reparsing regroups it to the left
            if _prec(e.left) < p:
                lhs = f"({lhs})"
            if _prec(e.right) <= p:
                rhs = f"({rhs})"
        return f"{lhs} {_SYM[e.op]} {rhs}"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation

def _bump(y):
    w = 1.0 - y * y
    if w <= 0.0:
        return 0.0
    return math.exp(-1.0 / w)


def _dbump(y):
    w = 1.0 - y * y
    if w <= 0.0:
        return 0.0
    return math.exp(-1.0 / w) * (-2.0 * y) / w / w


def evaluate(e, x, t, u):
    """Evaluate ``e`` at the point ``(x, t, u)``; ``u`` is a sequence."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x if e.name == "x" else t
    if isinstance(e, UVar):
        return u[e.index - 1]
    if isinstance(e, Unary):
        v = evaluate(e.arg, x, t, u)
        op = e.op
        try:
            if op == "neg":
                return -v
            if op == "sin":
                return math.sin(v)
            if op == "cos":
                return math.cos(v)
            if op == "exp":
                return math.exp(v)
            if op == "tanh":
                return math.tanh(v)
            if op == "abs":
                return abs(v)
            if op == "sign":
                return float((v > 0.0) - (v < 0.0))
            if op == "bump":
                return _bump(v)
            if op == "dbump":
                return _dbump(v)
            if op == "log":
                if v <= 0.0:
                    raise DomainError(f"log of nonpositive value {v}")
                return math.log(v)
            if op == "sqrt":
                if v < 0.0:
                    raise DomainError(f"sqrt of negative value {v}")
                return math.sqrt(v)
        except OverflowError:
            raise DomainError(f"overflow in {op}({v})") from None
        raise ExprError(f"unknown unary op '{op}'")
    if isinstance(e, Binary):
        a = evaluate(e.left, x, t, u)
        b = evaluate(e.right, x, t, u)
        op = e.op
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            if b == 0.0:
                raise DomainError("division by zero")
            return a / b
        if op == "pow":
            if a == 0.0 and b < 0.0:
                raise DomainError("0 raised to a negative power")
            if a < 0.0 and b != math.floor(b):
                raise DomainError(
                    f"negative base {a} with non-integer exponent {b}")
            try:
                return math.pow(a, b)
            except OverflowError:
                raise DomainError(f"overflow in {a}^{b}") from None
        raise ExprError(f"unknown binary op '{op}'")
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# Symbolic differentiation

def _add(a, b):
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return Binary("add", a, b)


def _sub(a, b):
    if b == _ZERO:
        return a
    if a == _ZERO:
        return Unary("neg", b)
    return Binary("sub", a, b)


def _mul(a, b):
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return Binary("mul", a, b)


def _div(a, b):
    if a == _ZERO:
        return _ZERO
    if b == _ONE:
        return a
    return Binary("div", a, b)


def diff(e, var):
    """Partial derivative of ``e`` with respect to ``var`` ("x", "t", "u3", ...).

    The result is an AST whose evaluation equals the analytic partial
    derivative wherever ``e`` is differentiable; ``abs`` uses the
    convention abs'(0) = 0 via ``sign``.
    """
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Var):
        return _ONE if e.name == var else _ZERO
    if isinstance(e, UVar):
        return _ONE if var == f"u{e.index}" else _ZERO
    if isinstance(e, Unary):
        f, df = e.arg, diff(e.arg, var)
        op = e.op
        if op == "neg":
            return _ZERO if df == _ZERO else Unary("neg", df)
        if df == _ZERO and op != "dbump":
            return _ZERO
        if op == "sin":
            return _mul(Unary("cos", f), df)
        if op == "cos":
            return _mul(Unary("neg", Unary("sin", f)), df)
        if op == "exp":
            return _mul(e, df)
        if op == "log":
            return _div(df, f)
        if op == "sqrt":
            return _div(df, _mul(Const(2.0), e))
        if op == "tanh":
            return _mul(_sub(_ONE, Binary("mul", e, e)), df)
        if op == "abs":
            return _mul(Unary("sign", f), df)
        if op == "sign":
            return _ZERO  # piecewise constant
        if op == "bump":
            return _mul(Unary("dbump", f), df)
        if op == "dbump":
            raise ExprError("second derivative of bump is not supported")
        raise ExprError(f"unknown unary op '{op}'")
    if isinstance(e, Binary):
        fl, fr = e.left, e.right
        dl, dr = diff(fl, var), diff(fr, var)
        op = e.op
        if op == "add":
            return _add(dl, dr)
        if op == "sub":
            return _sub(dl, dr)
        if op == "mul":
            return _add(_mul(dl, fr), _mul(fl, dr))
        if op == "div":
            return _div(_sub(_mul(dl, fr), _mul(fl, dr)),
                        Binary("mul", fr, fr))
        if op == "pow":
            if isinstance(fr, Const):
                c = fr.value
                if c == 0.0:
                    return _ZERO
                inner = fl if c == 2.0 else Binary("pow", fl, Const(c - 1.0))
                return _mul(_mul(fr, inner), dl)
            # general case: f^g * (g' log f + g f'/f)
            term = _add(_mul(dr, Unary("log", fl)),
                        _div(_mul(fr, dl), fl))
            return _mul(e, term)
        raise ExprError(f"unknown binary op '{op}'")
    raise TypeError(f"not an Expr: {e!r}")


def u_indices(e):
    """Set of 1-based component indices referenced by ``e``."""
    if isinstance(e, UVar):
        return {e.index}
    if isinstance(e, Unary):
        return u_indices(e.arg)
    if isinstance(e, Binary):
        return u_indices(e.left) | u_indices(e.right)
    return set()


def references(e):
    """Set of variable names ("x", "t", "u<k>") appearing in ``e``."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, UVar):
        return {f"u{e.index}"}
    if isinstance(e, Unary):
        return references(e.arg)
    if isinstance(e, Binary):
        return references(e.left) | references(e.right)
    return set()


# ---------------------------------------------------------------------------
# Compilation to a postfix program (shared by the numeric backends)

OP_CONST = 0
OP_X = 1
OP_T = 2
OP_U = 3
OP_ADD = 4
OP_SUB = 5
OP_MUL = 6
OP_DIV = 7
OP_POW = 8
OP_NEG = 9
OP_SIN = 10
OP_COS = 11
OP_EXP = 12
OP_LOG = 13
OP_SQRT = 14
OP_TANH = 15
OP_ABS = 16
OP_SIGN = 17
OP_BUMP = 18
OP_DBUMP = 19

_UNARY_CODE = {"neg": OP_NEG, "sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP,
               "log": OP_LOG, "sqrt": OP_SQRT, "tanh": OP_TANH,
               "abs": OP_ABS, "sign": OP_SIGN, "bump": OP_BUMP,
               "dbump": OP_DBUMP}
_BINARY_CODE = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV,
                "pow": OP_POW}


@dataclass(frozen=True)
class Program:
    """Flat postfix form of an Expr: opcode stream plus constant pool."""

    code: np.ndarray    # int32 opcodes
    args: np.ndarray    # int32 per-op argument (const index / u index-0)
    consts: np.ndarray  # float64 constant pool
    stack_need: int

    def __len__(self):
        return len(self.code)


def compile_program(e):
    """Compile ``e`` into a :class:`Program` for the numeric backends."""
    code, args, consts = [], [], []

    def emit(node):
        if isinstance(node, Const):
            code.append(OP_CONST)
            args.append(len(consts))
            consts.append(float(node.value))
        elif isinstance(node, Var):
            code.append(OP_X if node.name == "x" else OP_T)
            args.append(-1)
        elif isinstance(node, UVar):
            code.append(OP_U)
            args.append(node.index - 1)
        elif isinstance(node, Unary):
            emit(node.arg)
            code.append(_UNARY_CODE[node.op])
            args.append(-1)
        elif isinstance(node, Binary):
            emit(node.left)
            emit(node.right)
            code.append(_BINARY_CODE[node.op])
            args.append(-1)
        else:
            raise TypeError(f"not an Expr: {node!r}")

    emit(e)
    depth = peak = 0
    for op in code:
        depth += 1 if op in (OP_CONST, OP_X, OP_T, OP_U) else \
            (0 if op in _UNARY_CODE.values() else -1)
        peak = max(peak, depth)
    return Program(np.asarray(code, dtype=np.int32),
                   np.asarray(args, dtype=np.int32),
                   np.asarray(consts, dtype=np.float64),
                   peak)
