"""Arithmetic expression language for metric components.

Grammar, lowest to highest precedence::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?        # right-associative, so 2^3^2 == 2^512
    atom   := NUMBER | 'x'<k> | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1 .. xn``.  Functions: sin cos exp sqrt cosh sinh tanh.
There is no implicit multiplication.  Unary minus binds tighter than '*'
but looser than '^', so ``-x1^2`` is ``-(x1^2)``; an exponent may itself
be signed (``x1^-2``), as in Python.

Evaluation is vectorized: variables may be bound to numpy arrays of a
common broadcastable shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "tanh": np.tanh,
}

MAX_PARSE_DEPTH = 256


class ExpressionError(ValueError):
    """Raised on malformed expression text. Carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based, as written in the source


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Num | Var | Neg | BinOp | Call


# ---------------------------------------------------------------------------
# tokenizer

_OPS = set("+-*/^()")


def _tokenize(text: str):
    """Yield (kind, value, offset) triples; kind in {num, ident, op}."""
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            yield ("op", c, i)
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExpressionError(f"bad number literal {text[i:j]!r}", i) from None
            yield ("num", value, i)
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            yield ("ident", text[i:j], i)
            i = j
            continue
        raise ExpressionError(f"unexpected character {c!r}", i)
    yield ("end", "", n)


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str, n_vars: int | None):
        self.text = text
        self.tokens = list(_tokenize(text))
        self.pos = 0
        self.n_vars = n_vars
        self.depth = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, value, offset = self.peek()
        if kind != "op" or value != op:
            raise ExpressionError(f"expected {op!r}", offset)
        return self.advance()

    def _enter(self):
        self.depth += 1
        if self.depth > MAX_PARSE_DEPTH:
            raise ExpressionError("expression too deeply nested", self.peek()[2])

    def _leave(self):
        self.depth -= 1

    def parse(self) -> Node:
        node = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ExpressionError(f"unexpected trailing input {value!r}", offset)
        return node

    def expr(self) -> Node:
        self._enter()
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = BinOp(value, node, self.term())
            else:
                break
        self._leave()
        return node

    def term(self) -> Node:
        self._enter()
        node = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = BinOp(value, node, self.unary())
            else:
                break
        self._leave()
        return node

    def unary(self) -> Node:
        self._enter()
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            node = Neg(self.unary())
        else:
            node = self.power()
        self._leave()
        return node

    def power(self) -> Node:
        self._enter()
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            base = BinOp("^", base, self.unary())
        self._leave()
        return base

    def atom(self) -> Node:
        kind, value, offset = self.advance()
        if kind == "num":
            return Num(value)
        if kind == "ident":
            if value in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(value, arg)
            if value.startswith("x") and value[1:].isdigit():
                index = int(value[1:])
                if index < 1:
                    raise ExpressionError("variable indices start at x1", offset)
                if self.n_vars is not None and index > self.n_vars:
                    raise ExpressionError(
                        f"variable x{index} out of range (chart has {self.n_vars})",
                        offset,
                    )
                return Var(index)
            raise ExpressionError(f"unknown identifier {value!r}", offset)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "end":
            raise ExpressionError("unexpected end of input", offset)
        raise ExpressionError(f"unexpected {value!r}", offset)


def parse_expression(text: str, n_vars: int | None = None) -> Node:
    """Parse expression text into an AST.

    ``n_vars``, when given, bounds the allowed variable indices (x1..xn).
    """
    if not text or not text.strip():
        raise ExpressionError("empty expression", 0)
    return _Parser(text, n_vars).parse()


# ---------------------------------------------------------------------------
# evaluation and printing

def evaluate(node: Node, coords) -> np.ndarray:
    """Evaluate an AST with variable xk bound to coords[k-1].

    coords is a sequence of scalars or broadcastable numpy arrays.  Domain
    violations (sqrt of a negative, division by zero) surface as non-finite
    entries in the result; callers decide whether that is an error.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _eval(node, coords)


def _eval(node: Node, coords):
    if isinstance(node, Num):
        return np.asarray(node.value, dtype=float)
    if isinstance(node, Var):
        if node.index > len(coords):
            raise ExpressionError(f"variable x{node.index} unbound", 0)
        return np.asarray(coords[node.index - 1], dtype=float)
    if isinstance(node, Neg):
        return -_eval(node.arg, coords)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, coords))
    if isinstance(node, BinOp):
        a = _eval(node.left, coords)
        b = _eval(node.right, coords)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return np.power(a, b)
    raise TypeError(f"not an AST node: {node!r}")


def max_var_index(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, Neg):
        return max_var_index(node.arg)
    if isinstance(node, Call):
        return max_var_index(node.arg)
    if isinstance(node, BinOp):
        return max(max_var_index(node.left), max_var_index(node.right))
    return 0


_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def to_text(node: Node) -> str:
    """Render an AST back to parseable text (round-trips through parse)."""
    return _fmt(node)[0]


def _fmt(node: Node) -> tuple[str, int]:
    """Return (text, precedence-level of the outermost operator)."""
    if isinstance(node, Num):
        if node.value < 0:
            return f"-{-node.value!r}", _LEVEL["neg"]
        return repr(node.value), _LEVEL["atom"]
    if isinstance(node, Var):
        return f"x{node.index}", _LEVEL["atom"]
    if isinstance(node, Call):
        return f"{node.func}({_fmt(node.arg)[0]})", _LEVEL["atom"]
    if isinstance(node, Neg):
        text, level = _fmt(node.arg)
        if level < _LEVEL["neg"]:
            text = f"({text})"
        return f"-{text}", _LEVEL["neg"]
    if isinstance(node, BinOp):
        lvl = _LEVEL[node.op]
        lt, ll = _fmt(node.left)
        rt, rl = _fmt(node.right)
        if node.op == "^":
            # right-associative; a parenthesized base keeps -2^2 unambiguous
            if ll < _LEVEL["atom"]:
                lt = f"({lt})"
            if rl < _LEVEL["neg"]:
                rt = f"({rt})"
        else:
            if ll < lvl:
                lt = f"({lt})"
            # left-associative: right operand needs parens at equal level
            if rl <= lvl:
                rt = f"({rt})"
        return f"{lt}{node.op}{rt}", lvl
    raise TypeError(f"not an AST node: {node!r}")
