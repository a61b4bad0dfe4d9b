"""Tiny arithmetic grammar for coefficient expressions in manifests.

Supported: float literals, the variable x, + - * / (and unary minus),
sin, cos, exp, parentheses.  Parse errors carry a 1-based column.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ValidationError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[()+\-*/]))"
)

_FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


class ParseError(ValidationError):
    def __init__(self, message: str, column: int):
        super().__init__(f"parse error at column {column}: {message}")
        self.column = column


def _tokenize(text: str):
    tokens = []  # (kind, value, column)
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = len(text) - len(stripped) + 1
            raise ParseError(f"unknown token {stripped[0]!r}", col)
        col = m.start(m.lastgroup) + 1
        value = m.group(m.lastgroup)
        tokens.append((m.lastgroup, value, col))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _eof_column(self) -> int:
        if self.tokens:
            return min(self.tokens[-1][2], len(self.text))
        return 1

    def _expect_op(self, op: str):
        tok = self._peek()
        if tok is None:
            raise ParseError(f"expected {op!r} before end of input", self._eof_column())
        if tok[0] != "op" or tok[1] != op:
            raise ParseError(f"expected {op!r}, got {tok[1]!r}", tok[2])
        self.i += 1

    def parse(self):
        node = self._expr()
        tok = self._peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing token {tok[1]!r}", tok[2])
        return node

    def _expr(self):
        node = self._term()
        while True:
            tok = self._peek()
            if tok and tok[0] == "op" and tok[1] in "+-":
                self.i += 1
                right = self._term()
                node = (np.add, node, right) if tok[1] == "+" else (np.subtract, node, right)
            else:
                return node

    def _term(self):
        node = self._unary()
        while True:
            tok = self._peek()
            if tok and tok[0] == "op" and tok[1] in "*/":
                self.i += 1
                right = self._unary()
                node = (np.multiply, node, right) if tok[1] == "*" else (np.divide, node, right)
            else:
                return node

    def _unary(self):
        tok = self._peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.i += 1
            return (np.negative, self._unary())
        return self._atom()

    def _atom(self):
        tok = self._peek()
        if tok is None:
            raise ParseError("expected an expression before end of input", self._eof_column())
        kind, value, col = tok
        if kind == "num":
            self.i += 1
            return ("const", float(value))
        if kind == "name":
            self.i += 1
            if value == "x":
                return ("var",)
            if value in _FUNCTIONS:
                self._expect_op("(")
                arg = self._expr()
                self._expect_op(")")
                return (_FUNCTIONS[value], arg)
            raise ParseError(f"unknown name {value!r}", col)
        if kind == "op" and value == "(":
            self.i += 1
            node = self._expr()
            self._expect_op(")")
            return node
        raise ParseError(f"unexpected token {value!r}", col)


def _evaluate(node, x):
    if node[0] == "const":
        return node[1]
    if node[0] == "var":
        return x
    if len(node) == 2:
        return node[0](_evaluate(node[1], x))
    return node[0](_evaluate(node[1], x), _evaluate(node[2], x))


def parse_coefficient_expression(text: str):
    """Compile an expression into a numpy-vectorized scalar function of x."""
    node = _Parser(text).parse()

    def fn(x):
        return np.broadcast_to(np.asarray(_evaluate(node, x), dtype=np.float64),
                               np.shape(x)).copy() if np.ndim(x) else float(_evaluate(node, x))

    return fn
