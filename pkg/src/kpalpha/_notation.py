"""Human-readable operator notation.

Terms are written as products of factors separated by ``*``::

    3/2*x1^2*t(0,1)*D1^-1*D2^2 - x2 + D2

Factors are multiplied in the order written, so ``D1*x1`` means x1*D1 + 1.
A parenthesized sum is a factor and may carry an integer power, as in
``(D2 + x1)^3`` or ``(1 + x2*D2^-1)^-1``.
The formatter always emits normal order (coefficient, then D1, then D2), so
formatting followed by parsing gives back the same operator.
"""

from __future__ import annotations

import re
from fractions import Fraction


class ParseError(ValueError):
    """Malformed operator text; carries the line and column of the problem."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


def _power(name, e):
    return name if e == 1 else f"{name}^{e}"


def _monomial(trunc, e1, e2, tdegs):
    out = []
    if e1:
        out.append(_power("x1", e1))
    if e2:
        out.append(_power("x2", e2))
    for k, d in zip(trunc.active_times, tdegs):
        if d:
            out.append(_power(f"t({k.i},{k.j})", d))
    return out


def _scalar_terms(s):
    """[(Fraction, [factor strings])] in canonical order."""
    return [(c, _monomial(s.trunc, e1, e2, td)) for (e1, e2, td), c in s.terms()]


def _join(terms):
    """Join signed (coefficient, factors) pairs into a sum."""
    if not terms:
        return "0"
    pieces = []
    for n, (c, factors) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        c = abs(c)
        if not factors:
            body = str(c)
        elif c == 1:
            body = "*".join(factors)
        else:
            body = "*".join([str(c)] + factors)
        if n == 0:
            pieces.append(body if sign == "+" else f"-{body}")
        else:
            pieces.append(f" {sign} {body}")
    return "".join(pieces)


def format_scalar(s) -> str:
    return _join(_scalar_terms(s))


def _inner_terms(a, extra=()):
    out = []
    for q in sorted(a.coeffs, reverse=True):
        tail = ([_power("D1", q)] if q else []) + list(extra)
        for c, factors in _scalar_terms(a.coeffs[q]):
            out.append((c, factors + tail))
    return out


def format_inner(a) -> str:
    return _join(_inner_terms(a))


def format_pdo(a) -> str:
    out = []
    for m in sorted(a.coeffs, reverse=True):
        extra = [_power("D2", m)] if m else []
        out.extend(_inner_terms(a.coeffs[m], extra))
    return _join(out)


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<nl>\n)
  | (?P<num>\d+(?:/\d+)?)
  | (?P<time>t\(\s*-?\d+\s*,\s*\d+\s*\))
  | (?P<name>x1|x2|D1|D2)
  | (?P<op>[-+*^()])
    """,
    re.VERBOSE,
)


def _tokens(text):
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        pos = m.end()
        if kind == "nl":
            line, col = line + 1, 1
            continue
        if kind != "ws":
            yield kind, m.group(), line, col
        col += len(m.group())
    yield "end", "", line, col


class _Parser:
    def __init__(self, text, trunc):
        from .pdo import PdoOp

        self.PdoOp = PdoOp
        self.trunc = trunc
        self.toks = list(_tokens(text))
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        _, _, line, col = tok or self.peek()
        raise ParseError(message, line, col)

    def exponent(self):
        if self.peek()[1] != "^":
            return 1
        self.take()
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        tok = self.take()
        if tok[0] != "num" or "/" in tok[1]:
            self.fail("expected an integer exponent", tok)
        return sign * int(tok[1])

    def factor(self):
        from .pdo_inner import InnerOp
        from .scalars import ScalarSeries

        PdoOp, trunc = self.PdoOp, self.trunc
        tok = self.take()
        kind, text = tok[0], tok[1]
        if text == "(":
            inner = self.sum()
            if self.peek()[1] != ")":
                self.fail("expected ')'")
            self.take()
            try:
                return inner ** self.exponent()
            except (ValueError, ArithmeticError) as err:
                self.fail(str(err), tok)
        try:
            if kind == "num":
                return PdoOp.scalar(trunc, Fraction(text))
            if kind == "time":
                i, j = re.findall(r"-?\d+", text)
                pos = trunc.time_position((int(i), int(j)))
                e = self.exponent()
                if e < 0:
                    self.fail("negative power of a time variable", tok)
                degs = [0] * len(trunc.active_times)
                degs[pos] = e
                return PdoOp.scalar(trunc, ScalarSeries(trunc, {(0, 0, tuple(degs)): 1}))
            if kind == "name":
                e = self.exponent()
                if text in ("x1", "x2"):
                    if e < 0:
                        self.fail(f"negative power of {text}", tok)
                    key = (e, 0) if text == "x1" else (0, e)
                    return PdoOp.scalar(trunc, ScalarSeries(trunc, {key: 1}))
                floor = trunc.d1floor if text == "D1" else trunc.d2floor
                if e < floor:
                    self.fail(f"{text}^{e} lies below the order floor {floor}", tok)
                if text == "D1":
                    return PdoOp.from_inner(InnerOp.d1pow(trunc, e))
                return PdoOp.d2pow(trunc, e)
        except ParseError:
            raise
        except ValueError as err:
            self.fail(str(err), tok)
        self.fail(f"expected a factor, found {text or 'end of input'!r}", tok)

    def term(self):
        out = self.factor()
        while self.peek()[1] == "*":
            self.take()
            out = out * self.factor()
        return out

    def sum(self):
        sign = 1
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        out = self.term()
        if sign < 0:
            out = -out
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            t = self.term()
            out = out + t if op == "+" else out - t
        return out

    def expr(self):
        out = self.sum()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return out


def parse_operator(text: str, trunc):
    """Parse operator text into a PdoOp under the given truncation."""
    if not text.strip():
        raise ParseError("empty operator", 1, 1)
    return _Parser(text, trunc).expr()
