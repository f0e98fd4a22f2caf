"""Exact coefficient ring.

Elements are polynomials in x1, x2 over the rationals, truncated at a total
x-degree, and polynomial in a finite list of time variables truncated at a
total time degree.  Internally a series is stored as one FLINT polynomial per
homogeneous time degree, so the time truncation is a plain convolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Rational

import flint

__all__ = [
    "TimeIndex",
    "AlphaFn",
    "Truncation",
    "TruncationMismatch",
    "ScalarSeries",
    "add",
    "mul",
    "d1",
    "d2",
    "antid1",
    "dt",
    "eval_t0",
]


class TruncationMismatch(ValueError):
    """Operands were built under different truncations."""


@dataclass(frozen=True, order=True)
class TimeIndex:
    """Label (i, j) of the time variable t_ij."""

    i: int
    j: int

    def __post_init__(self):
        if not isinstance(self.i, int) or not isinstance(self.j, int):
            raise TypeError("time index entries must be integers")
        if self.j < 0:
            raise ValueError(f"time index {self}: j must be nonnegative")

    def __str__(self):
        return f"({self.i},{self.j})"

    @classmethod
    def parse(cls, obj) -> "TimeIndex":
        if isinstance(obj, TimeIndex):
            return obj
        if isinstance(obj, str):
            obj = obj.strip().strip("()[]").split(",")
        i, j = obj
        return cls(int(i), int(j))


class AlphaFn:
    """Bound alpha(j) on the admissible time indices (i, j): i <= alpha(j).

    Three kinds: ``linear`` (alpha(j) = slope * j), ``table`` (explicit values,
    missing j admit nothing) and ``full`` (every index admitted).
    """

    __slots__ = ("kind", "slope", "table")

    def __init__(self, kind: str, slope=None, table=None):
        if kind not in ("linear", "table", "full"):
            raise ValueError(f"unknown alpha kind {kind!r}")
        self.kind = kind
        self.slope = Fraction(slope) if slope is not None else None
        self.table = {int(j): Fraction(v) for j, v in (table or {}).items()}
        if kind == "linear" and self.slope is None:
            raise ValueError("linear alpha needs a slope")
        if kind == "table" and self.table.get(0, Fraction(0)) > 0:
            raise ValueError("alpha(0) must be <= 0")

    @classmethod
    def linear(cls, slope) -> "AlphaFn":
        return cls("linear", slope=slope)

    @classmethod
    def from_table(cls, table) -> "AlphaFn":
        return cls("table", table=table)

    @classmethod
    def full(cls) -> "AlphaFn":
        return cls("full")

    def __call__(self, j: int):
        """alpha(j); None stands for +infinity, -infinity is reported as False."""
        if self.kind == "full":
            return None
        if self.kind == "linear":
            return self.slope * j
        return self.table.get(j, False)

    def admits(self, k: TimeIndex) -> bool:
        bound = self(k.j)
        if bound is None:
            return True
        if bound is False:
            return False
        return k.i <= bound

    def __eq__(self, other):
        return (
            isinstance(other, AlphaFn)
            and (self.kind, self.slope, self.table)
            == (other.kind, other.slope, other.table)
        )

    def __hash__(self):
        return hash((self.kind, self.slope, tuple(sorted(self.table.items()))))

    def __repr__(self):
        if self.kind == "linear":
            return f"AlphaFn.linear({self.slope})"
        if self.kind == "table":
            return f"AlphaFn.from_table({dict(self.table)})"
        return "AlphaFn.full()"

    def to_json(self):
        if self.kind == "linear":
            return {"kind": "linear", "slope": str(self.slope)}
        if self.kind == "table":
            return {"kind": "table", "table": {str(j): str(v) for j, v in sorted(self.table.items())}}
        return {"kind": "full"}

    @classmethod
    def from_json(cls, obj) -> "AlphaFn":
        kind = obj["kind"]
        if kind == "linear":
            return cls.linear(Fraction(obj["slope"]))
        if kind == "table":
            return cls.from_table({int(j): Fraction(v) for j, v in obj["table"].items()})
        if kind == "full":
            return cls.full()
        raise ValueError(f"unknown alpha kind {kind!r}")


@dataclass(frozen=True)
class Truncation:
    """Degree caps, order floors and the active time variables of a computation."""

    xdeg: int
    d1floor: int
    d2floor: int
    tdeg: int
    active_times: tuple = field(default=())

    def __post_init__(self):
        times = tuple(TimeIndex.parse(k) for k in self.active_times)
        object.__setattr__(self, "active_times", times)
        if self.xdeg < 0 or self.tdeg < 0:
            raise ValueError("xdeg and tdeg must be nonnegative")
        if self.d1floor > 0 or self.d2floor > 0:
            raise ValueError("order floors must be <= 0")
        if len(set(times)) != len(times):
            raise ValueError("duplicate active time")
        if TimeIndex(0, 0) in times:
            raise ValueError("t_(0,0) cannot be an active time")

    @cached_property
    def ctx(self):
        names = ["x1", "x2"] + [f"t{n}" for n in range(len(self.active_times))]
        return flint.fmpq_mpoly_ctx.get(tuple(names), "lex")

    @cached_property
    def nvars(self) -> int:
        return 2 + len(self.active_times)

    @cached_property
    def zero_poly(self):
        return self.ctx.from_dict({})

    def time_position(self, k) -> int:
        k = TimeIndex.parse(k)
        try:
            return self.active_times.index(k)
        except ValueError:
            raise ValueError(f"time {k} is not active") from None

    def with_floors(self, d1floor=None, d2floor=None) -> "Truncation":
        return Truncation(
            self.xdeg,
            self.d1floor if d1floor is None else d1floor,
            self.d2floor if d2floor is None else d2floor,
            self.tdeg,
            self.active_times,
        )

    def to_json(self):
        return {
            "xdeg": self.xdeg,
            "d1floor": self.d1floor,
            "d2floor": self.d2floor,
            "tdeg": self.tdeg,
            "active_times": [[k.i, k.j] for k in self.active_times],
        }

    @classmethod
    def from_json(cls, obj) -> "Truncation":
        return cls(
            int(obj["xdeg"]),
            int(obj["d1floor"]),
            int(obj["d2floor"]),
            int(obj["tdeg"]),
            tuple(TimeIndex.parse(k) for k in obj.get("active_times", ())),
        )


def _fmpq(c):
    if isinstance(c, flint.fmpq):
        return c
    c = Fraction(c)
    return flint.fmpq(c.numerator, c.denominator)


def _frac(c) -> Fraction:
    return Fraction(int(c.p), int(c.q))


class ScalarSeries:
    """Truncated series in x1, x2 with polynomial time dependence.

    ``xexact`` is None when the stored value is the true value; otherwise it
    is the largest x-degree up to which the stored terms are still correct
    (terms beyond the x-degree cap were dropped somewhere upstream).
    """

    __slots__ = ("trunc", "parts", "xexact")

    def __init__(self, trunc: Truncation, terms=None):
        ctx = trunc.ctx
        nt = len(trunc.active_times)
        buckets = [dict() for _ in range(trunc.tdeg + 1)]
        for key, c in (terms or {}).items():
            if len(key) == 2:
                e1, e2 = key
                tdegs = (0,) * nt
            else:
                e1, e2, tdegs = key
                tdegs = tuple(tdegs)
            if len(tdegs) != nt:
                raise ValueError(f"time multidegree {tdegs} does not match {nt} active times")
            if e1 < 0 or e2 < 0 or any(d < 0 for d in tdegs):
                raise ValueError(f"negative exponent in {key}")
            if e1 + e2 > trunc.xdeg:
                raise ValueError(f"monomial {key} exceeds x-degree cap {trunc.xdeg}")
            td = sum(tdegs)
            if td > trunc.tdeg:
                raise ValueError(f"monomial {key} exceeds time-degree cap {trunc.tdeg}")
            c = Fraction(c)
            if c:
                exps = (e1, e2) + tdegs
                buckets[td][exps] = buckets[td].get(exps, 0) + c
        self.trunc = trunc
        self.parts = tuple(
            ctx.from_dict({e: _fmpq(c) for e, c in b.items() if c}) for b in buckets
        )
        self.xexact = None

    @classmethod
    def _raw(cls, trunc, parts, xexact=None) -> "ScalarSeries":
        obj = cls.__new__(cls)
        obj.trunc = trunc
        obj.parts = tuple(parts)
        obj.xexact = xexact
        return obj

    # constructors

    @classmethod
    def zero(cls, trunc) -> "ScalarSeries":
        z = trunc.zero_poly
        return cls._raw(trunc, (z,) * (trunc.tdeg + 1))

    @classmethod
    def const(cls, trunc, c) -> "ScalarSeries":
        return cls(trunc, {(0, 0): c})

    @classmethod
    def x1(cls, trunc) -> "ScalarSeries":
        return cls(trunc, {(1, 0): 1})

    @classmethod
    def x2(cls, trunc) -> "ScalarSeries":
        return cls(trunc, {(0, 1): 1})

    @classmethod
    def t(cls, trunc, k) -> "ScalarSeries":
        pos = trunc.time_position(k)
        degs = [0] * len(trunc.active_times)
        degs[pos] = 1
        return cls(trunc, {(0, 0, tuple(degs)): 1})

    @classmethod
    def coerce(cls, trunc, value) -> "ScalarSeries":
        if isinstance(value, ScalarSeries):
            value._check(trunc)
            return value
        if isinstance(value, (int, Rational, Fraction)):
            return cls.const(trunc, value)
        raise TypeError(f"cannot use {type(value).__name__} as a scalar series")

    # plumbing

    def _check(self, trunc):
        if self.trunc is not trunc and self.trunc != trunc:
            raise TruncationMismatch("operands use different truncations")

    def _other(self, other):
        if isinstance(other, ScalarSeries):
            other._check(self.trunc)
            return other
        if isinstance(other, (int, Fraction, Rational)):
            return ScalarSeries.const(self.trunc, other)
        return NotImplemented

    @staticmethod
    def _minx(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    def _capped(self, parts, xexact):
        """Apply the x-degree cap to freshly computed parts."""
        xdeg = self.trunc.xdeg
        out = []
        clipped = False
        for d, p in enumerate(parts):
            if p.total_degree() - d > xdeg:
                clipped = True
                p = self.trunc.ctx.from_dict(
                    {e: c for e, c in p.to_dict().items() if e[0] + e[1] <= xdeg}
                )
            out.append(p)
        if clipped:
            xexact = xdeg if xexact is None else min(xexact, xdeg)
        return ScalarSeries._raw(self.trunc, out, xexact)

    # arithmetic

    def __add__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return ScalarSeries._raw(
            self.trunc,
            [a + b for a, b in zip(self.parts, other.parts)],
            self._minx(self.xexact, other.xexact),
        )

    __radd__ = __add__

    def __neg__(self):
        return ScalarSeries._raw(self.trunc, [-a for a in self.parts], self.xexact)

    def __sub__(self, other):
        other = self._other(other)
        if other is NotImplemented:
            return other
        return ScalarSeries._raw(
            self.trunc,
            [a - b for a, b in zip(self.parts, other.parts)],
            self._minx(self.xexact, other.xexact),
        )

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "ScalarSeries":
        c = _fmpq(c)
        if c == 0:
            return ScalarSeries.zero(self.trunc)
        return ScalarSeries._raw(self.trunc, [a * c for a in self.parts], self.xexact)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)) or isinstance(other, flint.fmpq):
            return self.scale(other)
        other = self._other(other)
        if other is NotImplemented:
            return other
        T = self.trunc.tdeg
        z = self.trunc.zero_poly
        acc = [z] * (T + 1)
        bp = other.parts
        for da, pa in enumerate(self.parts):
            if pa.is_zero():
                continue
            for db in range(T - da + 1):
                pb = bp[db]
                if not pb.is_zero():
                    acc[da + db] = acc[da + db] + pa * pb
        return self._capped(acc, self._minx(self.xexact, other.xexact))

    __rmul__ = __mul__

    def __truediv__(self, c):
        c = Fraction(c)
        if c == 0:
            raise ZeroDivisionError("division of a series by zero")
        return self.scale(1 / c)

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        out = ScalarSeries.const(self.trunc, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def constant_term(self) -> Fraction:
        p = self.parts[0]
        c = p.to_dict().get((0,) * self.trunc.nvars)
        return Fraction(0) if c is None else _frac(c)

    def is_unit(self) -> bool:
        return self.constant_term() != 0

    def inverse(self) -> "ScalarSeries":
        """Inverse of a series with nonzero constant term (truncated geometric series)."""
        c0 = self.constant_term()
        if c0 == 0:
            raise ZeroDivisionError("series with zero constant term is not invertible")
        r = self.scale(1 / c0) - 1
        out = ScalarSeries.const(self.trunc, 1)
        power = out
        for _ in range(self.trunc.xdeg + self.trunc.tdeg + 1):
            power = -(power * r)
            out = out + power  # a zero power may still carry the clipping mark
            if power.is_zero():
                break
        return out.scale(1 / c0)

    # derivations and restrictions

    def d1(self) -> "ScalarSeries":
        return ScalarSeries._raw(
            self.trunc,
            [p.derivative(0) for p in self.parts],
            None if self.xexact is None else self.xexact - 1,
        )

    def d2(self) -> "ScalarSeries":
        return ScalarSeries._raw(
            self.trunc,
            [p.derivative(1) for p in self.parts],
            None if self.xexact is None else self.xexact - 1,
        )

    def _antid(self, var) -> "ScalarSeries":
        xexact = None if self.xexact is None else self.xexact + 1
        return self._capped([p.integral(var) for p in self.parts], xexact)

    def antid1(self) -> "ScalarSeries":
        """Antiderivative in x1 with vanishing x1-free part."""
        return self._antid(0)

    def antid2(self) -> "ScalarSeries":
        """Antiderivative in x2 with vanishing x2-free part."""
        return self._antid(1)

    def dt(self, k) -> "ScalarSeries":
        var = 2 + self.trunc.time_position(k)
        parts = [p.derivative(var) for p in self.parts[1:]] + [self.trunc.zero_poly]
        return ScalarSeries._raw(self.trunc, parts, self.xexact)

    def eval_t0(self) -> "ScalarSeries":
        z = self.trunc.zero_poly
        return ScalarSeries._raw(
            self.trunc, [self.parts[0]] + [z] * self.trunc.tdeg, self.xexact
        )

    def t_part(self, d: int) -> "ScalarSeries":
        """Homogeneous component of time degree d."""
        z = self.trunc.zero_poly
        return ScalarSeries._raw(
            self.trunc,
            [p if n == d else z for n, p in enumerate(self.parts)],
            self.xexact,
        )

    def upto_t(self, d: int) -> "ScalarSeries":
        z = self.trunc.zero_poly
        return ScalarSeries._raw(
            self.trunc,
            [p if n <= d else z for n, p in enumerate(self.parts)],
            self.xexact,
        )

    def x1_free_part(self) -> "ScalarSeries":
        """Terms not involving x1 (the projection onto the kernel of d1)."""
        ctx = self.trunc.ctx
        parts = [
            ctx.from_dict({e: c for e, c in p.to_dict().items() if e[0] == 0})
            for p in self.parts
        ]
        return ScalarSeries._raw(self.trunc, parts, self.xexact)

    # predicates

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.parts)

    def __bool__(self):
        return not self.is_zero()

    def t_mask(self) -> int:
        """Bit d is set when the time-degree-d component is nonzero."""
        m = 0
        for d, p in enumerate(self.parts):
            if not p.is_zero():
                m |= 1 << d
        return m

    def x_degree(self) -> int:
        """Largest total x-degree present (-1 for zero)."""
        best = -1
        for d, p in enumerate(self.parts):
            if not p.is_zero():
                best = max(best, max(e[0] + e[1] for e in p.monoms()))
        return best

    def in_ker_d1(self) -> bool:
        return all(p.degrees()[0] <= 0 for p in self.parts if not p.is_zero())

    def is_x_free(self) -> bool:
        return all(
            p.degrees()[0] <= 0 and p.degrees()[1] <= 0 for p in self.parts if not p.is_zero()
        )

    def is_constant(self) -> bool:
        return self.is_x_free() and all(p.is_zero() for p in self.parts[1:])

    def is_one(self) -> bool:
        return self.is_constant() and self.constant_term() == 1

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = ScalarSeries.const(self.trunc, other)
        if not isinstance(other, ScalarSeries):
            return NotImplemented
        return self.trunc == other.trunc and all(
            a == b for a, b in zip(self.parts, other.parts)
        )

    def __hash__(self):
        return hash(tuple(self.terms()))

    # term access and serialization

    def terms(self):
        """Canonical list of ((e1, e2, tdegs), Fraction), ordered by (tdegs, e1, e2)."""
        out = []
        for p in self.parts:
            for e, c in p.to_dict().items():
                e = tuple(int(v) for v in e)
                out.append(((e[0], e[1], e[2:]), _frac(c)))
        out.sort(key=lambda kv: (kv[0][2], kv[0][0], kv[0][1]))
        return out

    def to_dict(self) -> dict:
        return dict(self.terms())

    def term_count(self) -> int:
        return sum(len(p) for p in self.parts)

    def to_json(self):
        return [
            [e1, e2, list(td), c.numerator, c.denominator] for (e1, e2, td), c in self.terms()
        ]

    @classmethod
    def from_json(cls, trunc, data) -> "ScalarSeries":
        terms = {}
        for row in data:
            e1, e2, td, num, den = row
            key = (int(e1), int(e2), tuple(int(d) for d in td))
            if key in terms:
                raise ValueError(f"duplicate monomial {key}")
            terms[key] = Fraction(int(num), int(den))
        return cls(trunc, terms)

    def __str__(self):
        from ._notation import format_scalar

        return format_scalar(self)

    def __repr__(self):
        return f"ScalarSeries({self})"


def _same(a: ScalarSeries, b: ScalarSeries):
    if not isinstance(a, ScalarSeries) or not isinstance(b, ScalarSeries):
        raise TypeError("expected ScalarSeries operands")
    a._check(b.trunc)


def add(a: ScalarSeries, b: ScalarSeries) -> ScalarSeries:
    _same(a, b)
    return a + b


def mul(a: ScalarSeries, b: ScalarSeries) -> ScalarSeries:
    _same(a, b)
    return a * b


def d1(a: ScalarSeries) -> ScalarSeries:
    return a.d1()


def d2(a: ScalarSeries) -> ScalarSeries:
    return a.d2()


def antid1(a: ScalarSeries) -> ScalarSeries:
    return a.antid1()


def dt(a: ScalarSeries, k) -> ScalarSeries:
    return a.dt(k)


def eval_t0(a: ScalarSeries) -> ScalarSeries:
    return a.eval_t0()
