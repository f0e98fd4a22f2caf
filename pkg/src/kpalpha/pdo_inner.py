"""Pseudodifferential operators in d1 with scalar-series coefficients.

An InnerOp is a finite sum  sum_q a_q d1^q  (d1floor <= q), multiplied by the
generalized Leibniz rule

    (a d1^i)(b d1^j) = sum_k C(i, k) a d1^k(b) d1^(i+j-k),

with C(i, k) = i(i-1)...(i-k+1)/k! for every integer i.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import flint

from . import _exact as ex
from .scalars import ScalarSeries, Truncation, TruncationMismatch

__all__ = [
    "binom",
    "InnerOp",
    "NotInvertible",
    "NonCommuting",
    "inner_mul",
    "ord1",
    "is_monic1",
    "inner_inverse",
    "inner_split",
    "as_series_in",
    "inner_kth_root",
]


class NotInvertible(ArithmeticError):
    """The leading coefficient is not a unit."""


class NonCommuting(ArithmeticError):
    """An operator expected to commute with another one does not."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


@lru_cache(maxsize=None)
def binom(i: int, k: int):
    """Generalized binomial coefficient C(i, k) as a FLINT rational."""
    num = 1
    for m in range(k):
        num *= i - m
    return flint.fmpq(num, factorial(k))


class InnerOp:
    """Truncated Laurent series in d1^-1 with ScalarSeries coefficients.

    ``floors`` holds one exactness floor per time degree (see ``_exact``).
    """

    __slots__ = ("trunc", "coeffs", "floors", "clipped", "_ords")

    def __init__(self, trunc: Truncation, coeffs=None, floors=None, clipped=None):
        self.trunc = trunc
        clean = {}
        for q, c in (coeffs or {}).items():
            c = ScalarSeries.coerce(trunc, c)
            if q < trunc.d1floor:
                raise ValueError(f"d1-order {q} is below the floor {trunc.d1floor}")
            if not c.is_zero():
                clean[int(q)] = c
        self.coeffs = clean
        T = trunc.tdeg
        self.floors = ex.exact(T) if floors is None else ex.clamp(tuple(floors), trunc.d1floor)
        if clipped is None:
            clipped = any(c.xexact is not None for c in clean.values())
        self.clipped = clipped
        self._ords = None

    @classmethod
    def _raw(cls, trunc, coeffs, floors, clipped):
        obj = cls.__new__(cls)
        obj.trunc = trunc
        obj.coeffs = coeffs
        obj.floors = floors
        obj.clipped = clipped
        obj._ords = None
        return obj

    # constructors

    @classmethod
    def zero(cls, trunc) -> "InnerOp":
        return cls._raw(trunc, {}, ex.exact(trunc.tdeg), False)

    @classmethod
    def one(cls, trunc) -> "InnerOp":
        return cls(trunc, {0: 1})

    @classmethod
    def scalar(cls, trunc, s) -> "InnerOp":
        return cls(trunc, {0: s})

    @classmethod
    def d1pow(cls, trunc, n: int, c=1) -> "InnerOp":
        """c * d1^n (dropped, with a floor, if n lies below the window)."""
        if n < trunc.d1floor:
            return cls._raw(trunc, {}, ex.uniform(trunc.tdeg, trunc.d1floor), False)
        return cls(trunc, {n: c})

    # structure

    def _check(self, other: "InnerOp"):
        if self.trunc is not other.trunc and self.trunc != other.trunc:
            raise TruncationMismatch("operands use different truncations")

    def is_exact_zero(self) -> bool:
        return not self.coeffs and all(f is None for f in self.floors)

    def t_mask(self) -> int:
        m = 0
        for c in self.coeffs.values():
            m |= c.t_mask()
        return m

    def unknown_mask(self) -> int:
        return sum(1 << d for d, f in enumerate(self.floors) if f is not None)

    def ords_by_degree(self) -> tuple:
        if self._ords is None:
            T = self.trunc.tdeg
            ords = [None] * (T + 1)
            for q, c in self.coeffs.items():
                m = c.t_mask()
                for d in range(T + 1):
                    if m >> d & 1 and (ords[d] is None or q > ords[d]):
                        ords[d] = q
            self._ords = tuple(ords)
        return self._ords

    def eff_ords(self) -> tuple:
        return ex.effective_orders(self.ords_by_degree(), self.floors)

    @property
    def exact_floor(self):
        """Most conservative single floor over all time degrees."""
        return ex.worst(self.floors)

    def ord1(self) -> int:
        if not self.coeffs:
            raise ValueError("ord1 of the zero operator")
        return max(self.coeffs)

    def leading(self) -> ScalarSeries:
        return self.coeffs[self.ord1()]

    def is_monic1(self) -> bool:
        return bool(self.coeffs) and self.leading().is_one()

    def coeff(self, q: int) -> ScalarSeries:
        c = self.coeffs.get(q)
        return ScalarSeries.zero(self.trunc) if c is None else c

    # linear structure

    def __add__(self, other):
        if not isinstance(other, InnerOp):
            other = InnerOp.scalar(self.trunc, other)
        self._check(other)
        out = dict(self.coeffs)
        for q, c in other.coeffs.items():
            s = out.get(q)
            if s is None:
                out[q] = c
            else:
                s = s + c
                if s.is_zero():
                    del out[q]
                else:
                    out[q] = s
        return InnerOp._raw(
            self.trunc, out, ex.merge(self.floors, other.floors), self.clipped or other.clipped
        )

    __radd__ = __add__

    def __neg__(self):
        return InnerOp._raw(
            self.trunc, {q: -c for q, c in self.coeffs.items()}, self.floors, self.clipped
        )

    def __sub__(self, other):
        if not isinstance(other, InnerOp):
            other = InnerOp.scalar(self.trunc, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "InnerOp":
        if c == 0:
            return InnerOp._raw(self.trunc, {}, self.floors, self.clipped)
        if c == 1:
            return self
        return InnerOp._raw(
            self.trunc, {q: s.scale(c) for q, s in self.coeffs.items()}, self.floors, self.clipped
        )

    def lmul_scalar(self, s: ScalarSeries) -> "InnerOp":
        """s * self (left multiplication needs no Leibniz terms)."""
        out = {}
        for q, c in self.coeffs.items():
            p = s * c
            if not p.is_zero():
                out[q] = p
        oa = self.eff_ords()
        fs = ex.exact(self.trunc.tdeg)
        floors = ex.product(fs, tuple(0 if m else None for m in _degree_flags(s)), self.floors, oa)
        floors = ex.clamp(floors, self.trunc.d1floor)
        return InnerOp._raw(
            self.trunc, out, floors, self.clipped or s.xexact is not None or _any_clip(out)
        )

    def __mul__(self, other):
        if isinstance(other, InnerOp):
            return inner_mul(self, other)
        if isinstance(other, ScalarSeries):
            return inner_mul(self, InnerOp.scalar(self.trunc, other))
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, ScalarSeries):
            return self.lmul_scalar(other)
        return self.scale(other)

    def __pow__(self, n: int) -> "InnerOp":
        if n < 0:
            return inner_inverse(self) ** (-n)
        out = InnerOp.one(self.trunc)
        for _ in range(n):
            out = out * self
        return out

    # coefficientwise maps

    def map_coeffs(self, fn, floors=None) -> "InnerOp":
        out = {}
        for q, c in self.coeffs.items():
            v = fn(c)
            if not v.is_zero():
                out[q] = v
        return InnerOp._raw(
            self.trunc,
            out,
            self.floors if floors is None else floors,
            self.clipped or _any_clip(out),
        )

    def d1coeffs(self) -> "InnerOp":
        """[d1, self]: coefficientwise x1-derivative."""
        return self.map_coeffs(ScalarSeries.d1)

    def d2(self) -> "InnerOp":
        """Coefficientwise x2-derivative (d2 commutes with d1)."""
        return self.map_coeffs(ScalarSeries.d2)

    def dt(self, k) -> "InnerOp":
        pos = self.trunc.time_position(k)
        k = self.trunc.active_times[pos]
        return self.map_coeffs(lambda c: c.dt(k), floors=ex.shift_down(self.floors))

    def eval_t0(self) -> "InnerOp":
        return self.map_coeffs(ScalarSeries.eval_t0, floors=ex.only_t0(self.floors))

    def upto_t(self, d: int) -> "InnerOp":
        return self.map_coeffs(lambda c: c.upto_t(d), floors=ex.upto(self.floors, d))

    def t_part(self, d: int) -> "InnerOp":
        floors = tuple(f if n == d else None for n, f in enumerate(self.floors))
        return self.map_coeffs(lambda c: c.t_part(d), floors=floors)

    def split(self):
        """(plus, minus): orders >= 0 and orders < 0."""
        plus = {q: c for q, c in self.coeffs.items() if q >= 0}
        minus = {q: c for q, c in self.coeffs.items() if q < 0}
        pf = tuple(None if f is None or f <= 0 else f for f in self.floors)
        return (
            InnerOp._raw(self.trunc, plus, pf, self.clipped),
            InnerOp._raw(self.trunc, minus, self.floors, self.clipped),
        )

    def window(self, lo: int) -> "InnerOp":
        """Drop orders below ``lo`` and record the loss in the floors."""
        out = {q: c for q, c in self.coeffs.items() if q >= lo}
        lost = 0
        for q, c in self.coeffs.items():
            if q < lo:
                lost |= c.t_mask()
        return InnerOp._raw(self.trunc, out, ex.raise_on(self.floors, lo, lost), self.clipped)

    def exact_part(self) -> "InnerOp":
        """Only the terms inside the exact region."""
        out = {}
        for q, c in self.coeffs.items():
            keep = [
                p if (f is None or q >= f) else self.trunc.zero_poly
                for p, f in zip(c.parts, self.floors)
            ]
            s = ScalarSeries._raw(self.trunc, keep, c.xexact)
            if not s.is_zero():
                out[q] = s
        return InnerOp._raw(self.trunc, out, self.floors, self.clipped)

    # comparisons

    def is_zero_exact(self, maxdeg=None) -> bool:
        """True when every term inside the exact region (and time degree <= maxdeg) vanishes."""
        return not self.exact_terms(maxdeg)

    def exact_terms(self, maxdeg=None):
        """[(q, d, series)] for nonzero components inside the exact region."""
        out = []
        T = self.trunc.tdeg if maxdeg is None else maxdeg
        for q in sorted(self.coeffs, reverse=True):
            c = self.coeffs[q]
            for d, p in enumerate(c.parts):
                if d > T or p.is_zero():
                    continue
                f = self.floors[d]
                if f is None or q >= f:
                    out.append((q, d, c.t_part(d)))
        return out

    def equal_exact(self, other: "InnerOp", maxdeg=None) -> bool:
        return (self - other).is_zero_exact(maxdeg)

    def __eq__(self, other):
        if not isinstance(other, InnerOp):
            return NotImplemented
        return (
            self.trunc == other.trunc
            and self.floors == other.floors
            and self.coeffs.keys() == other.coeffs.keys()
            and all(self.coeffs[q] == other.coeffs[q] for q in self.coeffs)
        )

    def __hash__(self):
        return hash((tuple(sorted(self.coeffs)), self.floors))

    def covered_orders(self, d: int = 0):
        """Orders of the storage window that are exact in time degree d."""
        f = self.floors[d]
        lo = self.trunc.d1floor if f is None else f
        return lo

    # serialization

    def to_json(self):
        return {
            "exact_floor": ex.to_json(self.floors),
            "coeffs": [[q, self.coeffs[q].to_json()] for q in sorted(self.coeffs, reverse=True)],
        }

    @classmethod
    def from_json(cls, trunc, data) -> "InnerOp":
        coeffs = {}
        for q, s in data["coeffs"]:
            if int(q) in coeffs:
                raise ValueError(f"duplicate d1-order {q}")
            coeffs[int(q)] = ScalarSeries.from_json(trunc, s)
        return cls(trunc, coeffs, ex.from_json(data.get("exact_floor"), trunc.tdeg))

    def __str__(self):
        from ._notation import format_inner

        return format_inner(self)

    def __repr__(self):
        return f"InnerOp({self})"


def _degree_flags(s: ScalarSeries):
    m = s.t_mask()
    return [bool(m >> d & 1) for d in range(s.trunc.tdeg + 1)]


def _any_clip(coeffs) -> bool:
    return any(c.xexact is not None for c in coeffs.values())


def _derivatives(c: ScalarSeries, fn):
    out = [c]
    while True:
        nxt = fn(out[-1])
        if nxt.is_zero():
            return out
        out.append(nxt)


def inner_mul(a: InnerOp, b: InnerOp) -> InnerOp:
    """Leibniz product in the d1 variable with floor propagation."""
    a._check(b)
    trunc = a.trunc
    T = trunc.tdeg
    if a.is_exact_zero() or b.is_exact_zero():
        return InnerOp.zero(trunc)
    lo = trunc.d1floor
    acc = {}
    dropped = 0
    derivs = {j: _derivatives(bj, ScalarSeries.d1) for j, bj in b.coeffs.items()}
    for i, ai in a.coeffs.items():
        ma = ai.t_mask()
        for j, ds in derivs.items():
            kmax = i if i >= 0 else len(ds) - 1
            for k in range(min(kmax, len(ds) - 1) + 1):
                q = i + j - k
                if q < lo:
                    dropped |= ex.mask_product(ma, ds[k].t_mask(), T)
                    break
                term = ai * ds[k]
                c = binom(i, k)
                if c != 1:
                    term = term.scale(c)
                prev = acc.get(q)
                acc[q] = term if prev is None else prev + term
    coeffs = {q: c for q, c in acc.items() if not c.is_zero()}
    floors = ex.product(a.floors, a.eff_ords(), b.floors, b.eff_ords())
    floors = ex.raise_on(floors, lo, dropped)
    floors = ex.clamp(floors, lo)
    return InnerOp._raw(trunc, coeffs, floors, a.clipped or b.clipped or _any_clip(coeffs))


def ord1(a: InnerOp) -> int:
    return a.ord1()


def is_monic1(a: InnerOp) -> bool:
    return a.is_monic1()


def commutator(a: InnerOp, b: InnerOp) -> InnerOp:
    return a * b - b * a


def inner_inverse(a: InnerOp) -> InnerOp:
    """Inverse of an operator whose leading coefficient is a unit (Neumann series)."""
    trunc = a.trunc
    if not a.coeffs:
        raise NotInvertible("the zero operator is not invertible")
    n = a.ord1()
    c = a.coeffs[n]
    if not c.is_unit():
        raise NotInvertible(f"leading coefficient {c} at d1-order {n} is not a unit")
    lead_inv = InnerOp.d1pow(trunc, -n) * InnerOp.scalar(trunc, c.inverse())
    one = InnerOp.one(trunc)
    q = one - lead_inv * a
    r = one
    for _ in range(max(0, n + 1 - trunc.d1floor) + 3):
        nxt = one + q * r
        if nxt == r:
            break
        r = nxt
    else:
        raise ArithmeticError("Neumann series did not terminate inside the window")
    return r * lead_inv


def inner_split(a: InnerOp):
    return a.split()


def as_series_in(a: InnerOp, u0: InnerOp):
    """Write a commuting operator as  sum_q c_q u0^q  with c_q free of x1.

    Returns the list [(q, c_q)] in decreasing q.  Terms below the exact
    region of ``a`` are not expanded.
    """
    if not (u0.is_monic1() and u0.ord1() == 1):
        raise ValueError("expansion variable must be monic of d1-order 1")
    trunc = a.trunc
    powers = {0: InnerOp.one(trunc)}
    inv = None

    def power(q):
        nonlocal inv
        if q not in powers:
            if q > 0:
                powers[q] = power(q - 1) * u0
            else:
                if inv is None:
                    inv = inner_inverse(u0)
                powers[q] = power(q + 1) * inv
        return powers[q]

    out = []
    r = a
    while True:
        live = r.exact_part()
        if not live.coeffs:
            break
        q = live.ord1()
        c = live.coeffs[q]
        if not c.in_ker_d1():
            raise NonCommuting(
                f"coefficient {c} at d1-order {q} depends on x1; the operator does not commute with u0",
                order=q,
            )
        out.append((q, c))
        r = r - c * power(q)
        if q < trunc.d1floor:
            break
    return out


def inner_kth_root(a: InnerOp, k: int) -> InnerOp:
    """Monic k-th root, solved order by order from the leading term."""
    if k < 1:
        raise ValueError("root index must be positive")
    if not a.is_monic1():
        raise ValueError("k-th root needs a monic operator")
    p = a.ord1()
    if p % k:
        raise ValueError(f"d1-order {p} is not divisible by {k}")
    trunc = a.trunc
    s = p // k
    shift = (k - 1) * s
    b = InnerOp.d1pow(trunc, s)
    solved = set()
    for _ in range(p - trunc.d1floor + 3):
        e = (a - b ** k).exact_part()
        live = [q for q in e.coeffs if q not in solved]
        if not live:
            break
        q = max(live)
        pos = q - shift
        if pos < trunc.d1floor:
            break
        solved.add(q)
        b = b + InnerOp(trunc, {pos: e.coeffs[q].scale(flint.fmpq(1, k))})
    return _root_floors(a, b, k, s, shift)


def _root_floors(a, b, k, s, shift):
    """Attach floors to a candidate root b from the residual b^k - a."""
    trunc = a.trunc
    r = a - b ** k
    floors = r.floors
    if not r.is_zero_exact():
        top = max(q for q, _, _ in r.exact_terms())
        floors = ex.merge(floors, ex.uniform(trunc.tdeg, top + 1))
    # an unresolved residual order q corresponds to root order q - shift
    rf = tuple(None if f is None else f - shift for f in floors)
    bf = ex.clamp(ex.merge(b.floors, rf), trunc.d1floor)
    return InnerOp._raw(trunc, b.coeffs, bf, b.clipped)
