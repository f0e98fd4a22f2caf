"""The full operator ring: Laurent series in d2^-1 with InnerOp coefficients.

Multiplication applies the Leibniz rule in the d2 variable; d2 acts on an
InnerOp through its scalar coefficients only.  Levels below the exactness
floor of some time degree are unknown there; each stored level also carries
its own d1 floors.
"""

from __future__ import annotations

import flint

from . import _exact as ex
from .pdo_inner import (
    InnerOp,
    NotInvertible,
    binom,
    inner_inverse,
    inner_kth_root,
)
from .scalars import ScalarSeries, Truncation, TruncationMismatch

__all__ = [
    "PdoOp",
    "mul",
    "commutator",
    "commute_criterion",
    "split",
    "inverse",
    "kth_root",
    "conjugate",
    "dt_op",
]


class PdoOp:
    """Finite sum  sum_m A_m d2^m  with InnerOp coefficients A_m (m >= d2floor)."""

    __slots__ = ("trunc", "coeffs", "floors", "clipped", "_ords")

    def __init__(self, trunc: Truncation, coeffs=None, floors=None):
        self.trunc = trunc
        clean = {}
        for m, a in (coeffs or {}).items():
            if m < trunc.d2floor:
                raise ValueError(f"d2-order {m} is below the floor {trunc.d2floor}")
            if not isinstance(a, InnerOp):
                a = InnerOp.scalar(trunc, a)
            a._check(InnerOp.zero(trunc))
            if not a.is_exact_zero():
                clean[int(m)] = a
        self.coeffs = clean
        T = trunc.tdeg
        self.floors = ex.exact(T) if floors is None else ex.clamp(tuple(floors), trunc.d2floor)
        self.clipped = any(a.clipped for a in clean.values())
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
    def zero(cls, trunc) -> "PdoOp":
        return cls._raw(trunc, {}, ex.exact(trunc.tdeg), False)

    @classmethod
    def one(cls, trunc) -> "PdoOp":
        return cls.from_inner(InnerOp.one(trunc))

    @classmethod
    def scalar(cls, trunc, s) -> "PdoOp":
        return cls.from_inner(InnerOp.scalar(trunc, s))

    @classmethod
    def from_inner(cls, a: InnerOp, m: int = 0) -> "PdoOp":
        """The operator a * d2^m."""
        trunc = a.trunc
        if m < trunc.d2floor:
            return cls._raw(trunc, {}, ex.uniform(trunc.tdeg, trunc.d2floor), a.clipped)
        if a.is_exact_zero():
            return cls.zero(trunc)
        return cls._raw(trunc, {m: a}, ex.exact(trunc.tdeg), a.clipped)

    @classmethod
    def d2pow(cls, trunc, m: int) -> "PdoOp":
        return cls.from_inner(InnerOp.one(trunc), m)

    @classmethod
    def d1pow(cls, trunc, n: int) -> "PdoOp":
        return cls.from_inner(InnerOp.d1pow(trunc, n))

    # structure

    def _check(self, other: "PdoOp"):
        if self.trunc is not other.trunc and self.trunc != other.trunc:
            raise TruncationMismatch("operands use different truncations")

    def _coerce(self, other):
        if isinstance(other, PdoOp):
            self._check(other)
            return other
        if isinstance(other, InnerOp):
            return PdoOp.from_inner(other)
        return PdoOp.scalar(self.trunc, other)

    def is_exact_zero(self) -> bool:
        return not self.coeffs and all(f is None for f in self.floors)

    def level_mask(self, m: int) -> int:
        """Time degrees in which level m may be nonzero (known or unknown)."""
        a = self.coeffs[m]
        return a.t_mask() | a.unknown_mask()

    def ords_by_degree(self) -> tuple:
        if self._ords is None:
            T = self.trunc.tdeg
            ords = [None] * (T + 1)
            for m in self.coeffs:
                mask = self.level_mask(m)
                for d in range(T + 1):
                    if mask >> d & 1 and (ords[d] is None or m > ords[d]):
                        ords[d] = m
            self._ords = tuple(ords)
        return self._ords

    def eff_ords(self) -> tuple:
        return ex.effective_orders(self.ords_by_degree(), self.floors)

    @property
    def exact_floor2(self):
        return ex.worst(self.floors)

    def ord2(self) -> int:
        live = [m for m, a in self.coeffs.items() if a.coeffs]
        if not live:
            raise ValueError("ord2 of the zero operator")
        return max(live)

    def leading(self) -> InnerOp:
        return self.coeffs[self.ord2()]

    def is_monic(self) -> bool:
        return bool(self.coeffs) and any(a.coeffs for a in self.coeffs.values()) and self.leading().is_monic1()

    def full_order(self):
        """(ord1 of the plus part of the leading coefficient, ord2)."""
        m = self.ord2()
        plus, _ = self.coeffs[m].split()
        return (plus.ord1() if plus.coeffs else None, m)

    def coeff(self, m: int) -> InnerOp:
        a = self.coeffs.get(m)
        return InnerOp.zero(self.trunc) if a is None else a

    def level_exact(self, m: int, d: int) -> bool:
        f = self.floors[d]
        return f is None or m >= f

    # linear structure

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.coeffs)
        for m, b in other.coeffs.items():
            a = out.get(m)
            if a is None:
                out[m] = b
            else:
                s = a + b
                if s.is_exact_zero():
                    del out[m]
                else:
                    out[m] = s
        return PdoOp._raw(
            self.trunc, out, ex.merge(self.floors, other.floors), self.clipped or other.clipped
        )

    __radd__ = __add__

    def __neg__(self):
        return PdoOp._raw(
            self.trunc, {m: -a for m, a in self.coeffs.items()}, self.floors, self.clipped
        )

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "PdoOp":
        if c == 1:
            return self
        out = {m: a.scale(c) for m, a in self.coeffs.items()}
        out = {m: a for m, a in out.items() if not a.is_exact_zero()}
        return PdoOp._raw(self.trunc, out, self.floors, self.clipped)

    def __mul__(self, other):
        if isinstance(other, (PdoOp, InnerOp, ScalarSeries)):
            return mul(self, self._coerce(other))
        return self.scale(other)

    def __rmul__(self, other):
        if isinstance(other, (InnerOp, ScalarSeries)):
            return mul(self._coerce(other), self)
        return self.scale(other)

    def __pow__(self, n: int) -> "PdoOp":
        if n < 0:
            return inverse(self) ** (-n)
        out = PdoOp.one(self.trunc)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    # coefficientwise maps

    def map_levels(self, fn, floors=None) -> "PdoOp":
        out = {}
        for m, a in self.coeffs.items():
            v = fn(a)
            if not v.is_exact_zero():
                out[m] = v
        return PdoOp._raw(
            self.trunc,
            out,
            self.floors if floors is None else floors,
            self.clipped or any(a.clipped for a in out.values()),
        )

    def d2coeffs(self) -> "PdoOp":
        """[d2, self]: x2-derivative of every scalar coefficient."""
        return self.map_levels(InnerOp.d2)

    def dt(self, k) -> "PdoOp":
        self.trunc.time_position(k)
        return self.map_levels(lambda a: a.dt(k), floors=ex.shift_down(self.floors))

    def eval_t0(self) -> "PdoOp":
        return self.map_levels(InnerOp.eval_t0, floors=ex.only_t0(self.floors))

    def upto_t(self, d: int) -> "PdoOp":
        return self.map_levels(lambda a: a.upto_t(d), floors=ex.upto(self.floors, d))

    def t_part(self, d: int) -> "PdoOp":
        floors = tuple(f if n == d else None for n, f in enumerate(self.floors))
        return self.map_levels(lambda a: a.t_part(d), floors=floors)

    def split(self):
        """(plus, minus): d2-orders >= 0 and d2-orders < 0."""
        plus = {m: a for m, a in self.coeffs.items() if m >= 0}
        minus = {m: a for m, a in self.coeffs.items() if m < 0}
        pf = tuple(None if f is None or f <= 0 else f for f in self.floors)
        return (
            PdoOp._raw(self.trunc, plus, pf, any(a.clipped for a in plus.values())),
            PdoOp._raw(self.trunc, minus, self.floors, any(a.clipped for a in minus.values())),
        )

    def plus(self) -> "PdoOp":
        return self.split()[0]

    def minus(self) -> "PdoOp":
        return self.split()[1]

    def window(self, lo: int) -> "PdoOp":
        """Drop d2-orders below ``lo`` and record the loss."""
        out = {m: a for m, a in self.coeffs.items() if m >= lo}
        lost = 0
        for m in self.coeffs:
            if m < lo:
                lost |= self.level_mask(m)
        return PdoOp._raw(self.trunc, out, ex.raise_on(self.floors, lo, lost), self.clipped)

    def exact_part(self) -> "PdoOp":
        out = {}
        for m, a in self.coeffs.items():
            keep = a.exact_part()
            parts = {}
            for q, c in keep.coeffs.items():
                ps = [
                    p if self.level_exact(m, d) else self.trunc.zero_poly
                    for d, p in enumerate(c.parts)
                ]
                s = ScalarSeries._raw(self.trunc, ps, c.xexact)
                if not s.is_zero():
                    parts[q] = s
            if parts:
                out[m] = InnerOp._raw(self.trunc, parts, a.floors, a.clipped)
        return PdoOp._raw(self.trunc, out, self.floors, self.clipped)

    # comparisons

    def exact_terms(self, maxdeg=None):
        """[(m, q, d, series)] for nonzero components inside the exact region."""
        out = []
        for m in sorted(self.coeffs, reverse=True):
            for q, d, s in self.coeffs[m].exact_terms(maxdeg):
                if self.level_exact(m, d):
                    out.append((m, q, d, s))
        return out

    def is_zero_exact(self, maxdeg=None) -> bool:
        return not self.exact_terms(maxdeg)

    def equal_exact(self, other, maxdeg=None) -> bool:
        return (self - other).is_zero_exact(maxdeg)

    def __eq__(self, other):
        if not isinstance(other, PdoOp):
            return NotImplemented
        return (
            self.trunc == other.trunc
            and self.floors == other.floors
            and self.coeffs.keys() == other.coeffs.keys()
            and all(self.coeffs[m] == other.coeffs[m] for m in self.coeffs)
        )

    def __hash__(self):
        return hash((tuple(sorted(self.coeffs)), self.floors))

    def exact_region(self):
        """Per time degree: (d2 floor, {level: d1 floor}) describing what is known."""
        return [
            (f, {m: a.floors[d] for m, a in sorted(self.coeffs.items(), reverse=True)})
            for d, f in enumerate(self.floors)
        ]

    # serialization

    def to_json(self):
        return {
            "exact_floor2": ex.to_json(self.floors),
            "coeffs": [[m, self.coeffs[m].to_json()] for m in sorted(self.coeffs, reverse=True)],
        }

    @classmethod
    def from_json(cls, trunc, data) -> "PdoOp":
        coeffs = {}
        for m, a in data["coeffs"]:
            if int(m) in coeffs:
                raise ValueError(f"duplicate d2-order {m}")
            coeffs[int(m)] = InnerOp.from_json(trunc, a)
        return cls(trunc, coeffs, ex.from_json(data.get("exact_floor2"), trunc.tdeg))

    @classmethod
    def parse(cls, trunc, text: str) -> "PdoOp":
        from ._notation import parse_operator

        return parse_operator(text, trunc)

    def __str__(self):
        from ._notation import format_pdo

        return format_pdo(self)

    def __repr__(self):
        return f"PdoOp({self})"


def _d2_derivatives(a: InnerOp):
    out = [a]
    while True:
        nxt = out[-1].d2()
        if not nxt.coeffs:
            return out
        out.append(nxt)


def mul(a: PdoOp, b: PdoOp) -> PdoOp:
    """Leibniz product in the d2 variable with floor propagation."""
    a._check(b)
    trunc = a.trunc
    T = trunc.tdeg
    if a.is_exact_zero() or b.is_exact_zero():
        return PdoOp.zero(trunc)
    lo = trunc.d2floor
    acc = {}
    dropped = 0
    derivs = {j: _d2_derivatives(bj) for j, bj in b.coeffs.items()}
    for i, ai in a.coeffs.items():
        ma = a.level_mask(i)
        for j, ds in derivs.items():
            mb = b.level_mask(j)
            kmax = i if i >= 0 else len(ds) - 1
            for k in range(min(kmax, len(ds) - 1) + 1):
                q = i + j - k
                if q < lo:
                    dropped |= ex.mask_product(ma, mb, T)
                    break
                term = ai * ds[k]
                c = binom(i, k)
                if c != 1:
                    term = term.scale(c)
                prev = acc.get(q)
                acc[q] = term if prev is None else prev + term
    coeffs = {q: c for q, c in acc.items() if not c.is_exact_zero()}
    floors = ex.product(a.floors, a.eff_ords(), b.floors, b.eff_ords())
    floors = ex.raise_on(floors, lo, dropped)
    floors = ex.clamp(floors, lo)
    return PdoOp._raw(
        trunc, coeffs, floors, a.clipped or b.clipped or any(c.clipped for c in coeffs.values())
    )


def commutator(a: PdoOp, b: PdoOp) -> PdoOp:
    return a * b - b * a


def commute_criterion(L: PdoOp, M: PdoOp):
    """Residuals of [M, L] level by level, from the top order down to the floor.

    Returns [(order, InnerOp)] where the InnerOp keeps only its exact terms.
    """
    c = commutator(M, L)
    if not c.coeffs:
        return []
    lo = c.trunc.d2floor if c.exact_floor2 is None else c.exact_floor2
    out = []
    for m in range(max(c.coeffs), lo - 1, -1):
        level = c.coeffs.get(m)
        if level is None:
            out.append((m, InnerOp.zero(c.trunc)))
            continue
        exact = PdoOp._raw(c.trunc, {m: level}, c.floors, c.clipped).exact_part()
        out.append((m, exact.coeffs.get(m, InnerOp.zero(c.trunc))))
    return out


def split(a: PdoOp):
    return a.split()


def _neumann(one: PdoOp, q: PdoOp, bound: int) -> PdoOp:
    """Horner evaluation of sum q^n until it stops changing."""
    r = one
    for _ in range(bound):
        nxt = one + q * r
        if nxt == r:
            return r
        r = nxt
    raise ArithmeticError("Neumann series did not stabilize inside the window")


def inverse(a: PdoOp) -> PdoOp:
    """Inverse via a Neumann series.

    The leading InnerOp is inverted when its own leading coefficient is a
    unit; otherwise the time-zero part must be invertible and the remaining
    time-dependent part is nilpotent.
    """
    trunc = a.trunc
    if not any(lv.coeffs for lv in a.coeffs.values()):
        raise NotInvertible("the zero operator is not invertible")
    n = a.ord2()
    lead = a.coeffs[n]
    one = PdoOp.one(trunc)
    if lead.coeffs and lead.leading().is_unit():
        lead_inv = PdoOp.d2pow(trunc, -n) * PdoOp.from_inner(inner_inverse(lead))
        q = one - lead_inv * a
        bound = (n - trunc.d2floor + 2) * (trunc.tdeg + 1) * (trunc.d1floor * -1 + 3) + 4
        return _neumann(one, q, bound) * lead_inv
    a0 = a.eval_t0()
    if a0.is_exact_zero() or a0 == a:
        raise NotInvertible(f"leading coefficient at d2-order {n} is not invertible")
    a0_inv = inverse(a0)
    x = a0_inv * (a - a0)
    # x has no time-degree-0 part, so the alternating sum stops at tdeg
    out = one
    power = one
    for _ in range(trunc.tdeg):
        power = -(power * x)
        out = out + power
    return out * a0_inv


def kth_root(a: PdoOp, k: int) -> PdoOp:
    """Unique monic k-th root, solved level by level from the leading term."""
    if k < 1:
        raise ValueError("root index must be positive")
    if k == 1:
        return a
    if not a.is_monic():
        raise ValueError("k-th root needs a monic operator")
    trunc = a.trunc
    N = a.ord2()
    lead = a.coeffs[N]
    p = lead.ord1()
    if N % k or p % k:
        raise ValueError(f"full order ({p}, {N}) is not divisible by {k}")
    n, s1 = N // k, p // k
    beta = inner_kth_root(lead, k)
    shift1 = (k - 1) * s1
    b = PdoOp.from_inner(beta, n)
    beta_pows = [InnerOp.one(trunc)]
    for _ in range(k - 1):
        beta_pows.append(beta_pows[-1] * beta)

    def linear(x):
        out = InnerOp.zero(trunc)
        for pos in range(k):
            out = out + beta_pows[pos] * x * beta_pows[k - 1 - pos]
        return out

    for step in range(1, N - (k - 1) * n - trunc.d2floor + 1):
        level = n - step
        if level < trunc.d2floor:
            break
        r = (b ** k - a).coeff(N - step)
        x = InnerOp.zero(trunc)
        solved = set()
        for _ in range(p - trunc.d1floor + 3):
            e = (linear(x) + r).exact_part()
            live = [q for q in e.coeffs if q not in solved]
            if not live:
                break
            q = max(live)
            solved.add(q)
            pos = q - shift1
            if pos < trunc.d1floor:
                break
            x = x - InnerOp(trunc, {pos: e.coeffs[q].scale(flint.fmpq(1, k))})
        if x.coeffs:
            b = b + PdoOp.from_inner(x, level)
    return _root_floors(a, b, k, n, shift1)


def _root_floors(a, b, k, n, shift1):
    """Floors of a root read off from the residual b^k - a."""
    trunc = a.trunc
    r = b ** k - a
    shift2 = (k - 1) * n
    rf = r.floors
    levels = dict(b.coeffs)
    unresolved = r.exact_terms()
    if unresolved:
        top = max(m for m, _, _, _ in unresolved)
        rf = ex.merge(rf, ex.uniform(trunc.tdeg, top + 1))
    bf = ex.clamp(tuple(None if f is None else f - shift2 for f in rf), trunc.d2floor)
    bf = ex.merge(b.floors, bf)
    for m, rl in r.coeffs.items():
        lm = m - shift2
        if lm < trunc.d2floor:
            continue
        inner_f = tuple(None if f is None else f - shift1 for f in rl.floors)
        cur = levels.get(lm, InnerOp.zero(trunc))
        merged = ex.clamp(ex.merge(cur.floors, inner_f), trunc.d1floor)
        if merged != cur.floors:
            levels[lm] = InnerOp._raw(trunc, cur.coeffs, merged, cur.clipped)
    return PdoOp._raw(trunc, levels, bf, b.clipped)


def conjugate(S: PdoOp, a: PdoOp) -> PdoOp:
    """S * a * S^-1."""
    return S * a * inverse(S)


def dt_op(a: PdoOp, k) -> PdoOp:
    return a.dt(k)
