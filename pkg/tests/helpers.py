"""Seeded generators of random operators and conversions to the oracle format."""

import random
from fractions import Fraction

from kpalpha import InnerOp, PdoOp, ScalarSeries, Truncation

SMALL = Truncation(6, -4, -4, 0)


def rand_frac(rng: random.Random, span=3):
    num = rng.randint(-span, span)
    return Fraction(num, rng.choice((1, 1, 2, 3)))


def rand_scalar(rng, T, maxdeg=2, nterms=3, x1=True, times=False):
    terms = {}
    for _ in range(nterms):
        e1 = rng.randint(0, maxdeg) if x1 else 0
        e2 = rng.randint(0, maxdeg - e1) if maxdeg > e1 else 0
        td = [0] * len(T.active_times)
        if times and td and T.tdeg:
            td[rng.randrange(len(td))] = rng.randint(0, 1)
        key = (e1, e2, tuple(td))
        terms[key] = terms.get(key, 0) + rand_frac(rng)
    return ScalarSeries(T, terms)


def rand_inner(rng, T, hi=1, lo=-2, maxdeg=2, monic=False, x1=True, times=False, fill=0.7):
    coeffs = {}
    for q in range(lo, hi + 1):
        if rng.random() < fill:
            coeffs[q] = rand_scalar(rng, T, maxdeg, rng.randint(1, 3), x1, times)
    if monic:
        coeffs[hi] = ScalarSeries.const(T, 1)
    return InnerOp(T, coeffs)


def rand_pdo(rng, T, hi2=1, lo2=-2, hi1=1, lo1=-2, maxdeg=2, monic=False, times=False, fill=0.7):
    coeffs = {}
    for m in range(lo2, hi2 + 1):
        if rng.random() < fill:
            a = rand_inner(rng, T, hi1, lo1, maxdeg, times=times)
            if a.coeffs:
                coeffs[m] = a
    if monic:
        coeffs[hi2] = InnerOp.one(T)
    return PdoOp(T, coeffs)


def rand_minus(rng, T, depth=3, hi1=1, lo1=-2, maxdeg=2, times=False):
    """Random element of 1 + E_-."""
    coeffs = {0: InnerOp.one(T)}
    for m in range(-depth, 0):
        a = rand_inner(rng, T, hi1, lo1, maxdeg, times=times)
        if a.coeffs:
            coeffs[m] = a
    return PdoOp(T, coeffs)


def to_oracle(P: PdoOp):
    """{m: {q: {(e1, e2): Fraction}}}; time-free operators only."""
    out = {}
    for m, a in P.coeffs.items():
        inner = {}
        for q, s in a.coeffs.items():
            poly = {}
            for (e1, e2, td), c in s.terms():
                assert not any(td), "the oracle has no time variables"
                poly[(e1, e2)] = c
            if poly:
                inner[q] = poly
        if inner:
            out[m] = inner
    return out


def from_oracle(T, A) -> PdoOp:
    coeffs = {}
    for m, inner in A.items():
        coeffs[m] = InnerOp(T, {q: ScalarSeries(T, poly) for q, poly in inner.items()})
    return PdoOp(T, coeffs)


def inner_to_oracle(a: InnerOp):
    return to_oracle(PdoOp.from_inner(a))[0] if a.coeffs else {}


def agrees(engine: PdoOp, reference: PdoOp) -> bool:
    """Equal everywhere the engine claims exactness."""
    return (engine - reference).is_zero_exact()
