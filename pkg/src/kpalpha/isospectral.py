"""Commuting pairs of differential operators and their isospectral families.

A commuting pair (P1, P2) of monic operators without negative d2-orders is
rewritten through a pair (L1, L2) of full orders (1, 0) and (0, 1); the
hierarchy flows of (L1, L2) then move P along  P(t) = Y P(0) Y^-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

from .conjugation import CanonicalPair, parshin_conjugate
from .hierarchy import (
    HierarchySolution,
    PowerCache,
    ResidualReport,
    lax_rhs,
    sato_wilson_solve,
)
from .pdo import PdoOp, commutator, inverse, kth_root
from .pdo_inner import NonCommuting
from .scalars import AlphaFn, TimeIndex, Truncation

__all__ = [
    "DegenerateOrders",
    "CommutingPair",
    "DeformationFamily",
    "full_order",
    "reduce_pair",
    "master_rhs",
    "in_FL",
    "deform",
    "verify_deformation",
    "canonical_pair_of",
]


class DegenerateOrders(ValueError):
    """The full orders of the pair are proportional."""


def full_order(P: PdoOp):
    """(d1-order of the leading coefficient, d2-order)."""
    m = P.ord2()
    return P.coeffs[m].ord1(), m


@dataclass(frozen=True, eq=False)
class CommutingPair:
    P1: PdoOp
    P2: PdoOp

    def __post_init__(self):
        for name, P in (("P1", self.P1), ("P2", self.P2)):
            if not P.is_monic():
                raise ValueError(f"{name} must be monic")
            if not P.minus().is_zero_exact():
                raise ValueError(f"{name} has negative d2-orders")
        bad = commutator(self.P1, self.P2).exact_terms()
        if bad:
            m, q, d, s = bad[0]
            raise NonCommuting(f"[P1, P2] has the term ({s}) at d2-order {m}, d1-order {q}", order=m)

    @property
    def trunc(self):
        return self.P1.trunc

    @property
    def full_orders(self):
        return full_order(self.P1), full_order(self.P2)

    def to_json(self):
        return {"P1": self.P1.to_json(), "P2": self.P2.to_json()}

    @classmethod
    def from_json(cls, trunc, data) -> "CommutingPair":
        return cls(PdoOp.from_json(trunc, data["P1"]), PdoOp.from_json(trunc, data["P2"]))


def _root(P: PdoOp, k: int) -> PdoOp:
    if k < 0:
        return kth_root(inverse(P), -k)
    return kth_root(P, k)


def reduce_pair(p: CommutingPair):
    """Operators L1, L2 of full orders (1, 0) and (0, 1) generating P1 and P2.

    With l = gcd(p2, q2) and g = gcd(q1, q2 / l):
        P1' = P1^(q2 / (l g)) * (P2^(1/l))^(-q1 / g),   L1 = P1'^(1/k),
        L2 = (P2 L1^-p2)^(1/q2),
    where k = (p1 q2 - q1 p2) / (l g) is the d1-order of P1'.
    """
    (p1, q1), (p2, q2) = p.full_orders
    if q2 <= 0:
        raise DegenerateOrders(f"P2 must have positive d2-order, got {q2}")
    l = gcd(p2, q2)
    g = gcd(q1, q2 // l)
    k_num = p1 * q2 - q1 * p2
    if k_num == 0:
        raise DegenerateOrders(
            f"full orders ({p1},{q1}) and ({p2},{q2}) are proportional; the pair is degenerate"
        )
    k = k_num // (l * g)
    root_P2 = kth_root(p.P2, l) if l > 1 else p.P2
    a, b = q2 // (l * g), q1 // g
    P1p = p.P1 ** a
    if b:
        P1p = P1p * (inverse(root_P2) ** b if b > 0 else root_P2 ** (-b))
    L1 = _root(P1p, k)
    L2 = kth_root(p.P2 * L1 ** (-p2), q2)
    return L1, L2


def master_rhs(L, k, alpha: AlphaFn = None, powers=None):
    """([(L1^i L2^j)_+, L1], [(L1^i L2^j)_+, L2])."""
    return lax_rhs(L, k, alpha, powers)


def in_FL(Q: PdoOp, L, max_terms: int = 200):
    """Is Q in the span of the operators (L1^i L2^j)_+ ?

    Returns (flag, decomposition) where the decomposition maps (i, j) to the
    rational coefficient of (L1^i L2^j)_+, found greedily by full order.
    When the flag is False the decomposition holds the witness instead.
    """
    L1, L2 = L
    if not Q.minus().is_zero_exact():
        raise ValueError("Q must have no negative d2-orders")
    for name, X in (("L1", L1), ("L2", L2)):
        c = commutator(Q, X).exact_part()
        nonneg = [m for m in c.coeffs if m >= 0 and c.coeffs[m].coeffs]
        if nonneg:
            return False, {"commutator_with": name, "d2_order": max(nonneg)}
    powers = PowerCache(L1, L2)
    decomposition = {}
    r = Q
    for _ in range(max_terms):
        live = r.exact_part()
        live = PdoOp._raw(live.trunc, {m: a for m, a in live.coeffs.items() if a.coeffs}, live.floors, live.clipped)
        if not live.coeffs:
            return True, decomposition
        j = live.ord2()
        top = live.coeffs[j]
        i = top.ord1()
        c = top.coeffs[i]
        if not c.is_constant():
            return False, {"full_order": [i, j], "coefficient": str(c)}
        c = c.constant_term()
        decomposition[(i, j)] = decomposition.get((i, j), 0) + c
        r = r - powers(i, j).plus().scale(c)
    return False, {"reason": f"no decomposition within {max_terms} terms"}


@dataclass(frozen=True, eq=False)
class DeformationFamily:
    base: CommutingPair
    sol: HierarchySolution
    Pt: tuple
    L1: PdoOp = None
    L2: PdoOp = None

    @property
    def trunc(self):
        return self.base.trunc

    def to_json(self):
        return {
            "base": self.base.to_json(),
            "L1": self.L1.to_json() if self.L1 is not None else None,
            "L2": self.L2.to_json() if self.L2 is not None else None,
            "Pt": [P.to_json() for P in self.Pt],
            "solution": self.sol.to_json(),
        }


def deform(p: CommutingPair, alpha: AlphaFn, S0: PdoOp = None, trunc: Truncation = None):
    """Isospectral family P(t) = Y P(0) Y^-1 driven by the flows of (L1, L2).

    S0 must satisfy S0 L00 S0^-1 = L1 and S0 M00 S0^-1 = L2; when omitted it
    is obtained from the conjugation to the canonical pair.
    """
    trunc = trunc or p.trunc
    if trunc != p.trunc:
        raise ValueError("pair and truncation disagree")
    L1, L2 = reduce_pair(p)
    res = parshin_conjugate(L1, L2)
    pair = res.pair
    if S0 is None:
        S0 = inverse(res.S)
    else:
        S0_inv = inverse(S0)
        if not (S0 * pair.L() * S0_inv).equal_exact(L1) or not (S0 * pair.M() * S0_inv).equal_exact(L2):
            raise ValueError("S0 does not conjugate the canonical pair to (L1, L2)")
    for k in trunc.active_times:
        if not alpha.admits(k):
            raise ValueError(f"time index {k} violates i <= alpha(j) for {alpha!r}")
    sol = sato_wilson_solve(pair, alpha, S0, trunc)
    Y_inv = inverse(sol.Y)
    Pt = (sol.Y * p.P1 * Y_inv, sol.Y * p.P2 * Y_inv)
    return DeformationFamily(p, sol, Pt, L1, L2)


def verify_deformation(fam: DeformationFamily, use_minus=()) -> ResidualReport:
    """dt_k P - [Q_k, P] with Q_k = (L^i M^j)_+, and the Zakharov-Shabat residuals of the Q_k.

    Indices listed in ``use_minus`` take the minus part instead of the plus
    part (a deliberately wrong flow used as a negative control).
    """
    from .hierarchy import verify_zakharov_shabat

    sol = fam.sol
    trunc = fam.trunc
    rep = ResidualReport()
    powers = PowerCache(sol.L, sol.M)
    minus = {TimeIndex.parse(k) for k in use_minus}
    for k in trunc.active_times:
        plus_part, minus_part = powers(k.i, k.j).split()
        Q = minus_part if k in minus else plus_part
        for name, P in zip(("P1", "P2"), fam.Pt):
            rep.add([k.i, k.j], f"master_{name}", P.dt(k) - commutator(Q, P), trunc.tdeg - 1)
    rep.extend(verify_zakharov_shabat(sol))
    return rep


def canonical_pair_of(P1: PdoOp, P2: PdoOp) -> CanonicalPair:
    """Canonical pair reached from (P1, P2) through reduce_pair and the conjugation."""
    L1, L2 = reduce_pair(CommutingPair(P1, P2))
    return parshin_conjugate(L1, L2).pair
