"""Reduction of a commuting pair (L, M) to a canonical pair by conjugation.

L = u0 + u1 d2^-1 + ...   and   M = v_-1 d2 + v0 + v1 d2^-1 + ...

are brought, level by level in d2, to  L00 = u0  and  M00 = v_-1 d2 + v0  by
elementary conjugations  X -> G X G^-1  with  G = 1 + b d2^m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import _exact as ex
from .pdo import PdoOp, commutator, inverse
from .pdo_inner import InnerOp, NonCommuting, as_series_in, inner_inverse
from .scalars import ScalarSeries

__all__ = [
    "CanonicalPair",
    "ConjugationResult",
    "ConjugationError",
    "Unsupported",
    "solve_commutator",
    "parshin_conjugate",
    "normalize_canonical",
    "expand_in_pair",
]


class ConjugationError(ArithmeticError):
    """Hypotheses fail or the level-by-level reduction does not drain."""

    def __init__(self, message, level=None, defect=None):
        super().__init__(message)
        self.level = level
        self.defect = defect


class Unsupported(ArithmeticError):
    """The normalization would need a solution of d1(x) = c x outside the truncated model."""


@dataclass(frozen=True, eq=False)
class CanonicalPair:
    """u0 (monic, d1-order 1), v_-1 (monic, d1-order 0) and v0."""

    L00: InnerOp
    M00_v_minus1: InnerOp
    M00_v0: InnerOp

    @property
    def trunc(self):
        return self.L00.trunc

    @property
    def u0(self) -> InnerOp:
        return self.L00

    @property
    def v_minus1(self) -> InnerOp:
        return self.M00_v_minus1

    @property
    def v0(self) -> InnerOp:
        return self.M00_v0

    def L(self) -> PdoOp:
        return PdoOp.from_inner(self.L00)

    def M(self) -> PdoOp:
        return PdoOp.from_inner(self.M00_v_minus1, 1) + PdoOp.from_inner(self.M00_v0)

    def check_shape(self):
        u0, vm = self.L00, self.M00_v_minus1
        if not (u0.is_monic1() and u0.ord1() == 1):
            raise ValueError(f"u0 must be monic of d1-order 1, got {u0}")
        if not (vm.is_monic1() and vm.ord1() == 0):
            raise ValueError(f"v_-1 must be monic of d1-order 0, got {vm}")

    def compatibility_residual(self) -> InnerOp:
        """v_-1 d2(u0) + [v0, u0]; zero for a valid pair."""
        u0, vm, v0 = self.L00, self.M00_v_minus1, self.M00_v0
        return vm * u0.d2() + (v0 * u0 - u0 * v0)

    def is_valid(self) -> bool:
        return (
            self.compatibility_residual().is_zero_exact()
            and commutator(self.L(), self.M()).is_zero_exact()
        )

    def is_time_free(self) -> bool:
        return all(a.t_mask() <= 1 for a in (self.L00, self.M00_v_minus1, self.M00_v0))

    def equal_exact(self, other: "CanonicalPair") -> bool:
        return (
            self.L00.equal_exact(other.L00)
            and self.M00_v_minus1.equal_exact(other.M00_v_minus1)
            and self.M00_v0.equal_exact(other.M00_v0)
        )

    def to_json(self):
        return {
            "u0": self.L00.to_json(),
            "v_minus1": self.M00_v_minus1.to_json(),
            "v0": self.M00_v0.to_json(),
        }

    @classmethod
    def from_json(cls, trunc, data) -> "CanonicalPair":
        return cls(
            InnerOp.from_json(trunc, data["u0"]),
            InnerOp.from_json(trunc, data["v_minus1"]),
            InnerOp.from_json(trunc, data["v0"]),
        )

    @classmethod
    def from_ops(cls, L: PdoOp, M: PdoOp) -> "CanonicalPair":
        """Read the pair off L = u0 and M = v_-1 d2 + v0."""
        return cls(L.coeff(0), M.coeff(1), M.coeff(0))


@dataclass(frozen=True, eq=False)
class ConjugationResult:
    S: PdoOp
    pair: CanonicalPair
    residuals: dict = field(default_factory=dict)


def solve_commutator(u0: InnerOp, y: InnerOp) -> InnerOp:
    """b with [u0, b] = y, where u0 = d1 + (lower orders).

    Uses  d1(b) = y - [u0 - d1, b]  and sums the resulting antiderivatives;
    each pass lowers the d1-order by at least one.
    """
    trunc = u0.trunc
    rest = u0 - InnerOp.d1pow(trunc, 1)
    term = y.map_coeffs(ScalarSeries.antid1)
    b = term
    for _ in range(y.ord1() - trunc.d1floor + 2 if y.coeffs else 0):
        nxt = -(rest * term - term * rest)
        term = nxt.map_coeffs(ScalarSeries.antid1)
        b = b + term
        if not term.coeffs:
            break
    return b


def _conj(G: PdoOp, Ginv: PdoOp, X: PdoOp) -> PdoOp:
    return G * X * Ginv


def _check_hypotheses(L: PdoOp, M: PdoOp):
    if not L.coeffs or L.ord2() != 0 or not L.is_monic():
        raise ConjugationError("L must be monic of d2-order 0")
    u0 = L.coeff(0).split()[0]
    if not u0.coeffs or u0.ord1() != 1:
        raise ConjugationError("the plus part of L's leading coefficient must have d1-order 1")
    if not M.coeffs or M.ord2() != 1 or not M.is_monic():
        raise ConjugationError("M must be monic of d2-order 1")
    vm = M.coeff(1).split()[0]
    if not vm.coeffs or vm.ord1() != 0:
        raise ConjugationError("the plus part of M's leading coefficient must have d1-order 0")
    c = commutator(L, M)
    bad = c.exact_terms()
    if bad:
        m, q, d, s = bad[0]
        raise NonCommuting(
            f"[L, M] has the nonzero term ({s}) at d2-order {m}, d1-order {q}", order=m
        )


def _inherit_floors(S: PdoOp, Lc: PdoOp, Mc: PdoOp) -> PdoOp:
    """Mark as unknown every part of S that was solved from unknown data.

    A correction at d2-level m is read off level m of the current L or M, so
    an unknown region there leaves the same region of S undetermined.
    """
    trunc = S.trunc
    floors = ex.merge(S.floors, ex.merge(Lc.floors, Mc.floors))
    levels = dict(S.coeffs)
    for m in range(-1, trunc.d2floor - 1, -1):
        inner = ex.merge(Lc.coeff(m).floors, Mc.coeff(m).floors)
        cur = levels.get(m, InnerOp.zero(trunc))
        merged = ex.merge(cur.floors, inner)
        if merged != cur.floors:
            levels[m] = InnerOp._raw(trunc, cur.coeffs, merged, cur.clipped)
    return PdoOp._raw(trunc, levels, floors, S.clipped)


def _top_d1(a: InnerOp):
    live = a.exact_part()
    return live.ord1() if live.coeffs else None


def parshin_conjugate(L: PdoOp, M: PdoOp, max_rounds: int = None) -> ConjugationResult:
    """Find S in 1 + E_- with  S L S^-1 = u0  and  S M S^-1 = v_-1 d2 + v0."""
    _check_hypotheses(L, M)
    trunc = L.trunc
    u0 = L.coeff(0)
    if not (u0.is_monic1() and u0.ord1() == 1):
        raise ConjugationError("u0 must be monic of d1-order 1")
    one = PdoOp.one(trunc)
    S = one
    Lc, Mc = L, M
    rounds = max_rounds or 4 * (2 - trunc.d1floor) + 8
    powers = {}

    def u0_power(k: int) -> InnerOp:
        if k not in powers:
            powers[k] = u0 ** k
        return powers[k]

    def apply(b: InnerOp, level: int):
        nonlocal S, Lc, Mc
        G = one + PdoOp.from_inner(b, level)
        Ginv = inverse(G)
        S = G * S
        Lc = _conj(G, Ginv, Lc)
        Mc = _conj(G, Ginv, Mc)

    def kill_L(level: int) -> bool:
        y = Lc.exact_part().coeff(level)
        if not y.coeffs:
            return False
        apply(solve_commutator(u0, y), level)
        return True

    def kill_M(level: int) -> bool:
        w = Mc.exact_part().coeff(level)
        if not w.coeffs:
            return False
        try:
            series = as_series_in(w, u0)
        except NonCommuting as err:
            raise ConjugationError(
                f"level {level} of M does not commute with u0 at d1-order {err.order}",
                level=level,
                defect=err.order,
            ) from None
        s = InnerOp.zero(trunc)
        for k, c in series:
            if k < trunc.d1floor:
                continue
            s = s + c.antid2() * u0_power(k)
        apply(s, level)
        return True

    kill_L(-1)
    for m in range(-2, trunc.d2floor - 2, -1):
        top = None
        for _ in range(rounds):
            changed = False
            if m >= trunc.d2floor:
                changed |= kill_L(m)
            changed |= kill_M(m + 1)
            if not changed:
                break
            w = Mc.exact_part().coeff(m + 1)
            now = _top_d1(w)
            if now is not None and top is not None and now >= top:
                raise ConjugationError(
                    f"reduction at d2-level {m + 1} is not lowering the d1-order ({now})",
                    level=m + 1,
                    defect=now,
                )
            top = now
        else:
            raise ConjugationError(
                f"reduction at d2-level {m} did not drain within {rounds} rounds",
                level=m,
                defect=top,
            )
    S = _inherit_floors(S, Lc, Mc)
    pair = CanonicalPair(u0, Mc.coeff(1), Mc.coeff(0))
    resid_L = Lc - pair.L()
    resid_M = Mc - pair.M()
    return ConjugationResult(S, pair, {"L": resid_L.exact_terms(), "M": resid_M.exact_terms()})


def _inner_exp(z: InnerOp) -> InnerOp:
    """exp(z) for z of negative d1-order (the series stops inside the window)."""
    trunc = z.trunc
    out = InnerOp.one(trunc)
    power = out
    for n in range(1, 2 - trunc.d1floor):
        power = (power * z).scale(Fraction(1, n))
        out = out + power
        if not power.coeffs:
            break
    return out


def normalize_canonical(pair: CanonicalPair):
    """Conjugate a canonical pair by an InnerOp so that v_-1 u0 = d1 and the
    negative d1-part of v0 has no x1-free coefficients.

    Returns (Sbar, new_pair).  Raises Unsupported when the first step needs an
    order-0 correction, which amounts to solving d1(x) = c x.
    """
    pair.check_shape()
    trunc = pair.trunc
    u0, vm = pair.u0, pair.v_minus1
    one = InnerOp.one(trunc)
    d1 = InnerOp.d1pow(trunc, 1)

    # first step: C' (v_-1 u0) C'^-1 = d1
    K = vm * u0
    if not K.coeff(0).is_zero():
        raise Unsupported(
            "v_-1 u0 has a nonzero d1-order 0 coefficient; removing it needs d1(x) = c x"
        )
    C1 = one
    for _ in range(2 - trunc.d1floor):
        e = (C1 * K * inner_inverse(C1) - d1).exact_part()
        if not e.coeffs:
            break
        j = e.ord1()
        if j >= 0:
            raise Unsupported(f"d1-order {j} term {e.coeffs[j]} cannot be removed by the first step")
        C1 = (one + InnerOp(trunc, {j: e.coeffs[j].antid1()})) * C1
    else:
        raise Unsupported("first normalization step did not close at this truncation")

    def conj(C: InnerOp, p: CanonicalPair) -> CanonicalPair:
        G = PdoOp.from_inner(C)
        Gi = inverse(G)
        Lp = G * p.L() * Gi
        Mp = G * p.M() * Gi
        return CanonicalPair.from_ops(Lp, Mp)

    p1 = conj(C1, pair) if C1 != one else pair

    # second step: remove x1-free coefficients from the negative part of v0
    C2 = one
    p2 = p1
    for _ in range(2 - trunc.d1floor):
        _, neg = p2.v0.split()
        x = neg.map_coeffs(ScalarSeries.x1_free_part).exact_part()
        if not x.coeffs:
            break
        z = inner_inverse(p2.v_minus1) * x
        z = z.map_coeffs(ScalarSeries.antid2)
        step = _inner_exp(z)
        C2 = step * C2
        p2 = conj(step, p2)
    else:
        raise Unsupported("second normalization step did not close at this truncation")

    Sbar = C2 * C1
    if not (p2.v_minus1 * p2.u0).equal_exact(d1):
        raise Unsupported("normalized pair fails v_-1 u0 = d1")
    if not p2.is_valid():
        raise Unsupported("normalized pair fails the compatibility check")
    return Sbar, p2


def expand_in_pair(X: PdoOp, pair: CanonicalPair):
    """Write X = sum_j c_j M00^j with InnerOp coefficients c_j, from the top level down.

    Returns [(j, c_j)] and the leftover operator (unknown region only).
    """
    trunc = X.trunc
    M00 = pair.M()
    vm_inv = inner_inverse(pair.v_minus1)
    out = []
    r = X
    powers = {}

    def mpow(j):
        if j not in powers:
            powers[j] = M00 ** j if j >= 0 else inverse(M00) ** (-j)
        return powers[j]

    for _ in range(X.ord2() - trunc.d2floor + 3 if X.coeffs else 0):
        live = r.exact_part()
        if not live.coeffs or not any(a.coeffs for a in live.coeffs.values()):
            break
        j = live.ord2()
        top = live.coeffs[j]
        c = top * (vm_inv ** j if j >= 0 else pair.v_minus1 ** (-j))
        out.append((j, c))
        r = r - PdoOp.from_inner(c) * mpow(j)
    return out, r
