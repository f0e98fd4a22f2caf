"""Flows of the alpha-restricted hierarchy and their verification.

A solution is built from a canonical pair (L00, M00), an admissible index set
and initial data S0 in 1 + E_-:

    U = exp(sum_k t_k L00^i M00^j) S0^-1,    S U = Y  with  S in 1 + E_-,
    L = S L00 S^-1,   M = S M00 S^-1.

Every identity is then checked as an exact residual up to time degree tdeg - 1
(the time derivative consumes one degree).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .conjugation import CanonicalPair, expand_in_pair
from .pdo import PdoOp, commutator, inverse
from .pdo_inner import InnerOp, NonCommuting, as_series_in, inner_inverse
from .scalars import AlphaFn, ScalarSeries, TimeIndex, Truncation

__all__ = [
    "AlphaViolation",
    "BirkhoffError",
    "ConnectionForm",
    "HierarchySolution",
    "ResidualReport",
    "PowerCache",
    "lax_rhs",
    "build_omega",
    "exp_solution",
    "birkhoff_factor",
    "sato_wilson_solve",
    "sw_residuals",
    "verify_lax",
    "verify_zakharov_shabat",
    "verify_commutativity_preserved",
    "constant_coefficients",
    "is_admissible",
]


class AlphaViolation(ValueError):
    """A time index (i, j) with i > alpha(j)."""


class BirkhoffError(ArithmeticError):
    """The factorization iteration does not settle inside the window."""


class PowerCache:
    """Products L^i M^j for a commuting pair, negative i through the inverse of L."""

    def __init__(self, L: PdoOp, M: PdoOp):
        self.L, self.M = L, M
        self._L = {0: PdoOp.one(L.trunc), 1: L}
        self._M = {0: PdoOp.one(L.trunc), 1: M}
        self._LM = {}
        self._Linv = None

    def Lpow(self, i: int) -> PdoOp:
        if i not in self._L:
            if i > 0:
                self._L[i] = self.Lpow(i - 1) * self.L
            else:
                if self._Linv is None:
                    self._Linv = inverse(self.L)
                self._L[i] = self.Lpow(i + 1) * self._Linv
        return self._L[i]

    def Mpow(self, j: int) -> PdoOp:
        if j < 0:
            raise ValueError("negative powers of M are not used by the flows")
        if j not in self._M:
            self._M[j] = self.Mpow(j - 1) * self.M
        return self._M[j]

    def __call__(self, i: int, j: int) -> PdoOp:
        if (i, j) not in self._LM:
            self._LM[(i, j)] = self.Lpow(i) * self.Mpow(j)
        return self._LM[(i, j)]


def _admissible(alpha: AlphaFn, k: TimeIndex):
    if alpha is not None and not alpha.admits(k):
        raise AlphaViolation(f"time index {k} violates i <= alpha(j) for {alpha!r}")


def lax_rhs(N, k, alpha: AlphaFn = None, powers: PowerCache = None):
    """([(L^i M^j)_+, L], [(L^i M^j)_+, M]) for k = (i, j)."""
    L, M = N
    k = TimeIndex.parse(k)
    _admissible(alpha, k)
    if k == TimeIndex(0, 0):
        z = PdoOp.zero(L.trunc)
        return z, z
    powers = powers or PowerCache(L, M)
    B = powers(k.i, k.j).plus()
    return commutator(B, L), commutator(B, M)


@dataclass(frozen=True, eq=False)
class ConnectionForm:
    """Coefficients of dt_k, one operator per active time."""

    entries: dict

    def __getitem__(self, k) -> PdoOp:
        return self.entries[TimeIndex.parse(k)]

    def __iter__(self):
        return iter(self.entries)

    def items(self):
        return self.entries.items()

    def total(self) -> PdoOp:
        """sum_k t_k * omega_k."""
        it = iter(self.entries.items())
        k, w = next(it)
        trunc = w.trunc
        out = ScalarSeries.t(trunc, k) * w
        for k, w in it:
            out = out + ScalarSeries.t(trunc, k) * w
        return out

    def to_json(self):
        return [[[k.i, k.j], w.to_json()] for k, w in sorted(self.entries.items())]


def build_omega(pair: CanonicalPair, alpha: AlphaFn, trunc: Truncation, powers=None) -> ConnectionForm:
    """omega_k = L00^i M00^j for every active time k = (i, j)."""
    if pair.trunc != trunc:
        raise ValueError("canonical pair and truncation disagree")
    powers = powers or PowerCache(pair.L(), pair.M())
    entries = {}
    for k in trunc.active_times:
        _admissible(alpha, k)
        entries[k] = powers(k.i, k.j)
    return ConnectionForm(entries)


def exp_solution(pair: CanonicalPair, alpha: AlphaFn, S0: PdoOp, trunc: Truncation, omega=None) -> PdoOp:
    """U = exp(sum_k t_k omega_k) S0^-1, as a sum that stops at time degree tdeg."""
    S0_inv = inverse(S0)
    if not trunc.active_times or trunc.tdeg == 0:
        return S0_inv
    omega = omega or build_omega(pair, alpha, trunc)
    x = omega.total()
    term = PdoOp.one(trunc)
    out = term
    for n in range(1, trunc.tdeg + 1):
        term = (term * x).scale(Fraction(1, n))
        out = out + term
    return out * S0_inv


def birkhoff_factor(U: PdoOp):
    """Split U = S^-1 Y with S in 1 + E_- and Y free of negative d2-orders.

    At t = 0, U must be of d2-order 0 with an invertible level-0 block A.
    After replacing U by U A^-1 (same S, since A lies in E_+ together with its
    inverse), write S = 1 + X; the condition (S U)_- = 0 becomes
    X = -U_- - (X (U - 1))_-, iterated to its fixed point.  The iteration is
    nilpotent: each pass either lowers the d2-order or raises the time degree.
    """
    trunc = U.trunc
    one = PdoOp.one(trunc)
    if not any(a.coeffs for a in U.coeffs.values()):
        raise BirkhoffError("cannot factor the zero operator")
    U0 = U.eval_t0()
    high = [m for m in U0.exact_part().coeffs if m > 0]
    if high:
        raise BirkhoffError(f"U at t = 0 has the positive d2-order {max(high)}")
    A = U0.coeff(0)
    if not A.coeffs or not A.leading().is_unit():
        raise BirkhoffError(f"diagonal block at d2-order 0 is not invertible: {A}")
    Un = U if A == InnerOp.one(trunc) else U * PdoOp.from_inner(inner_inverse(A))
    V = Un - one
    head = -Un.minus()
    X = head
    bound = (trunc.tdeg + 1) * (2 - trunc.d2floor) * (2 + max(0, U.ord2())) + 4
    for _ in range(bound):
        nxt = head - (X * V).minus()
        if nxt == X:
            break
        X = nxt
    else:
        raise BirkhoffError("factorization iteration did not settle inside the window")
    S = one + X
    Y = S * U
    bad = Y.minus().exact_terms()
    if bad and not Y.clipped:
        m, q, d, s = bad[0]
        raise BirkhoffError(
            f"truncated system is singular: S U keeps ({s}) at d2-order {m}, d1-order {q}"
        )
    return S, Y


@dataclass(frozen=True, eq=False)
class HierarchySolution:
    S: PdoOp
    Y: PdoOp
    L: PdoOp
    M: PdoOp
    pair: CanonicalPair
    alpha: AlphaFn
    S0: PdoOp = None
    U: PdoOp = None
    omega: ConnectionForm = None

    @property
    def trunc(self):
        return self.S.trunc

    def clipped(self) -> bool:
        return any(op.clipped for op in (self.S, self.Y, self.L, self.M))

    def to_json(self):
        return {
            "truncation": self.trunc.to_json(),
            "alpha": self.alpha.to_json() if self.alpha else None,
            "pair": self.pair.to_json(),
            "S0": self.S0.to_json() if self.S0 is not None else None,
            "S": self.S.to_json(),
            "Y": self.Y.to_json(),
            "L": self.L.to_json(),
            "M": self.M.to_json(),
        }

    @classmethod
    def from_json(cls, data) -> "HierarchySolution":
        trunc = Truncation.from_json(data["truncation"])
        alpha = AlphaFn.from_json(data["alpha"]) if data.get("alpha") else None
        pair = CanonicalPair.from_json(trunc, data["pair"])
        op = lambda key: PdoOp.from_json(trunc, data[key]) if data.get(key) else None
        return cls(op("S"), op("Y"), op("L"), op("M"), pair, alpha, S0=op("S0"))


def sato_wilson_solve(pair: CanonicalPair, alpha: AlphaFn, S0: PdoOp, trunc: Truncation) -> HierarchySolution:
    """Solve dS = -(S omega S^-1)_- S with S(0) = S0 through the factorization of U."""
    if S0.trunc != trunc:
        raise ValueError("S0 and truncation disagree")
    if not S0.plus().equal_exact(PdoOp.one(trunc)):
        raise ValueError("S0 must lie in 1 + E_-")
    if not commutator(pair.L(), pair.M()).is_zero_exact():
        raise NonCommuting("the canonical pair does not commute")
    powers = PowerCache(pair.L(), pair.M())
    omega = build_omega(pair, alpha, trunc, powers) if trunc.active_times else ConnectionForm({})
    U = exp_solution(pair, alpha, S0, trunc, omega if omega.entries else None)
    S, Y = birkhoff_factor(U)
    S_inv = inverse(S)
    L = S * pair.L() * S_inv
    M = S * pair.M() * S_inv
    return HierarchySolution(S, Y, L, M, pair, alpha, S0=S0, U=U, omega=omega)


@dataclass
class ResidualReport:
    """Residual entries {index, equation, order, residual-term-count, first-term}."""

    entries: list = field(default_factory=list)

    def add(self, index, equation: str, residual: PdoOp, maxdeg=None):
        terms = residual.exact_terms(maxdeg)
        first = None
        if terms:
            m, q, d, s = terms[0]
            first = {"d2_order": m, "d1_order": q, "t_degree": d, "coefficient": str(s)}
        self.entries.append(
            {
                "index": index,
                "equation": equation,
                "order": terms[0][0] if terms else None,
                "residual_term_count": sum(s.term_count() for _, _, _, s in terms),
                "first_term": first,
                "checked_floor": _checked(residual, maxdeg),
                "clipped": residual.clipped,
            }
        )

    @property
    def ok(self) -> bool:
        return all(e["residual_term_count"] == 0 and not e["clipped"] for e in self.entries)

    def failures(self):
        return [e for e in self.entries if e["residual_term_count"] or e["clipped"]]

    def extend(self, other: "ResidualReport"):
        self.entries.extend(other.entries)
        return self

    def to_json(self):
        return {"ok": self.ok, "entries": self.entries}


def _checked(op: PdoOp, maxdeg):
    """Lowest d2-level inside the exact region, per checked time degree."""
    T = op.trunc.tdeg if maxdeg is None else maxdeg
    out = []
    for d in range(T + 1):
        f = op.floors[d]
        out.append(op.trunc.d2floor if f is None else f)
    return out


def _key(k: TimeIndex):
    return [k.i, k.j]


def sw_residuals(sol: HierarchySolution) -> ResidualReport:
    """dt_k S + (S omega_k S^-1)_- S for every active time."""
    rep = ResidualReport()
    trunc = sol.trunc
    omega = sol.omega or build_omega(sol.pair, sol.alpha, trunc)
    S_inv = inverse(sol.S)
    for k, w in sorted(omega.items()):
        r = sol.S.dt(k) + (sol.S * w * S_inv).minus() * sol.S
        rep.add(_key(k), "sato_wilson", r, trunc.tdeg - 1)
    return rep


def verify_lax(sol: HierarchySolution) -> ResidualReport:
    """dt_k N - [(L^i M^j)_+, N] and dt_k N + [(L^i M^j)_-, N] for N in (L, M)."""
    rep = ResidualReport()
    trunc = sol.trunc
    powers = PowerCache(sol.L, sol.M)
    for k in trunc.active_times:
        P = powers(k.i, k.j)
        plus, minus = P.split()
        for name, N in (("L", sol.L), ("M", sol.M)):
            dN = N.dt(k)
            rep.add(_key(k), f"lax_plus_{name}", dN - commutator(plus, N), trunc.tdeg - 1)
            rep.add(_key(k), f"lax_minus_{name}", dN + commutator(minus, N), trunc.tdeg - 1)
    return rep


def verify_zakharov_shabat(sol: HierarchySolution) -> ResidualReport:
    """dt_l B_k - dt_k B_l - [B_l, B_k] with B_k = (L^i M^j)_+, for all pairs k < l."""
    rep = ResidualReport()
    trunc = sol.trunc
    powers = PowerCache(sol.L, sol.M)
    times = sorted(trunc.active_times)
    B = {k: powers(k.i, k.j).plus() for k in times}
    for a, k in enumerate(times):
        for l in times[a + 1 :]:
            r = B[k].dt(l) - B[l].dt(k) - commutator(B[l], B[k])
            rep.add([_key(k), _key(l)], "zakharov_shabat", r, trunc.tdeg - 1)
    return rep


def verify_commutativity_preserved(sol: HierarchySolution) -> ResidualReport:
    rep = ResidualReport()
    rep.add(None, "commutator_LM", commutator(sol.L, sol.M))
    return rep


def constant_coefficients(X: PdoOp, pair: CanonicalPair, allow_time: bool = False):
    """Is X a series in M00 and L00 with coefficients free of x (and of t unless allowed)?

    Returns (True, None) or (False, witness) where the witness names the
    offending (M00-power, L00-power, coefficient) or the reason.
    """
    try:
        terms, rest = expand_in_pair(X, pair)
    except (ValueError, ArithmeticError) as err:
        return False, {"reason": str(err)}
    if not rest.is_zero_exact():
        m, q, d, s = rest.exact_terms()[0]
        return False, {"reason": "leftover", "d2_order": m, "d1_order": q, "coefficient": str(s)}
    for j, c in terms:
        try:
            series = as_series_in(c, pair.u0)
        except NonCommuting as err:
            return False, {"M00_power": j, "reason": str(err)}
        for q, s in series:
            if not s.is_x_free() or (not allow_time and not s.is_constant()):
                return False, {"M00_power": j, "L00_power": q, "coefficient": str(s)}
    return True, None


def is_admissible(T: PdoOp, pair: CanonicalPair):
    """True when T L00 T^-1 and T M00 T^-1 are constant-coefficient series in L00, M00."""
    if not T.coeffs or T.ord2() != 0:
        raise ValueError("admissibility is defined for operators of d2-order 0")
    T_inv = inverse(T)
    for name, X in (("L00", pair.L()), ("M00", pair.M())):
        ok, witness = constant_coefficients(T * X * T_inv, pair)
        if not ok:
            return False, {"conjugate_of": name, **witness}
    return True, None
