import random
from fractions import Fraction

import pytest

from helpers import rand_minus
from kpalpha import InnerOp, NonCommuting, PdoOp, ScalarSeries, Truncation
from kpalpha.conjugation import (
    CanonicalPair,
    ConjugationError,
    Unsupported,
    expand_in_pair,
    normalize_canonical,
    parshin_conjugate,
    solve_commutator,
)
from kpalpha.hierarchy import constant_coefficients
from kpalpha.pdo import commutator, inverse

T = Truncation(10, -4, -4, 0)


def P(text):
    return PdoOp.parse(T, text)


def I(text):
    return P(text).coeff(0)


def pair_of(u0, vm, v0):
    return CanonicalPair(I(u0), I(vm), I(v0))


BASIC = pair_of("D1", "1", "0")
RICH = pair_of("D1 + 2 + 3*D1^-1", "1 + 1/2*D1^-1", "x2*D1^-1 + x2^2")


class TestCanonicalPair:
    def test_shapes(self):
        BASIC.check_shape()
        with pytest.raises(ValueError):
            pair_of("2*D1", "1", "0").check_shape()
        with pytest.raises(ValueError):
            pair_of("D1", "D1^-1", "0").check_shape()

    def test_compatibility(self):
        assert BASIC.is_valid() and RICH.is_valid()
        assert commutator(RICH.L(), RICH.M()).is_zero_exact()
        bad = pair_of("D1 + x2", "1", "0")
        assert not bad.is_valid()
        assert bad.compatibility_residual().equal_exact(InnerOp.one(T))

    def test_json(self):
        assert CanonicalPair.from_json(T, RICH.to_json()).equal_exact(RICH)


class TestSolveCommutator:
    def test_solution(self):
        u0 = I("D1 + x2 + D1^-1")
        y = I("x1*D1^-1 + x2*D1^-2")
        b = solve_commutator(u0, y)
        assert (u0 * b - b * u0 - y).is_zero_exact()


class TestParshin:
    def test_canonical_input_is_fixed(self):
        res = parshin_conjugate(RICH.L(), RICH.M())
        assert res.S == PdoOp.one(T)
        assert res.pair.equal_exact(RICH)

    def test_round_trip(self):
        rng = random.Random(51)
        for n in range(6):
            pair = (BASIC, RICH)[n % 2]
            S0 = rand_minus(rng, T, 3, 0, -2, maxdeg=1)
            S0_inv = inverse(S0)
            L, M = S0_inv * pair.L() * S0, S0_inv * pair.M() * S0
            res = parshin_conjugate(L, M)
            assert res.pair.equal_exact(pair)
            assert (res.S * L * inverse(res.S)).equal_exact(res.pair.L())
            assert (res.S * M * inverse(res.S)).equal_exact(res.pair.M())
            X = res.S * S0_inv
            assert not X.clipped
            assert constant_coefficients(X, pair) == (True, None)
            assert X.exact_region()

    def test_wrong_conjugator_is_detected(self):
        S0 = P("1 + x2*D1^-1*D2^-1 + x1*D2^-2")
        S0_inv = inverse(S0)
        L, M = S0_inv * BASIC.L() * S0, S0_inv * BASIC.M() * S0
        res = parshin_conjugate(L, M)
        ok, witness = constant_coefficients(res.S * P("1 + x1*D2^-1") * S0_inv, BASIC)
        assert not ok and witness

    def test_non_commuting_input(self):
        L = P("D1 + x1*D2^-1")
        M = P("D2 + x1*D2^-2")
        with pytest.raises(NonCommuting) as info:
            parshin_conjugate(L, M)
        assert info.value.order is not None

    def test_hypotheses(self):
        with pytest.raises(ConjugationError):
            parshin_conjugate(P("D1*D2"), P("D2"))
        with pytest.raises(ConjugationError):
            parshin_conjugate(P("D1"), P("D1*D2"))


class TestNormalize:
    def test_normalized_pair_is_fixed(self):
        Sbar, p = normalize_canonical(BASIC)
        assert Sbar == InnerOp.one(T)
        assert p.equal_exact(BASIC)

    def test_kernel_part_removed(self):
        pair = pair_of("D1", "1", "x2*D1^-1 + x2^2*D1^-2")
        Sbar, p = normalize_canonical(pair)
        x2 = ScalarSeries.x2(T)
        # first factor of the exponential solution: 1 + (x2^2 / 2) d1^-1
        assert Sbar.coeff(-1) == (x2 * x2).scale(Fraction(1, 2))
        _, neg = p.v0.split()
        assert all(c.x1_free_part().is_zero() for c in neg.exact_part().coeffs.values())
        G = PdoOp.from_inner(Sbar)
        assert (G * pair.L() * inverse(G)).equal_exact(p.L())
        assert (G * pair.M() * inverse(G)).equal_exact(p.M())
        assert (p.v_minus1 * p.u0).equal_exact(InnerOp.d1pow(T, 1))

    def test_first_step_undoes_an_inner_conjugation(self):
        C = I("1 + x1*x2*D1^-1")
        G = PdoOp.from_inner(C)
        pair = CanonicalPair.from_ops(G * BASIC.L() * inverse(G), G * BASIC.M() * inverse(G))
        assert pair.is_valid() and pair.u0 != BASIC.u0
        Sbar, p = normalize_canonical(pair)
        assert (p.v_minus1 * p.u0).equal_exact(InnerOp.d1pow(T, 1))
        assert p.u0.equal_exact(BASIC.u0) and p.v_minus1.equal_exact(BASIC.v_minus1)
        # v0 vanishes down to where u0 is known
        assert all(q < p.u0.exact_floor for q, _, _ in p.v0.exact_terms())

    def test_unsupported(self):
        # u0 = d1 + x2 needs d1(x) = c x with c = x2
        pair = pair_of("D1 + x2", "1", "x1")
        assert pair.is_valid()
        with pytest.raises(Unsupported):
            normalize_canonical(pair)


class TestExpand:
    def test_series_in_M(self):
        M = RICH.M()
        X = M * M + M.scale(3) + PdoOp.one(T)
        terms, rest = expand_in_pair(X, RICH)
        assert [j for j, _ in terms] == [2, 1, 0]
        assert rest.is_zero_exact()
