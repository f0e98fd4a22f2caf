import json
import random

import pytest

from helpers import agrees, from_oracle, rand_inner, rand_minus, rand_pdo, to_oracle
from kpalpha import InnerOp, NotInvertible, PdoOp, ScalarSeries, Truncation
from kpalpha.pdo import (
    commutator,
    commute_criterion,
    conjugate,
    dt_op,
    inverse,
    kth_root,
    mul,
    split,
)
from oracle import ocomm, omul

T = Truncation(6, -4, -4, 0)
Tt = Truncation(6, -4, -4, 2, ((0, 1), (-1, 1)))


def P(text, trunc=T):
    return PdoOp.parse(trunc, text)


class TestProduct:
    def test_leibniz_base(self):
        assert mul(P("D2"), P("x2")) == P("x2*D2 + 1")

    def test_unit(self):
        rng = random.Random(21)
        for _ in range(5):
            a = rand_pdo(rng, T)
            assert a * PdoOp.one(T) == a and PdoOp.one(T) * a == a

    def test_against_oracle(self):
        rng = random.Random(22)
        for _ in range(30):
            a, b = rand_pdo(rng, T), rand_pdo(rng, T)
            want = from_oracle(T, omul(to_oracle(a), to_oracle(b), T.xdeg, T.d1floor, T.d2floor))
            assert agrees(a * b, want)

    def test_plus_part_of_LM(self):
        rng = random.Random(23)
        for _ in range(5):
            u0, u1, u2 = (rand_inner(rng, T, 1, -1) for _ in range(3))
            vm, v0, v1 = (rand_inner(rng, T, 0, -1) for _ in range(3))
            L = PdoOp(T, {0: u0, -1: u1, -2: u2})
            M = PdoOp(T, {1: vm, 0: v0, -1: v1})
            want = PdoOp(T, {1: u0 * vm, 0: u1 * vm + u0 * v0})
            assert (L * M).plus().equal_exact(want)

    def test_ord2_additive(self):
        rng = random.Random(24)
        for _ in range(10):
            a = rand_pdo(rng, T, 2, -1, monic=True)
            b = rand_pdo(rng, T, 1, -2, monic=True)
            assert (a * b).ord2() == a.ord2() + b.ord2()


class TestCommutator:
    def test_independent_derivations(self):
        assert commutator(P("D1"), P("D2")).is_zero_exact()

    def test_canonical_pair_compatibility(self):
        # [v_-1 d2 + v0, u0] = [v_-1, u0] d2 + v_-1 d2(u0) + [v0, u0]
        rng = random.Random(25)
        for _ in range(5):
            u0 = InnerOp.d1pow(T, 1) + rand_inner(rng, T, 0, -2)
            vm = InnerOp.one(T) + rand_inner(rng, T, -1, -2)
            v0 = rand_inner(rng, T, 0, -2)
            M = PdoOp(T, {1: vm, 0: v0})
            c = commutator(M, PdoOp.from_inner(u0))
            want = PdoOp(T, {1: vm * u0 - u0 * vm, 0: vm * u0.d2() + (v0 * u0 - u0 * v0)})
            assert c.equal_exact(want)

    def test_power_commutes(self):
        rng = random.Random(26)
        for _ in range(5):
            a = rand_pdo(rng, T)
            assert commutator(a, a * a).is_zero_exact()

    def test_antisymmetric_and_oracle(self):
        rng = random.Random(27)
        for _ in range(10):
            a, b = rand_pdo(rng, T), rand_pdo(rng, T)
            assert (commutator(a, b) + commutator(b, a)).is_zero_exact()
            want = from_oracle(T, ocomm(to_oracle(a), to_oracle(b), T.xdeg, T.d1floor, T.d2floor))
            assert agrees(commutator(a, b), want)


class TestCriterion:
    def test_constant_pair(self):
        rows = commute_criterion(P("D1 + 2"), P("D2 + 3*D1^-1"))
        assert all(r.is_zero_exact() for _, r in rows)

    def test_rows_match_commutator(self):
        rng = random.Random(28)
        for _ in range(5):
            L, M = rand_pdo(rng, T), rand_pdo(rng, T)
            c = commutator(M, L)
            for m, r in commute_criterion(L, M):
                assert (r - c.coeff(m)).is_zero_exact()

    def test_time_free_canonical_shape(self):
        rows = commute_criterion(P("D1"), P("D2 + x2*D1^-1"))
        assert all(r.is_zero_exact() for _, r in rows)


class TestSplit:
    def test_examples(self):
        a = P("D2 + x2 + x1*D2^-1")
        assert split(a) == (P("D2 + x2"), P("x1*D2^-1"))
        assert split(P("D2^-2")) == (PdoOp.zero(T), P("D2^-2"))
        plus = P("D2 + x2")
        assert split(plus) == (plus, PdoOp.zero(T))

    def test_linear_and_idempotent(self):
        rng = random.Random(29)
        for _ in range(10):
            a, b = rand_pdo(rng, T), rand_pdo(rng, T)
            assert (a + b).plus() == a.plus() + b.plus()
            assert a.plus().plus() == a.plus()
            assert a.minus().plus() == PdoOp.zero(T)


class TestInverse:
    def test_pure_power(self):
        assert inverse(P("D2")) == P("D2^-1")

    def test_neumann(self):
        a = P("1 + x1*D1*D2^-1")
        inv = inverse(a)
        one = PdoOp.one(T)
        assert (a * inv).equal_exact(one) and (inv * a).equal_exact(one)
        assert inv.coeff(-1).equal_exact(P("-x1*D1").coeff(0))

    def test_random_minus_group(self):
        rng = random.Random(30)
        one = PdoOp.one(T)
        for _ in range(10):
            S = rand_minus(rng, T)
            inv = inverse(S)
            assert (inv * S).equal_exact(one) and (S * inv).equal_exact(one)
            assert inv.ord2() == 0

    def test_order_flips(self):
        a = P("D2^2 + x2*D2 + 1")
        assert inverse(a).ord2() == -2

    def test_time_dependent_leading(self):
        a = P("1 + t(0,1)*D2 + x1*D2^-1", Tt)
        assert (inverse(a) * a).equal_exact(PdoOp.one(Tt))

    def test_not_invertible(self):
        with pytest.raises(NotInvertible):
            inverse(P("x1*D2"))


class TestRoot:
    def test_monomial(self):
        assert kth_root(P("D2^2"), 2) == P("D2")

    def test_cube_of_shifted(self):
        assert kth_root(P("D2 + x1") ** 3, 3).equal_exact(P("D2 + x1"))

    def test_random_squares(self):
        rng = random.Random(31)
        for _ in range(6):
            A = rand_pdo(rng, T, 1, -2, 0, -2, monic=True)
            assert kth_root(A * A, 2).equal_exact(A)

    def test_rejects(self):
        with pytest.raises(ValueError):
            kth_root(P("D2^3"), 2)
        with pytest.raises(ValueError):
            kth_root(P("2*D2^2"), 2)


class TestConjugate:
    def test_trivial(self):
        a = P("D2 + x1")
        S = P("1 + x2*D2^-1")
        assert conjugate(PdoOp.one(T), a) == a
        assert conjugate(S, PdoOp.one(T)).equal_exact(PdoOp.one(T))

    def test_homomorphism(self):
        W = Truncation(16, -3, -3, 0)
        rng = random.Random(32)
        for _ in range(5):
            S = rand_minus(rng, W, 2, 0, -1, maxdeg=1)
            a, b = rand_pdo(rng, W, 1, -1, 1, -1, 1), rand_pdo(rng, W, 1, -1, 1, -1, 1)
            lhs = conjugate(S, commutator(a, b))
            rhs = commutator(conjugate(S, a), conjugate(S, b))
            assert not (lhs.clipped or rhs.clipped)
            assert lhs.equal_exact(rhs)
            assert conjugate(inverse(S), conjugate(S, a)).equal_exact(a)


class TestTimeDerivative:
    def test_examples(self):
        # the top time degree of a derivative is unknown (it needs degree tdeg + 1)
        d = dt_op(P("t(0,1)*D2^-1", Tt), (0, 1))
        assert d.equal_exact(P("D2^-1", Tt), Tt.tdeg - 1)
        assert d.exact_part().coeffs.keys() == {-1}
        assert dt_op(P("x1*D2", Tt), (0, 1)).is_zero_exact()

    def test_product_rule(self):
        rng = random.Random(33)
        for _ in range(5):
            a = rand_pdo(rng, Tt, times=True)
            b = rand_pdo(rng, Tt, times=True)
            k = (0, 1)
            lhs = dt_op(a * b, k)
            rhs = dt_op(a, k) * b + a * dt_op(b, k)
            assert lhs.equal_exact(rhs, Tt.tdeg - 1)

    def test_inactive(self):
        with pytest.raises(ValueError):
            dt_op(P("D2", Tt), (5, 5))


class TestSerialization:
    def test_round_trip(self):
        rng = random.Random(34)
        for _ in range(5):
            a = rand_pdo(rng, Tt, times=True) * rand_pdo(rng, Tt)
            text = json.dumps(a.to_json(), sort_keys=True)
            b = PdoOp.from_json(Tt, json.loads(text))
            assert b == a
            assert json.dumps(b.to_json(), sort_keys=True) == text

    def test_full_order(self):
        assert P("D1^2*D2 + x1").full_order() == (2, 1)
