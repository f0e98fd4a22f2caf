import random

import pytest

from helpers import rand_inner
from kpalpha import AlphaFn, NonCommuting, PdoOp, Truncation
from kpalpha.conjugation import CanonicalPair
from kpalpha.hierarchy import lax_rhs
from kpalpha.isospectral import (
    CommutingPair,
    DegenerateOrders,
    canonical_pair_of,
    deform,
    in_FL,
    master_rhs,
    reduce_pair,
    verify_deformation,
)
from kpalpha.pdo import commutator, inverse
from kpalpha.pdo_inner import inner_inverse

ALPHA0 = AlphaFn.linear(0)
T = Truncation(14, -6, -5, 2, ((0, 1), (-1, 1)))


def op(text, trunc=T):
    return PdoOp.parse(trunc, text)


@pytest.fixture(scope="module")
def dressed_pair():
    """P1 = d1 and P2 = d2^2 - 2 (x2 + d1)^-2, a conjugate of (d1, d2^2)."""
    xi = inner_inverse(op("x2 + D1").coeff(0))
    P2 = PdoOp(T, {2: 1, 0: (xi * xi).scale(-2)})
    S0 = PdoOp.one(T) - PdoOp.from_inner(xi) * op("D2^-1")
    assert P2.equal_exact(S0 * op("D2^2") * inverse(S0))
    return CommutingPair(op("D1"), P2)


@pytest.fixture(scope="module")
def family(dressed_pair):
    return deform(dressed_pair, ALPHA0)


class TestCommutingPair:
    def test_rejects_non_commuting(self):
        with pytest.raises(NonCommuting):
            CommutingPair(op("D1"), op("D2 + x1"))

    def test_rejects_negative_orders_and_non_monic(self):
        with pytest.raises(ValueError):
            CommutingPair(op("D1"), op("D2 + D2^-1"))
        with pytest.raises(ValueError):
            CommutingPair(op("D1"), op("2*D2"))

    def test_full_orders(self, dressed_pair):
        assert dressed_pair.full_orders == ((1, 0), (0, 2))


class TestReducePair:
    W = Truncation(8, -4, -4, 0)

    def test_constant_pair(self):
        L00, M00 = op("D1", self.W), op("D2", self.W)
        L1, L2 = reduce_pair(CommutingPair(L00 * L00, M00))
        assert L1.equal_exact(L00) and L2.equal_exact(M00)

    def test_monomials_are_recovered(self):
        rng = random.Random(71)
        W = self.W
        for _ in range(4):
            # a commuting pair with non-trivial lower terms: (A^2, A B) inside the
            # ring of constant-coefficient operators
            A = op("D1", W) + PdoOp.from_inner(rand_inner(rng, W, 0, -2, maxdeg=0))
            B = op("D2", W) + PdoOp.from_inner(rand_inner(rng, W, -1, -2, maxdeg=0))
            P1, P2 = A * A, A * B
            L1, L2 = reduce_pair(CommutingPair(P1, P2))
            assert commutator(L1, L2).is_zero_exact()
            assert (L1 * L1).equal_exact(P1)
            assert (L1 * L2).equal_exact(P2)
            assert L1.full_order() == (1, 0) and L2.full_order() == (0, 1)

    def test_mixed_orders(self):
        W = self.W
        L1, L2 = reduce_pair(CommutingPair(op("D1^3*D2", W), op("D1*D2^2", W)))
        assert L1.equal_exact(op("D1", W)) and L2.equal_exact(op("D2", W))

    def test_degenerate(self):
        P = op("D2 + D1", self.W)
        with pytest.raises(DegenerateOrders):
            reduce_pair(CommutingPair(P, P))
        with pytest.raises(DegenerateOrders):
            reduce_pair(CommutingPair(op("D1^2*D2^2", self.W), op("D1*D2", self.W)))

    def test_dressed_pair(self, dressed_pair):
        L1, L2 = reduce_pair(dressed_pair)
        assert L1 == dressed_pair.P1
        assert (L2 * L2).equal_exact(dressed_pair.P2)


class TestMasterRhs:
    def test_matches_lax_rhs(self, dressed_pair):
        L = reduce_pair(dressed_pair)
        for k in ((0, 1), (-1, 1)):
            a = master_rhs(L, k, ALPHA0)
            b = lax_rhs(L, k, ALPHA0)
            assert a[0] == b[0] and a[1] == b[1]


class TestInFL:
    W = Truncation(8, -4, -4, 0)

    def test_examples(self):
        L1, L2 = op("D1", self.W), op("D2 + x2*D1^-1", self.W)
        assert in_FL((L1 * L2).plus(), (L1, L2)) == (True, {(1, 1): 1})
        assert in_FL(PdoOp.one(self.W), (L1, L2)) == (True, {(0, 0): 1})

    def test_combination(self):
        L1, L2 = op("D1", self.W), op("D2 + x2*D1^-1", self.W)
        Q = (L2 * L2).plus().scale(3) - L1.scale(2) + PdoOp.one(self.W)
        ok, dec = in_FL(Q, (L1, L2))
        assert ok and dec == {(0, 2): 3, (1, 0): -2, (0, 0): 1}

    def test_variable_multiple_is_rejected(self):
        L1, L2 = op("D1", self.W), op("D2", self.W)
        ok, witness = in_FL(op("x1*D2 + x1*x2", self.W), (L1, L2))
        assert not ok and witness["d2_order"] >= 0

    def test_dressed(self, dressed_pair):
        L = reduce_pair(dressed_pair)
        assert in_FL(op("D2"), L) == (True, {(0, 1): 1})


class TestDeform:
    def test_constant_pair_is_stationary(self):
        W = Truncation(6, -4, -4, 2, ((0, 1), (-1, 1)))
        base = CommutingPair(op("D1^2", W), op("D2 + D1^-1", W))
        fam = deform(base, ALPHA0, S0=PdoOp.one(W))
        assert fam.Pt[0].equal_exact(base.P1) and fam.Pt[1].equal_exact(base.P2)
        assert verify_deformation(fam).ok

    def test_family(self, family, dressed_pair):
        assert not family.sol.clipped()
        P1t, P2t = family.Pt
        assert P1t.eval_t0().equal_exact(dressed_pair.P1)
        assert P2t.eval_t0().equal_exact(dressed_pair.P2)
        assert P2t != P2t.eval_t0()
        assert commutator(P1t, P2t).is_zero_exact()
        assert (P1t.full_order(), P2t.full_order()) == dressed_pair.full_orders

    def test_lax_residuals(self, family):
        rep = verify_deformation(family)
        assert rep.ok
        assert {e["equation"] for e in rep.entries} == {"master_P1", "master_P2", "zakharov_shabat"}

    def test_minus_part_fails(self, family):
        rep = verify_deformation(family, use_minus=[(0, 1)])
        bad = rep.failures()
        assert bad and all(e["index"] == [0, 1] for e in bad)

    def test_normal_form_is_constant(self, family):
        pair = canonical_pair_of(*family.Pt)
        assert pair.equal_exact(family.sol.pair)
        assert pair.equal_exact(CanonicalPair.from_ops(op("D1"), op("D2")))

    def test_wrong_initial_dressing(self, dressed_pair):
        with pytest.raises(ValueError):
            deform(dressed_pair, ALPHA0, S0=PdoOp.one(T))

    def test_alpha_constraint(self):
        W = Truncation(6, -4, -4, 1, ((1, 1),))
        base = CommutingPair(op("D1", W), op("D2^2", W))
        with pytest.raises(ValueError):
            deform(base, ALPHA0)

    def test_json(self, family):
        data = family.to_json()
        assert set(data) == {"base", "L1", "L2", "Pt", "solution"}
