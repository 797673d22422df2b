import random
from fractions import Fraction

import pytest

from contfactor import star as st
from contfactor.campaigns import random_element, random_invertible, random_low_rank
from contfactor.matalg import Element, PseudoRank, Subalgebra, standard_embedding
from contfactor.scalar import GF, QQ, QQI

from oracles import is_rational_norm

I = QQI.i


def _m(f, rows):
    return Element.from_dense(f, [[[f(v) if not hasattr(v, "im") else v for v in r] for r in rows]])


def test_adjoint_examples():
    assert st.adjoint(Element.unit([2], QQ, 0, 0, 1)) == Element.unit([2], QQ, 0, 1, 0)
    x = I * Element.unit([2], QQI, 0, 0, 0)
    assert st.adjoint(x) == (QQI(0, -1)) * Element.unit([2], QQI, 0, 0, 0)
    rng = random.Random(1)
    for _ in range(20):
        a, b = random_element(rng, [2, 3], QQI), random_element(rng, [2, 3], QQI)
        assert (a * b).adjoint() == b.adjoint() * a.adjoint()
        assert a.adjoint().adjoint() == a


def test_lp_rp_examples():
    f = QQI
    u, _ = random_invertible(random.Random(2), 3, f)
    assert st.lp(Element.from_dense(f, [u])).is_identity()
    e12 = Element.unit([2], f, 0, 0, 1)
    assert st.lp(e12) == Element.unit([2], f, 0, 0, 0)
    assert st.rp(e12) == Element.unit([2], f, 0, 1, 1)
    col = _m(f, [[1, 0], [QQI(1, 1), 0]])
    want = _m(f, [[Fraction(1, 3), QQI(Fraction(1, 3), Fraction(-1, 3))],
                  [QQI(Fraction(1, 3), Fraction(1, 3)), Fraction(2, 3)]])
    assert st.lp(col) == want


def test_rel_inverse_examples():
    f = QQ
    u, ui = random_invertible(random.Random(4), 3, f)
    assert st.rel_inverse(Element.from_dense(f, [u])) == Element.from_dense(f, [ui])
    assert st.rel_inverse(Element.unit([2], f, 0, 0, 1)) == Element.unit([2], f, 0, 1, 0)
    assert st.rel_inverse(_m(f, [[2, 0], [0, 0]])) == _m(f, [[Fraction(1, 2), 0], [0, 0]])


def test_lp_rp_rel_inverse_properties():
    rng = random.Random(5)
    for _ in range(30):
        x = random_low_rank(rng, 4, QQI, rng.randint(0, 4))
        L, R, y = st.lp(x), st.rp(x), st.rel_inverse(x)
        for P in (L, R):
            assert P * P == P and P.adjoint() == P
        assert L * x == x and x * R == x
        assert x * y == L and y * x == R
        st.Projection(L)


def test_projection_validation():
    with pytest.raises(ValueError):
        st.Projection(_m(QQ, [[1, 1], [0, 0]]))
    with pytest.raises(Exception):
        st.lp(Element.unit([2], GF(5), 0, 0, 0))


def test_perturbation_examples():
    N = PseudoRank([2], [1])
    f = QQI
    r, s = Element.unit([2], f, 0, 0, 0), Element.unit([2], f, 0, 1, 1)
    rep = st.perturbation_ratios(r, s, N)
    assert rep["audit"].ok
    r, s = Element.unit([2], f, 0, 0, 1), Element.unit([2], f, 0, 0, 1) + Element.unit([2], f, 0, 0, 0)
    rep = st.perturbation_ratios(r, s, N)
    assert rep["distance"] == Fraction(1, 2) and rep["audit"].ok
    with pytest.raises(ValueError):
        st.perturbation_ratios(r, r, N)


def test_shrink_identity_case():
    f = QQI
    N = PseudoRank([3], [1])
    e1 = Element.unit([3], f, 0, 0, 0)
    e2 = Element.unit([3], f, 0, 1, 1)
    w = Element.unit([3], f, 0, 0, 1)
    a, b, wit, log = st.shrink_to_star_equiv(e1, e2, e1, e2, w, N, 0)
    assert a == e1 and b == e2 and wit.w == w and log.ok


def test_shrink_rank_one_perturbation():
    f = QQI
    N = PseudoRank([2], [1])
    e11 = Element.unit([2], f, 0, 0, 0)
    e2 = st.projection_onto((f(1), f(1)), f)
    eps = N(e2 - e11)
    assert eps == 1
    a, b, wit, log = st.shrink_to_star_equiv(e11, e2, e11, e11, e11, N, eps)
    assert log.ok and wit.check()
    assert st.is_subprojection(a, e11) and st.is_subprojection(b, e2)


def test_norm_classes_and_two_squares():
    for n in range(1, 200):
        assert (st.norm_class(Fraction(n)) == 1) == is_rational_norm(Fraction(n))
        sq = st.two_squares(n)
        if sq is None:
            assert not is_rational_norm(Fraction(n))
        else:
            assert sq[0] ** 2 + sq[1] ** 2 == n
    assert st.norm_class(Fraction(3, 7)) == 21
    c = st.gaussian_with_norm(Fraction(5, 2))
    assert c is not None and (c.conj() * c) == QQI(Fraction(5, 2))


def test_star_equivalence_simple_cases():
    f = QQI
    p = st.projection_onto((f(1), f(2, 1)), f)
    v = st.decide_star_equivalence(p, p)
    assert v.equivalent and v.witness.check()
    inv = st.hermitian_invariant(st.projection_onto((f(1, 1), f(1)), f))
    assert inv.rank == 1 and inv.discriminant == 3
    with pytest.raises(Exception):
        st.decide_star_equivalence(Element.unit([2], QQ, 0, 0, 0), Element.unit([2], QQ, 0, 1, 1))


def test_star_equivalence_rank_two_in_m4():
    f = QQI
    e = Element.unit([4], f, 0, 0, 0) + Element.unit([4], f, 0, 1, 1)
    a = st.projection_onto((f(1), f(1, 1), f(0), f(0)), f)  # Gram 3
    b = st.projection_onto((f(0), f(0), f(1), f(1, 1)), f)  # Gram 3, orthogonal to a
    assert not st.decide_star_equivalence(a, Element.unit([4], f, 0, 0, 0)).equivalent
    v = st.decide_star_equivalence(a + b, e)  # discriminant 9 is a norm class 1
    assert v.equivalent and v.witness.check()


def test_exhaustion_identity_oracle():
    f = QQI
    p = Element.unit([3], f, 0, 0, 0)
    tr = st.lp_rp_exhaustion(p, p, st.identity_oracle, 3)
    assert tr.terminated and len(tr.stages) == 1 and tr.stages[0].residual_p == 0 and tr.audit.ok


def test_exhaustion_with_decision_oracle_in_m8():
    f = QQI
    N = PseudoRank([8], [1])
    p = Element.unit([8], f, 0, 0, 0) + Element.unit([8], f, 0, 1, 1)
    a = [f(0)] * 8
    a[2], a[3] = f(1), f(1)  # Gram 2, a norm
    q = st.projection_onto(a, f) + Element.unit([8], f, 0, 5, 5)
    tr = st.lp_rp_exhaustion(p, q, st.star_decision_oracle(), 4, N)
    assert tr.audit.ok and tr.terminated and len(tr.stages) == 1
    assert tr.w_sum * tr.w_sum.adjoint() == p and tr.w_sum.adjoint() * tr.w_sum == q

    b = [f(0)] * 8
    b[2], b[3] = f(1, 1), f(1)  # Gram 3: the classes of p and q' differ
    q2 = st.projection_onto(b, f) + Element.unit([8], f, 0, 5, 5)
    tr = st.lp_rp_exhaustion(p, q2, st.star_decision_oracle(), 2, N)
    assert tr.audit.ok and not tr.terminated
    assert [s.residual_p for s in tr.stages] == [Fraction(1, 8), Fraction(1, 8)]
    # a rank-one residual pair of classes 1 and 3 can never be shrunk below 1/8
    with pytest.raises(st.OracleFailure) as exc:
        st.lp_rp_exhaustion(p, q2, st.star_decision_oracle(), 3, N)
    assert exc.value.stage == 3


def test_exhaustion_adversarial_oracle():
    """Each stage leaves residual exactly 2^-(n+1)."""
    f = QQI
    n = 32
    N = PseudoRank([n], [1])
    p = sum((Element.unit([n], f, 0, i, i) for i in range(31)), Element.zero([n], f))

    def make_oracle(sizes):
        sizes = iter(sizes)

        def oracle(pr, qr, bound):
            idx = [i for i in range(n) if pr.blocks[0].get(i, i, 0) != 0]
            piece = sum((Element.unit([n], f, 0, i, i) for i in idx[:next(sizes)]), Element.zero([n], f))
            return piece, piece, piece
        return oracle

    tr = st.lp_rp_exhaustion(p, p, make_oracle([23, 4, 2, 1, 1]), 5, N)
    assert tr.audit.ok and tr.terminated
    assert [s.residual_p for s in tr.stages] == [Fraction(1, 4), Fraction(1, 8), Fraction(1, 16),
                                                Fraction(1, 32), 0]
    assert tr.w_sum == p
    with pytest.raises(st.OracleFailure) as exc:
        st.lp_rp_exhaustion(p, p, make_oracle([3]), 3, N)
    assert exc.value.stage == 1


def test_standard_and_quasi_standard():
    f = QQI
    A = Subalgebra.whole([3], f, star=True)
    N = PseudoRank([3], [1])
    d = Element.unit([3], f, 0, 0, 0) + Element.unit([3], f, 0, 2, 2)
    assert st.is_standard_projection(d, A)
    cert = st.certify_hereditarily_quasi_standard(d, A, N, Fraction(1, 2), depth=0)
    assert cert.verify(A, N, Fraction(1, 2))

    h, k = QQI(Fraction(1, 2), Fraction(1, 2)), QQI(Fraction(1, 2), Fraction(-1, 2))
    u = _m(f, [[h, k, 0], [k, h, 0], [0, 0, 1]])
    assert u * u.adjoint() == Element.identity([3], f)
    p = u * d * u.adjoint()
    assert not st.is_standard_projection(p, A)
    cert = st.certify_hereditarily_quasi_standard(p, A, N, Fraction(1, 2))
    assert cert.verify(A, N, Fraction(1, 2))

    bad = st.projection_onto((f(1, 1), f(1)), f)
    with pytest.raises(st.CertificationFailure) as exc:
        st.certify_hereditarily_quasi_standard(bad, Subalgebra.whole([2], f, star=True), PseudoRank([2], [1]),
                                               Fraction(1, 2))
    assert exc.value.clause == "1"


def test_quasi_standard_in_embedded_algebra():
    f = QQI
    A = Subalgebra(standard_embedding([2], [4], [[2]], f), star=True)
    p = A.push(st.projection_onto((f(1), f(1)), f))
    N = PseudoRank([4], [1])
    cert = st.certify_hereditarily_quasi_standard(p, A, N, Fraction(1, 2))
    assert cert.verify(A, N, Fraction(1, 2)) and A.contains(cert.witness)
