from fractions import Fraction

import pytest

from contfactor import star as st
from contfactor.matalg import Element, PseudoRank, Subalgebra, standard_embedding, verify_matrix_units
from contfactor.scalar import QQ, QQI
from contfactor.stabilize import (ConstantLedger, InstanceInvariantViolation, StabilizationInstance,
                                  generate_instance, k_constant, k_star_constant, stabilize_matrix_units,
                                  stabilize_star)

from oracles import k_from_proof_steps


def test_k_constants():
    assert [k_constant(p) for p in (1, 2, 3)] == [4, 172, 12112]
    for p in range(1, 7):
        assert k_constant(p) == k_from_proof_steps(p)
        assert k_star_constant(p) > k_constant(p)
    assert k_star_constant(1) == 16
    with pytest.raises(ValueError):
        k_constant(0)


def test_ledger_provenance():
    rows = ConstantLedger(3).rows()
    assert rows[0]["K"] == "4" and rows[0]["K_provenance"] == "published"
    assert rows[2]["K"] == "12112"
    assert all(r["K_star_provenance"] == "artifact-defined" for r in rows)


def test_units_already_in_subalgebra():
    inst = generate_instance("exact", 2, 6, budget=0, noise=0)
    assert inst.max_distance == 0
    res = stabilize_matrix_units(inst)
    assert res.max_distance == 0
    assert res.psi.images() == inst.rho.images()


def test_p1_is_the_idempotent_correction():
    for t in range(10):
        inst = generate_instance("p1", 1, 6, budget=1, trial=t)
        res = stabilize_matrix_units(inst)
        assert res.max_distance < 4 * inst.eps
        g = res.units[0][0]
        assert g * g == g and inst.A.contains(g)


def test_p2_in_m8():
    inst = generate_instance("p2", 2, 8, budget=1, trial=0)
    assert inst.eps < 1
    res = stabilize_matrix_units(inst)
    assert res.audit.ok and verify_matrix_units(res.units)
    assert all(inst.A.contains(u) for row in res.units for u in row)
    assert res.max_distance < 172 * inst.eps
    names = [a.name for a in res.audit.records]
    for needle in ("z_1p^(1) bound", "N(x'11 - x'11^2)", "N(g - rho(e11))", "N(y_12 - rho(e_12))"):
        assert any(needle in n for n in names), needle


def test_p3_corner_induction_is_audited():
    inst = generate_instance("p3", 3, 12, budget=1, trial=1)
    res = stabilize_matrix_units(inst)
    assert res.audit.ok and res.max_distance < k_constant(3) * inst.eps
    names = [a.name for a in res.audit.records]
    assert any(n.startswith("p=2:") for n in names) and any(n.startswith("p=3:") for n in names)


def test_larger_eps_never_breaks_the_bound():
    inst = generate_instance("mono", 2, 8, budget=1, trial=2)
    for extra in (Fraction(0), Fraction(1, 16), Fraction(1, 2)):
        res = stabilize_matrix_units(inst.with_eps(inst.eps + extra))
        assert res.audit.ok


def test_star_examples():
    inst = generate_instance("star-exact", 2, 6, budget=0, noise=0, field=QQI, star=True)
    res = stabilize_star(inst)
    assert res.max_distance == 0 and verify_matrix_units(res.units, star=True)

    inst = generate_instance("star2", 2, 8, budget=1, field=QQI, star=True)
    res = stabilize_star(inst)
    assert verify_matrix_units(res.units, star=True)
    assert res.max_distance < k_star_constant(2) * inst.eps


def test_star_p1_below_given_projection():
    f = QQI
    inst = generate_instance("star1", 1, 6, budget=0, noise=0, field=f, star=True)
    rho1 = inst.rho.unit_image(0, 0, 0)
    res = stabilize_star(inst, f=rho1)
    assert st.is_subprojection(res.units[0][0], rho1)
    with pytest.raises(InstanceInvariantViolation):
        stabilize_star(inst, f=Element.zero([6], f) + Element.unit([6], f, 0, 5, 5))


def test_generator_determinism_and_validation():
    a = generate_instance(7, 2, 8, budget=1, trial=3)
    b = generate_instance(7, 2, 8, budget=1, trial=3)
    assert a.eps == b.eps and a.approximants == b.approximants and a.A.hom.images() == b.A.hom.images()
    inst = generate_instance("m8", 2, 8, budget=1)
    assert inst.max_distance <= Fraction(2, 8) + Fraction(1, 8)
    with pytest.raises(ValueError):
        generate_instance(0, 2, 4, budget=2)


def test_instance_invariants_enforced():
    f = QQ
    A = Subalgebra(standard_embedding([2], [4], [[2]], f))
    rho = standard_embedding([2], [4], [[2]], f)
    approx = [[rho.unit_image(0, i, j) for j in range(2)] for i in range(2)]
    N = PseudoRank([4])
    StabilizationInstance([4], f, N, A, rho, approx, Fraction(1, 8))
    with pytest.raises(InstanceInvariantViolation):
        StabilizationInstance([4], f, N, A, rho, approx, Fraction(0))
    outside = [row[:] for row in approx]
    outside[0][1] = Element.unit([4], f, 0, 0, 1)
    with pytest.raises(InstanceInvariantViolation):
        StabilizationInstance([4], f, N, A, rho, outside, Fraction(1))
