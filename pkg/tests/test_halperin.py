import json
from fractions import Fraction

import pytest

from contfactor.audit import AssertionViolation
from contfactor.halperin import (AmbientFactor, StageBudgetExhausted, WindowInfeasible, chain_build,
                                 choose_integer_in_window, choose_rational_window, halperin_step,
                                 halperin_step_star, initial_stage, integer_window, plan_window,
                                 surjectivity_check, theta_half_doubling_check)
from contfactor.matalg import divisors
from contfactor.scalar import QQ, QQI

from oracles import chain_oracle, divisors_by_scan, first_step_oracle

THIRD = Fraction(1, 3)


def _scan_window(values, delta, n):
    for d in divisors_by_scan(n):
        ps = [-(-v.numerator * d // v.denominator) - 1 for v in values]
        if all(p >= 1 and 0 < v - Fraction(p, d) < delta for p, v in zip(ps, values)):
            return ps, d
    return None


def test_rational_window_matches_scan():
    values, delta, n = [THIRD, Fraction(1, 4)], Fraction(1, 100), 2 ** 4 * 3 ** 2 * 5 ** 2 * 7
    got = choose_rational_window(values, delta, divisors(n), n)
    assert got == _scan_window(values, delta, n) == ([23, 17], 70)


def test_rational_window_infeasible_suggests_a_size():
    values, delta, n = [THIRD, Fraction(1, 4)], Fraction(1, 30000), 25200
    with pytest.raises(WindowInfeasible) as exc:
        choose_rational_window(values, delta, divisors(n), n)
    m = exc.value.suggested_n
    assert m % n == 0
    ps, q = choose_rational_window(values, delta, divisors(m), m)
    assert all(0 < v - Fraction(p, q) < delta for p, v in zip(ps, values))
    # past the scan limit the explicit bound is used
    with pytest.raises(WindowInfeasible) as exc:
        choose_rational_window([THIRD], Fraction(1, 10 ** 9), divisors(n), n)
    assert exc.value.suggested_n % n == 0 and exc.value.suggested_n > 10 ** 9


def test_integer_window_examples():
    # eps q' = 16 and p = 100: the open window is (88, 90)
    assert integer_window(Fraction(1, 2), 32, 100) == (88, 90)
    assert choose_integer_in_window(Fraction(1, 2), 32, 100) == 89
    with pytest.raises(WindowInfeasible):
        choose_integer_in_window(Fraction(1, 4), 32, 100)  # eps q'/8 = 1 exactly
    for c in (2, 3, 7):
        p = choose_integer_in_window(Fraction(1, 2), 32 * c, 100 * c)
        lo, hi = integer_window(Fraction(1, 2), 32 * c, 100 * c)
        assert lo < p < hi


def test_first_step_at_2520():
    amb = AmbientFactor(2520, QQ)
    tr = halperin_step(amb, initial_stage(amb, THIRD), THIRD)
    assert tr.audit.ok
    q_new, p1, p1_new, p_new = first_step_oracle(1, 1, THIRD, 2520, Fraction(1))
    assert (tr.q_new, tr.plan.p_i, tr.plan.p_i_new, tr.p_new) == (q_new, [p1], [p1_new], p_new)
    assert THIRD < Fraction(tr.p_new, tr.q_new) <= 2 * THIRD
    # z = identity: the distance is exactly N(rho(1) - rho'(1))
    d = tr.z_checks[0]["distance"]
    assert d == 1 - Fraction(tr.p_new, tr.q_new) and d < Fraction(7, 8) * (1 - THIRD)


def test_kappa_on_the_boundary_is_rejected():
    amb = AmbientFactor(2520, QQ)
    with pytest.raises(AssertionViolation):
        halperin_step(amb, initial_stage(amb, THIRD, kappa=(1 - THIRD) / 48), THIRD)


def test_small_ambient_suggests_a_size():
    amb = AmbientFactor(6, QQ)
    with pytest.raises(WindowInfeasible) as exc:
        halperin_step(amb, initial_stage(amb, THIRD), THIRD)
    m = exc.value.suggested_n
    assert m % 6 == 0 and first_step_oracle(1, 1, THIRD, m, Fraction(1)) is not None


def test_third_step_at_27720_is_infeasible():
    assert chain_oracle(THIRD, 27720, 3) == ([1, 43, 1634], [1, 77, 3960])
    with pytest.raises(WindowInfeasible) as exc:
        plan_window(1634, 3960, THIRD, Fraction(1, 10 ** 6), [Fraction(1, 3960)], [1], divisors(27720), 27720)
    assert exc.value.suggested_n % 27720 == 0


def test_half_single_stage_and_doubling():
    half = Fraction(1, 2)
    chain = chain_build(AmbientFactor(27720, QQ), half, 1, z_count=4)
    assert chain.audit.ok
    p1, q1 = chain.p[1], chain.q[1]
    assert half < Fraction(p1, q1) < 1 and chain.delta[1] < Fraction(1, 4)
    rep = theta_half_doubling_check(chain)
    assert rep is not None
    with pytest.raises(ValueError):
        theta_half_doubling_check(chain_build(AmbientFactor(2520, QQ), THIRD, 1, z_count=2))


def test_chain_with_zero_and_identity_samples():
    chain = chain_build(AmbientFactor(2520, QQ), THIRD, 1, z_count=2)
    assert chain.audit.ok and chain.p == [1, 47] and chain.q == [1, 84]
    zero_rows = [c for c in chain.cauchy if c["z"] == 0]  # sample 0 is z = 0
    assert zero_rows and all(c["distance"] == 0 for c in zero_rows)
    doc = json.loads(json.dumps(chain.to_json()))
    assert [s["p"] for s in doc["stages"]] == [1, 47]
    assert doc["steps"][0]["q_new"] == 84


def test_surjectivity_needs_a_step():
    with pytest.raises(ValueError):
        chain_build(AmbientFactor(2520, QQ), THIRD, 0)
    chain = chain_build(AmbientFactor(2520, QQ), THIRD, 1, z_count=2)
    del chain.stages[1:], chain.traces[:]
    with pytest.raises(StageBudgetExhausted):
        surjectivity_check(chain)


def test_star_first_step_matches_plain_step():
    plain = AmbientFactor(27720, QQ)
    star = AmbientFactor(27720, QQI)
    a = halperin_step(plain, initial_stage(plain, THIRD), THIRD)
    b = halperin_step_star(star, initial_stage(star, THIRD, star=True), THIRD)
    assert b.audit.ok and b.star
    assert (a.p_new, a.q_new) == (b.p_new, b.q_new) == (43, 77)
    g = b.next_stage.g
    assert g is not None and g * g == g and g.adjoint() == g
