"""Acceptance suite: one group per criterion, each printed as PASS/FAIL in the summary."""
import json
import time
from fractions import Fraction

import pytest

from contfactor import star as st
from contfactor.campaigns import (idempotent_correction_campaign, perturbation_campaign, pseudo_rank_axioms,
                                  stabilization_campaign)
from contfactor.cli import main
from contfactor.halperin import AmbientFactor, chain_build, halperin_step, initial_stage, theta_half_doubling_check
from contfactor.matalg import Element
from contfactor.scalar import QQ, QQI
from contfactor.stabilize import k_constant

from oracles import chain_oracle, first_step_oracle, is_rational_norm, k_from_proof_steps

CHAIN_AMBIENT = 2 ** 5 * 3 ** 3 * 5 ** 2 * 7 * 11  # 1663200


def _crit(n, title):
    return pytest.mark.criterion(n, title)


# ---------------------------------------------------------------------------
# 1. pseudo-rank axioms
# ---------------------------------------------------------------------------

@_crit(1, "pseudo-rank axioms on M4(Q), M2xM3(Q), M4(Q(i)), 1000 triples each, under 1 min")
def test_pseudo_rank_axioms():
    t0 = time.perf_counter()
    for shape, f in (([4], QQ), ([2, 3], QQ), ([4], QQI)):
        rep = pseudo_rank_axioms(shape, f, 1000, seed=1)
        assert rep.trials == 1000
        assert rep.ok, rep.failures[:3]
        names = set(rep.claims)
        for ax in ("(1)", "(2)", "(3)", "(4)"):
            assert any(n.startswith(ax) for n in names)
    assert time.perf_counter() - t0 < 60


# ---------------------------------------------------------------------------
# 2. K(1) = 4
# ---------------------------------------------------------------------------

@_crit(2, "K(1) = 4: N(rho(1) - g) < 4 eps on 1000 instances in M6(Q)")
def test_idempotent_correction_bound():
    assert k_constant(1) == 4 == k_from_proof_steps(1)
    rep = idempotent_correction_campaign(1000, 6, QQ, seed=2)
    assert rep.trials == 1000
    assert rep.ok, rep.failures[:3]
    assert rep.claims["N(rho(1) - g) < 4 eps"][0] == 1000
    assert rep.observed["N(rho(1) - g) / eps"] < 4


# ---------------------------------------------------------------------------
# 3. K(2), K(3) and the stabilization campaigns
# ---------------------------------------------------------------------------

@_crit(3, "K(2) = 172, K(3) = 12112 and stabilization campaigns within K(p) eps, under 5 min")
def test_k_constants_frozen():
    assert k_constant(2) == 172 == k_from_proof_steps(2)
    assert k_constant(3) == 12112 == k_from_proof_steps(3)


@_crit(3, "K(2) = 172, K(3) = 12112 and stabilization campaigns within K(p) eps, under 5 min")
def test_stabilization_campaigns():
    t0 = time.perf_counter()
    for p, n, trials in ((2, 8, 200), (3, 12, 100)):
        rep = stabilization_campaign(p, n, trials, QQ, seed=3)
        assert rep.trials == trials
        assert rep.ok, rep.failures[:3]
        assert rep.observed["max distance / eps"] < k_constant(p)
        assert len(rep.claims) > 5  # intermediate inequalities were audited, not just the final bound
    assert time.perf_counter() - t0 < 300


# ---------------------------------------------------------------------------
# 4. perturbation bounds
# ---------------------------------------------------------------------------

@_crit(4, "perturbation bounds 3, 4, 4 and 5 eps over M6(Q(i)), 1000 trials")
def test_perturbation_bounds():
    rep = perturbation_campaign(1000, 6, QQI, seed=4)
    assert rep.trials == 1000
    assert rep.ok, rep.failures[:3]
    obs = rep.observed
    print("observed maxima:", {k: str(v) for k, v in sorted(obs.items())})
    assert obs["N(r^+ - s^+) / N(r - s)"] <= 3
    assert obs["N(LP(r) - LP(s)) / N(r - s)"] <= 4
    assert obs["N(RP(r) - RP(s)) / N(r - s)"] <= 4
    assert obs["N(e_1 - e_1') / eps"] <= 5


# ---------------------------------------------------------------------------
# 5. the inductive step
# ---------------------------------------------------------------------------

FIRST_STEPS = {  # theta -> (q', p_1, p'_1, p'), frozen from the window oracle
    Fraction(1, 3): (77, 76, 43, 43),
    Fraction(2, 5): (84, 83, 51, 51),
}


@_crit(5, "first inductive step at M_27720(Q) for theta = 1/3, 2/5: conditions (1)-(6) and windows")
@pytest.mark.parametrize("theta", sorted(FIRST_STEPS))
def test_first_inductive_step(theta):
    n = 27720
    assert first_step_oracle(1, 1, theta, n, Fraction(1)) == FIRST_STEPS[theta]
    amb = AmbientFactor(n, QQ)
    tr = halperin_step(amb, initial_stage(amb, theta), theta)
    assert tr.audit.ok
    pl = tr.plan
    assert (pl.q_new, pl.p_i[0], pl.p_i_new[0], pl.p_new) == FIRST_STEPS[theta]
    names = [a.name for a in tr.audit.records]
    for cond in ("(1)", "(2)", "(3)", "(4)", "(5)", "(6)"):
        assert any(nm.startswith(cond) for nm in names), cond
    gap = Fraction(tr.p, tr.q) - theta
    key = Fraction(tr.p, tr.q) - Fraction(pl.p_new, pl.q_new)
    assert gap / 2 < key
    assert tr.next_stage.N(tr.next_stage.rho.one_image()) == Fraction(pl.p_new, pl.q_new)
    for e, pi, pn in zip(pl.eps_i, pl.p_i, pl.p_i_new):
        step = Fraction(pi - pn, pl.q_new)
        assert Fraction(5, 8) * e < step < Fraction(3, 4) * e


# ---------------------------------------------------------------------------
# 6. the Cauchy ledger of a 3-stage chain
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def chain_third():
    ch = chain_build(AmbientFactor(CHAIN_AMBIENT, QQ), Fraction(1, 3), 3, z_count=10, seed=0)
    yield ch
    del ch


@_crit(6, "3-stage chain at theta = 1/3: Cauchy bounds, delta halving, rank identity on 10 samples")
def test_chain_cauchy_ledger(chain_third):
    ch = chain_third
    assert ch.audit.ok
    assert (ch.p, ch.q) == chain_oracle(Fraction(1, 3), CHAIN_AMBIENT, 3)
    assert ch.p == [1, 42, 588, 32340] and ch.q == [1, 75, 1512, 92400]
    d = ch.delta
    assert all(d[i + 1] < d[i] / 2 for i in range(3))
    assert {c["z"] for c in ch.ranks} == set(range(10))
    for c in ch.ranks:
        j = c["j"]
        assert c["N_image"] == Fraction(ch.p[j], ch.q[j]) * c["N_z"]
    pairs = {(c["j"], c["h"]) for c in ch.cauchy}
    assert {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)} <= pairs
    for c in ch.cauchy:
        assert c["distance"] < c["bound"] == sum(d[c["j"]:c["h"]])
    assert ch.surjectivity and all(s["exe_minus_rho_w"] < s["eta"] for s in ch.surjectivity)


# ---------------------------------------------------------------------------
# 7. a projection pair that is equivalent but not *-equivalent
# ---------------------------------------------------------------------------

@_crit(7, "discriminant 3 is equivalent but not *-equivalent to e11; discriminant 2 is; brute force agrees")
def test_star_equivalence_exhibit():
    e11 = Element.unit([2], QQI, 0, 0, 0)
    p3 = st.projection_onto((QQI(1, 1), QQI(1)), QQI)
    assert not is_rational_norm(Fraction(3))
    assert st.plain_equivalence_witness(p3, e11) is not None
    assert not st.decide_star_equivalence(p3, e11).equivalent
    assert st.bounded_witness_search(p3, e11, 6, 36) is None

    p2 = st.projection_onto((QQI(1), QQI(1)), QQI)
    assert is_rational_norm(Fraction(2))
    v = st.decide_star_equivalence(p2, e11)
    assert v.equivalent and v.witness.check()
    w = v.witness.w
    assert w * w.adjoint() == p2 or w.adjoint() * w == p2


@_crit(7, "discriminant 3 is equivalent but not *-equivalent to e11; discriminant 2 is; brute force agrees")
def test_star_equivalence_height_family_agreement():
    e11 = Element.unit([2], QQI, 0, 0, 0)
    fam = st.gaussian_height_family(3, QQI)
    assert len(fam) == 390
    equivalent = 0
    for v, P in fam:
        norm = sum(int(x.re) ** 2 + int(x.im) ** 2 for x in v)
        oracle = is_rational_norm(Fraction(norm))
        decided = st.decide_star_equivalence(P, e11).equivalent
        found = st.bounded_witness_search(P, e11, 6, 36) is not None
        assert oracle == decided == found, (v, norm)
        equivalent += oracle
    assert equivalent == 142


# ---------------------------------------------------------------------------
# 8. theta = 1/2 doubling
# ---------------------------------------------------------------------------

@_crit(8, "theta = 1/2 chain: rank(e) = rank(1 - e) at every stage")
def test_theta_half_doubling():
    ch = chain_build(AmbientFactor(CHAIN_AMBIENT, QQ), Fraction(1, 2), 2, seed=0)
    assert ch.audit.ok
    assert (ch.p, ch.q) == chain_oracle(Fraction(1, 2), CHAIN_AMBIENT, 2)
    rep = theta_half_doubling_check(ch)
    assert rep["ok"]
    assert len(rep["stages"]) == 3
    for s in rep["stages"]:
        assert s["rank_e"] == s["rank_complement"] == s["resolution"] // 2
    names = [a["name"] for a in rep["assertions"]]
    assert sum("rank(e) = rank(1 - e)" in nm for nm in names) == 3


# ---------------------------------------------------------------------------
# 9. determinism of the CLI
# ---------------------------------------------------------------------------

def _run(tmp_path, name, argv):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    doc = json.loads(out.read_text())
    doc.pop("timing", None)
    return code, json.dumps(doc, sort_keys=True)


@_crit(9, "every command rerun with the same seed gives the same report apart from timing")
def test_cli_determinism(tmp_path):
    code, _ = _run(tmp_path, "inst.json", ["gen", "stabilization", "--p", "2", "--ambient", "8", "--seed", "5"])
    assert code == 0
    code, _ = _run(tmp_path, "pair.json", ["gen", "projection-pair", "--field", "qi", "--discriminant", "3"])
    assert code == 0
    commands = {
        "bounds": ["bounds", "--trials", "5", "--kp-trials", "2", "--seed", "9"],
        "stabilize": ["stabilize", str(tmp_path / "inst.json")],
        "star-equiv": ["star-equiv", str(tmp_path / "pair.json")],
        "halperin": ["halperin", "--theta", "1/3", "--stages", "2", "--ambient", "27720", "--seed", "3"],
        "gen": ["gen", "stabilization", "--p", "3", "--ambient", "12", "--seed", "7", "--star", "--field", "qi"],
    }
    for name, argv in commands.items():
        first = _run(tmp_path, f"{name}-a.json", argv)
        second = _run(tmp_path, f"{name}-b.json", argv)
        assert first[0] == 0, name
        assert first == second, name
        if name != "gen":
            raw_a = (tmp_path / f"{name}-a.json").read_text().splitlines()
            raw_b = (tmp_path / f"{name}-b.json").read_text().splitlines()
            differing = [a for a, b in zip(raw_a, raw_b) if a != b]
            assert all('"seconds"' in line for line in differing), differing
