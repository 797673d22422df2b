"""Seeded randomized campaigns over the exact bounds.

Each trial draws from ``random.Random(f"{seed}:{name}:{trial}")``, so a trial's
data depend only on (seed, campaign, trial index) and campaigns can be rerun,
reordered or split without changing any number.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg as la
from .audit import AuditLog
from .matalg import Element, PseudoRank, Shape
from .regular import idempotent_correction_bound
from .scalar import QQ, QQI, InvolutiveField
from .stabilize import generate_instance, k_constant, k_star_constant, stabilize_matrix_units, stabilize_star
from . import star as st


def trial_rng(seed, name: str, trial: int) -> random.Random:
    return random.Random(f"{seed}:{name}:{trial}")


def _slack(a) -> Fraction | None:
    """lhs - rhs for an order claim, the quantity that must stay on one side of 0."""
    if isinstance(a.lhs, bool) or a.relation in ("==", "!="):
        return None
    try:
        return Fraction(a.lhs) - Fraction(a.rhs)
    except (TypeError, ValueError):
        return None


@dataclass
class CampaignReport:
    """Aggregate of many trial audits: per claim, its count and the tightest instance."""

    name: str
    config: dict
    trials: int = 0
    claims: dict = field(default_factory=dict)  # name -> [count, closest (trial, Assertion)]
    failures: list = field(default_factory=list)  # (trial, Assertion)
    observed: dict = field(default_factory=dict)  # label -> max ratio

    def absorb(self, trial: int, log: AuditLog):
        for a in log.records:
            entry = self.claims.setdefault(a.name, [0, None])
            entry[0] += 1
            s = _slack(a)
            if entry[1] is None or (s is not None and s > _slack(entry[1][1])):
                entry[1] = (trial, a)
            if not a.verdict:
                self.failures.append((trial, a))

    def observe(self, label: str, value):
        if value is None:
            return
        value = Fraction(value)
        if label not in self.observed or value > self.observed[label]:
            self.observed[label] = value

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def assertion_count(self) -> int:
        return sum(c for c, _ in self.claims.values())

    def to_json(self) -> dict:
        def rec(t, a):
            d = a.to_json()
            d["trial"] = t
            return d
        return {
            "campaign": self.name, "config": self.config, "trials": self.trials,
            "assertion_count": self.assertion_count, "verdict": "pass" if self.ok else "fail",
            "claims": [{"name": k, "count": c, "closest": rec(*w)} for k, (c, w) in self.claims.items()],
            "failures": [rec(t, a) for t, a in self.failures[:50]],
            "observed_max": {k: str(v) for k, v in sorted(self.observed.items())},
        }


# ---------------------------------------------------------------------------
# random data
# ---------------------------------------------------------------------------

def random_matrix(rng, n: int, f: InvolutiveField, zero_weight: float = 0.4, height: int = 3):
    return [[f.random(rng, height, zero_weight) for _ in range(n)] for _ in range(n)]


def random_element(rng, shape, f: InvolutiveField, zero_weight: float = 0.4) -> Element:
    return Element.from_dense(f, [random_matrix(rng, n, f, zero_weight) for n in Shape(shape)])


def random_invertible(rng, n: int, f: InvolutiveField):
    while True:
        u = random_matrix(rng, n, f, 0.3)
        if la.dense_rank(u, f) == n:
            return u, la.inverse(u, f)


def random_low_rank(rng, n: int, f: InvolutiveField, rank: int) -> Element:
    m = [[f.zero] * n for _ in range(n)]
    for _ in range(rank):
        u = [f.random(rng, 3, 0.3) for _ in range(n)]
        v = [f.random(rng, 3, 0.3) for _ in range(n)]
        for i in range(n):
            for j in range(n):
                m[i][j] = m[i][j] + u[i] * v[j]
    return Element.from_dense(f, [m])


def orthogonal_idempotents(rng, shape, f: InvolutiveField):
    """e, f' = u D1 u^-1, u D2 u^-1 with disjoint diagonal supports, blockwise."""
    es, fs = [], []
    for n in Shape(shape):
        u, ui = random_invertible(rng, n, f)
        idx = list(range(n))
        rng.shuffle(idx)
        k1 = rng.randint(0, n)
        k2 = rng.randint(0, n - k1)
        d1 = [[f.one if i == j and i in idx[:k1] else f.zero for j in range(n)] for i in range(n)]
        d2 = [[f.one if i == j and i in idx[k1:k1 + k2] else f.zero for j in range(n)] for i in range(n)]
        es.append(la.matmul(la.matmul(u, d1, f), ui, f))
        fs.append(la.matmul(la.matmul(u, d2, f), ui, f))
    return Element.from_dense(f, es), Element.from_dense(f, fs)


def random_weights(rng, k: int):
    if k == 1:
        return [Fraction(1)]
    cuts = sorted(rng.randint(0, 12) for _ in range(k - 1))
    pts = [0] + cuts + [12]
    return [Fraction(b - a, 12) for a, b in zip(pts, pts[1:])]


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------

def pseudo_rank_axioms(shape, f: InvolutiveField, trials: int, seed=0) -> CampaignReport:
    """The four pseudo-rank axioms on random triples (a, b, orthogonal idempotent pair)."""
    shape = Shape(shape)
    rep = CampaignReport("pseudo-rank-axioms", {"shape": list(shape), "field": f.name, "seed": seed})
    for t in range(trials):
        rng = trial_rng(seed, rep.name + str(list(shape)) + f.name, t)
        N = PseudoRank(shape, random_weights(rng, len(shape)))
        a, b = random_element(rng, shape, f), random_element(rng, shape, f)
        e, g = orthogonal_idempotents(rng, shape, f)
        log = AuditLog(strict=False)
        na, nb = N(a), N(b)
        log.check("0 <= N(a) <= 1", Fraction(0) <= na <= 1, "==", True)
        log.check("(1) N(1) = 1", N(Element.identity(shape, f)), "==", 1)
        log.check("(2) N(a + b) <= N(a) + N(b)", N(a + b), "<=", na + nb)
        nab = N(a * b)
        log.check("(3) N(ab) <= N(a)", nab, "<=", na)
        log.check("(3) N(ab) <= N(b)", nab, "<=", nb)
        log.check("e, f are orthogonal idempotents", e * e == e and g * g == g and (e * g).is_zero()
                  and (g * e).is_zero(), "==", True)
        log.check("(4) N(e + f) = N(e) + N(f)", N(e + g), "==", N(e) + N(g))
        rep.absorb(t, log)
        rep.trials += 1
    return rep


def idempotent_correction_campaign(trials: int, n: int = 6, f: InvolutiveField = QQ, seed=0) -> CampaignReport:
    """Generated p = 1 instances: the corrected idempotent g stays within 4 eps of rho(1)."""
    rep = CampaignReport("idempotent-correction", {"n": n, "field": f.name, "seed": seed})
    for t in range(trials):
        inst = generate_instance(f"{seed}:k1", 1, n, budget=1 + t % 2, field=f, trial=t)
        rho1 = inst.rho.one_image()
        x = inst.approximants[0][0]
        cr = idempotent_correction_bound(rho1, x, inst.A, inst.N, inst.eps)
        log = AuditLog(strict=False)
        log.check("N(rho(1) - x) < eps", cr.distance_before, "<", inst.eps)
        log.check("N(rho(1) - g) <= 4 N(rho(1) - x)", cr.distance_after, "<=", 4 * cr.distance_before)
        log.check("N(rho(1) - g) < 4 eps", cr.distance_after, "<", 4 * inst.eps)
        rep.absorb(t, log)
        rep.observe("N(rho(1) - g) / eps", cr.distance_after / inst.eps)
        rep.trials += 1
    return rep


def stabilization_campaign(p: int, n: int, trials: int, f: InvolutiveField = QQ, star: bool = False,
                           seed=0) -> CampaignReport:
    """Stabilize generated instances; every audit line and the K(p) eps bound must hold."""
    K = k_star_constant(p) if star else k_constant(p)
    rep = CampaignReport("stabilization", {"p": p, "n": n, "field": f.name, "star": star, "seed": seed,
                                           "K": K})
    for t in range(trials):
        inst = generate_instance(f"{seed}:stab", p, n, budget=1 + t % 2, field=f, star=star, trial=t)
        res = stabilize_star(inst, strict=False) if star else stabilize_matrix_units(inst, strict=False)
        log = AuditLog(strict=False)
        log.extend(res.audit)
        log.check(f"max N(psi(e_ij) - rho(e_ij)) < K({p}) eps", res.max_distance, "<", K * inst.eps)
        rep.absorb(t, log)
        rep.observe("max distance / eps", res.ratio(inst.eps))
        rep.trials += 1
    return rep


def _coordinate_pair(rng, n: int, f: InvolutiveField):
    """Diagonal projections f1, f2 of equal rank with a coordinate partial isometry w."""
    k = rng.randint(1, n // 2)
    idx = list(range(n))
    rng.shuffle(idx)
    a, b = idx[:k], idx[k:2 * k] if rng.random() < 0.5 else idx[:k]
    rng.shuffle(b)
    w = Element.zero([n], f)
    f1, f2 = Element.zero([n], f), Element.zero([n], f)
    for i, j in zip(a, b):
        w = w + Element.unit([n], f, 0, i, j)
        f1 = f1 + Element.unit([n], f, 0, i, i)
        f2 = f2 + Element.unit([n], f, 0, j, j)
    return f1, f2, w


def perturbation_campaign(trials: int, n: int = 6, f: InvolutiveField = QQI, seed=0) -> CampaignReport:
    """Isometry, the 3/4/4 bounds for relative inverse and LP/RP, and the 5 eps shrink."""
    st.require_star_field(f)
    rep = CampaignReport("perturbation", {"n": n, "field": f.name, "seed": seed})
    N = PseudoRank([n], [1])
    for t in range(trials):
        rng = trial_rng(seed, rep.name, t)
        r = random_low_rank(rng, n, f, rng.randint(0, n))
        s = r + random_low_rank(rng, n, f, rng.randint(1, 2))
        while s == r:
            s = r + random_low_rank(rng, n, f, 1)
        log = AuditLog(strict=False)
        pr = st.perturbation_ratios(r, s, N, strict=False)
        log.extend(pr["audit"])
        rep.observe("N(r^+ - s^+) / N(r - s)", pr["rel_inverse_ratio"])
        rep.observe("N(LP(r) - LP(s)) / N(r - s)", pr["lp_ratio"])
        rep.observe("N(RP(r) - RP(s)) / N(r - s)", pr["rp_ratio"])

        f1, f2, w = _coordinate_pair(rng, n, f)
        e1 = st.lp(f1 + random_low_rank(rng, n, f, 1))
        e2 = st.lp(f2 + random_low_rank(rng, n, f, 1))
        eps = max(N(e1 - f1), N(e2 - f2))
        if eps:
            _, _, _, slog = st.shrink_to_star_equiv(e1, e2, f1, f2, w, N, eps)
            log.extend(slog, "shrink: ")
            rep.observe("N(e_1 - e_1') / eps", slog.records[-2].lhs / eps)
        rep.absorb(t, log)
        rep.trials += 1
    return rep


__all__ = ["CampaignReport", "pseudo_rank_axioms", "idempotent_correction_campaign", "stabilization_campaign",
           "perturbation_campaign", "trial_rng"]
