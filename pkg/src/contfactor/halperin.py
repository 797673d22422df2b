"""The inductive embedding step and the telescoping chain, run inside M_n.

A continuous factor is simulated by a single full matrix algebra M_n whose
size is highly divisible, so every rank with denominator dividing n is
attained. Homomorphisms are kept in frame form (see :class:`ConcreteHom`),
which keeps the late stages of a chain sparse: all images stay partial
permutations when the data are coordinate.

Tolerances are carried as ``kappa = K(p) * eps``. The constant K(p) grows like
2^(p^2/2) and is never materialized for large p; every inequality the step
needs can be stated in terms of kappa alone.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from .audit import AuditLog
from .linalg import SMat
from .matalg import (ConcreteHom, Element, PseudoRank, Shape, ShapeMismatch, Subalgebra, coordinate_hom,
                     direct_sum, divisors, lcm, sparse_rank_factorization, standard_embedding,
                     tensor_stabilize, normalized_rank, verify_matrix_units)
from .regular import ConstructionFailure
from .scalar import InvolutiveField, QQ
from .stabilize import (StabilizationInstance, k_constant, k_star_constant, stabilize_matrix_units,
                        stabilize_star)
from . import star as st


class WindowInfeasible(ValueError):
    """No admissible denominator exists in the ambient divisor set."""

    def __init__(self, message, suggested_n=None):
        super().__init__(message if suggested_n is None else f"{message}; an ambient size of {suggested_n} would do")
        self.suggested_n = suggested_n


class StageBudgetExhausted(ValueError):
    """No built stage is fine enough for the requested tolerance."""


class AmbientTooSmall(ValueError):
    """The ambient cannot host a required idempotent."""


# ---------------------------------------------------------------------------
# window selection
# ---------------------------------------------------------------------------

def _below(v: Fraction, q: int) -> int:
    """Largest integer p with p/q < v."""
    return math.ceil(v * q) - 1


def _window_ok(values, delta, q):
    ps = [_below(v, q) for v in values]
    if all(p >= 1 and v - Fraction(p, q) < delta for p, v in zip(ps, values)):
        return ps
    return None


def smallest_window_denominator(values, delta, scan_limit: int = 200_000) -> int:
    """A positive q admitting integers p_i >= 1 with 0 < v_i - p_i/q < delta.

    The smallest such q is returned when it lies within ``scan_limit``.
    Otherwise the explicit bound is used: any multiple q of the lcm of the
    value denominators with q > 1/delta works, since then each gap is 1/q.
    """
    values = [Fraction(v) for v in values]
    delta = Fraction(delta)
    for q in range(1, scan_limit + 1):
        if _window_ok(values, delta, q) is not None:
            return q
    L = 1
    for v in values:
        L = lcm(L, v.denominator)
    q = L * (math.floor(1 / delta / L) + 1)
    while _window_ok(values, delta, q) is None:
        q += L
    return q


def choose_rational_window(values, delta, divisor_set, ambient_n: int | None = None):
    """(p_i list, q') with 0 < v_i - p_i/q' < delta and q' in ``divisor_set``.

    The smallest admissible q' is returned. On failure the error carries the
    smallest ambient size (a multiple of ``ambient_n``) that would admit one.
    """
    values = [Fraction(v) for v in values]
    delta = Fraction(delta)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if any(not v > 0 for v in values):
        raise ValueError("values must be positive")
    for q in sorted(divisor_set):
        ps = _window_ok(values, delta, q)
        if ps is not None:
            return ps, q
    q = smallest_window_denominator(values, delta)
    n = ambient_n if ambient_n is not None else max(divisor_set, default=1)
    raise WindowInfeasible(f"no denominator in the divisor set gives a window of width {delta}", lcm(n, q))


def integer_window(eps_i, q: int, p_i: int):
    """Open interval of admissible p_i' as (low, high) reals: p_i - 3/4 eps q < p' < p_i - 5/8 eps q."""
    eps_i = Fraction(eps_i)
    return Fraction(p_i) - Fraction(3, 4) * eps_i * q, Fraction(p_i) - Fraction(5, 8) * eps_i * q


def choose_integer_in_window(eps_i, q: int, p_i: int) -> int:
    """Largest integer p' >= 0 with 5/8 eps_i < (p_i - p')/q < 3/4 eps_i.

    Requires eps_i q / 8 > 1, which guarantees the window holds an integer.
    """
    eps_i = Fraction(eps_i)
    if not eps_i * q / 8 > 1:
        raise WindowInfeasible(f"eps_i q'/8 = {eps_i * q / 8} is not above 1")
    low, high = integer_window(eps_i, q, p_i)
    p = math.ceil(high) - 1
    if not (p > low and p >= 0):
        raise WindowInfeasible(f"no nonnegative integer in ({low}, {high})")
    return p


# ---------------------------------------------------------------------------
# the numeric part of one step
# ---------------------------------------------------------------------------

@dataclass
class WindowPlan:
    """Rational bookkeeping of one inductive step (everything exact)."""

    p: int
    q: int
    theta: Fraction
    kappa: Fraction
    values: list  # N(f^{(i)}_11)
    r: list  # r_i
    delta: Fraction
    p_i: list
    q_new: int
    alpha_inv: Fraction  # 1/alpha' = sum r_i p_i / q'
    lambdas: list
    eps_i: list
    p_i_new: list
    g: int
    p_new: int
    rejected: list = field(default_factory=list)  # q' values tried and refused

    @property
    def gap(self) -> Fraction:
        return Fraction(self.p, self.q) - self.theta

    @property
    def new_gap(self) -> Fraction:
        return Fraction(self.p_new, self.q_new) - self.theta

    def audit(self, log):
        """Record every inequality of the window selection in ``log``."""
        p, q, gap = self.p, self.q, self.gap
        sum_r = sum(self.r)
        log.check("delta = gap / (48 p sum r_i)", self.delta, "==", gap / (48 * p * sum_r))
        for i, (v, pi) in enumerate(zip(self.values, self.p_i)):
            log.check(f"0 < N(f^({i+1})_11) - p_{i+1}/q'", Fraction(0), "<", v - Fraction(pi, self.q_new))
            log.check(f"N(f^({i+1})_11) - p_{i+1}/q' < delta", v - Fraction(pi, self.q_new), "<", self.delta)
        local = abs(Fraction(1, q) - sum(ri * v for ri, v in zip(self.r, self.values)))
        log.check("|1/q - sum r_i N(f^(i)_11)| < K(p) eps", local, "<", self.kappa)
        drift = abs(Fraction(p, q) - p * self.alpha_inv)
        log.check("|p/q - p/alpha'| < K(p) p eps + p (sum r_i) delta", drift, "<",
                  self.kappa * p + p * sum_r * self.delta)
        log.check("|p/q - p/alpha'| < gap/8", drift, "<", gap / 8)
        log.check("sum lambda_i = 1", sum(self.lambdas), "==", 1)
        for i, (e, pi, pn) in enumerate(zip(self.eps_i, self.p_i, self.p_i_new)):
            log.check(f"eps_{i+1} q'/8 > 1", e * self.q_new / 8, ">", 1)
            step = Fraction(pi - pn, self.q_new)
            log.check(f"5/8 eps_{i+1} < (p_{i+1} - p'_{i+1})/q'", Fraction(5, 8) * e, "<", step)
            log.check(f"(p_{i+1} - p'_{i+1})/q' < 3/4 eps_{i+1}", step, "<", Fraction(3, 4) * e)
            log.check(f"p'_{i+1} >= 0", pn, ">=", 0)
        log.check("g = sum r_i p'_i", self.g, "==", sum(ri * pn for ri, pn in zip(self.r, self.p_i_new)))
        log.check("p' = p g", self.p_new, "==", p * self.g)
        mid = p * self.alpha_inv - Fraction(self.p_new, self.q_new)
        log.check("5/8 gap < p/alpha' - p'/q'", Fraction(5, 8) * gap, "<", mid)
        log.check("p/alpha' - p'/q' < 3/4 gap", mid, "<", Fraction(3, 4) * gap)
        drop = Fraction(p, q) - Fraction(self.p_new, self.q_new)
        log.check("key: gap/2 < p/q - p'/q'", gap / 2, "<", drop)
        log.check("key: p/q - p'/q' < 7/8 gap", drop, "<", Fraction(7, 8) * gap)
        log.check("(2) 0 < p'/q' - theta", Fraction(0), "<", self.new_gap)
        log.check("(2) p'/q' - theta < gap/2", self.new_gap, "<", gap / 2)


def plan_at(p: int, q: int, theta, kappa, values, r, qn: int) -> WindowPlan | None:
    """The window plan for the denominator ``qn``, or None if a window is empty there."""
    gap = Fraction(p, q) - theta
    delta = gap / (48 * p * sum(r))
    ps = _window_ok(values, delta, qn)
    if ps is None:
        return None
    alpha_inv = sum(Fraction(ri * pi, qn) for ri, pi in zip(r, ps))
    lambdas = [Fraction(ri * pi, qn) / alpha_inv for ri, pi in zip(r, ps)]
    eps = [lam * gap / (p * ri) for lam, ri in zip(lambdas, r)]
    try:
        pn = [choose_integer_in_window(e, qn, pi) for e, pi in zip(eps, ps)]
    except WindowInfeasible:
        return None
    g = sum(ri * x for ri, x in zip(r, pn))
    if g == 0:
        return None
    return WindowPlan(p, q, theta, Fraction(kappa), values, list(r), delta, ps, qn, alpha_inv, lambdas, eps,
                      pn, g, p * g)


def plan_window(p: int, q: int, theta, kappa, values, r, divisor_set, ambient_n: int | None = None) -> WindowPlan:
    """Run the rational part of the inductive step.

    Denominators q' are tried in increasing order; the first one admitting
    both the rational window and every integer window is kept.
    """
    theta, kappa = Fraction(theta), Fraction(kappa)
    values = [Fraction(v) for v in values]
    gap = Fraction(p, q) - theta
    if not gap > 0:
        raise ValueError(f"p/q = {Fraction(p, q)} does not exceed theta = {theta}")
    delta = gap / (48 * p * sum(r))
    ps, q_new = choose_rational_window(values, delta, divisor_set, ambient_n)
    rejected = []
    for qn in sorted(d for d in divisor_set if d >= q_new):
        plan = plan_at(p, q, theta, kappa, values, r, qn)
        if plan is None:
            if _window_ok(values, delta, qn) is not None:
                rejected.append(qn)
            continue
        plan.rejected = rejected
        return plan
    # suggest the smallest denominator meeting both windows
    qn = 1
    while True:
        ps = _window_ok(values, delta, qn)
        if ps is not None:
            alpha_inv = sum(Fraction(ri * pi, qn) for ri, pi in zip(r, ps))
            eps = [Fraction(ri * pi, qn) / alpha_inv * gap / (p * ri) for ri, pi in zip(r, ps)]
            if all(e * qn / 8 > 1 for e in eps):
                break
        qn += 1
    n = ambient_n if ambient_n is not None else max(divisor_set, default=1)
    raise WindowInfeasible("no denominator in the divisor set meets the integer windows", lcm(n, qn))


# ---------------------------------------------------------------------------
# ambient and stage data
# ---------------------------------------------------------------------------

@dataclass
class AmbientFactor:
    """M_n standing in for a continuous factor, with a designated spanning family.

    The family is given at resolution ``family_resolution`` (a divisor of n)
    and is lifted as needed. With ``lazy`` set, stages run at the smallest
    resolution their denominators require; normalized ranks are unchanged
    by lifting x -> diag(x, ..., x), so the numbers are those of M_n.
    """

    n: int
    field: InvolutiveField = QQ
    family: list | None = None
    family_resolution: int = 1
    lazy: bool = True

    def __post_init__(self):
        if self.n < 1 or self.n % self.family_resolution:
            raise ValueError("the family resolution must divide n")
        if self.family is None:
            self.family = [Element.identity([self.family_resolution], self.field)]
        for x in self.family:
            if x.shape != Shape([self.family_resolution]):
                raise ShapeMismatch("family elements must live at the family resolution")
        self.divisors = divisors(self.n)

    @property
    def start_resolution(self) -> int:
        return self.family_resolution if self.lazy else self.n

    def family_at(self, m: int, count: int | None = None):
        if m % self.family_resolution:
            raise ValueError(f"resolution {m} does not refine the family resolution")
        c = m // self.family_resolution
        fam = self.family if count is None else self.family[:count]
        return [x.lift(c) for x in fam]

    def to_json(self):
        return {"n": self.n, "field": self.field.name, "family_size": len(self.family),
                "family_resolution": self.family_resolution, "lazy": self.lazy,
                "divisor_count": len(self.divisors)}


@dataclass
class Stage:
    """Hypotheses of one step: rho: M_p -> M_m with N(rho(1)) = p/q, and A.

    ``kappa`` stands for K(p) eps (K*(p) eps in star mode). ``approximants``
    is None when every rho(e_ij) already lies in A; ``tracked`` counts the
    family members A is known to approximate. ``g`` is the projection of the
    star variant.
    """

    p: int
    q: int
    resolution: int
    rho: ConcreteHom
    A: Subalgebra
    kappa: Fraction
    tracked: int = 1
    approximants: list | None = None
    g: Element | None = None

    @property
    def N(self) -> PseudoRank:
        return PseudoRank([self.resolution], [1])

    def lifted(self, m: int) -> "Stage":
        if m == self.resolution:
            return self
        if m % self.resolution:
            raise ValueError(f"cannot lift resolution {self.resolution} to {m}")
        c = m // self.resolution
        approx = None if self.approximants is None else [[x.lift(c) for x in row] for row in self.approximants]
        return Stage(self.p, self.q, m, self.rho.lift(c), Subalgebra(self.A.hom.lift(c), self.A.star),
                     self.kappa, self.tracked, approx, None if self.g is None else self.g.lift(c))


def initial_stage(ambient: AmbientFactor, theta, A: Subalgebra | None = None, kappa=None,
                  star: bool = False) -> Stage:
    """The degenerate start p = q = 1, rho(1) = 1, with A = scalars unless given."""
    theta = Fraction(theta)
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    f = ambient.field
    if A is None:
        m = ambient.start_resolution
        A = Subalgebra.scalars([m], f, star=star)
    m = A.ambient[0]
    rho = standard_embedding([1], [m], [[m]], f, unital=True)
    if kappa is None:
        kappa = (1 - theta) / 96
    one = Element.identity([m], f)
    return Stage(1, 1, m, rho, A, Fraction(kappa), 1, None, one if star else None)


# ---------------------------------------------------------------------------
# helpers for the structural part
# ---------------------------------------------------------------------------

_K_LIMIT = 40  # K(p) is materialized only up to this p


def _k(p: int, star: bool) -> int:
    if p > _K_LIMIT:
        raise ValueError(f"K(p) for p = {p} is not materialized; tolerances are tracked as K(p) eps")
    return k_star_constant(p) if star else k_constant(p)


def _scaled_below(log, name, p, star, dist, kappa):
    """Record K(p) * dist < kappa, i.e. dist < eps, without forming K(p) when dist = 0."""
    lhs = Fraction(0) if dist == 0 else _k(p, star) * dist
    return log.check(name, lhs, "<", kappa)


def _nearest(A: Subalgebra, x: Element) -> Element:
    """Compression of x into A through the frames (x itself when x lies in A)."""
    h = A.hom
    if h.frames_square and x.is_identity():
        return x
    blocks = []
    for t in range(len(h.src)):
        b = next(b for b, d in enumerate(h.dims[t]) if d)
        blocks.append(h.coordinates(x.blocks[b], t, b))
    return A.push(Element(h.src, x.field, blocks))


def _is_coordinate_projection(m: SMat, one) -> bool:
    return all(len(row) == 1 and row.get(r) == one for r, row in m.rows.items())


def _unit_columns(F: SMat, f: InvolutiveField, star: bool, budget: int):
    """Columns c_j and rows r_j (as dicts) with F = sum_j c_j r_j^T and r_j . c_l = delta_jl.

    In star mode r_j = c_j^*, so the f_jl built from them are *-matrix units.
    """
    if _is_coordinate_projection(F, f.one):
        idx = sorted(F.rows)
        return [{a: f.one} for a in idx], [{a: f.one} for a in idx]
    if not star:
        C, R = sparse_rank_factorization(F, f)
        Ct = C.transpose()
        return [Ct.rows.get(j, {}) for j in range(C.ncols)], [R.rows.get(j, {}) for j in range(R.nrows)]
    n = F.nrows
    w, why = st._standard_witness(Element([n], f, [F]), budget)
    if w is None:
        raise st.CertificationFailure("1", f"f is not *-equivalent to a standard projection: {why}")
    k = F.rank(f)
    wt = w.blocks[0].transpose()
    cols = [wt.rows.get(j, {}) for j in range(k)]
    return cols, [{a: v.conj() if f.kind == "qi" else v for a, v in c.items()} for c in cols]


def _frame_rows(hom: ConcreteHom, t: int, vec: dict, use_p: bool) -> SMat:
    """d x m matrix: rows s of (vec^T (x) I_d) Q_t, or of P_t (vec (x) I_d) transposed."""
    d, off = hom.dims[t][0], hom.offsets[0][t]
    src = hom._pt(0) if use_p else hom.Q[0]
    m = hom.tgt[0]
    zero = hom.field.zero
    rows = {}
    for s in range(d):
        acc: dict = {}
        for a, coef in vec.items():
            row = src.rows.get(off + a * d + s)
            if not row:
                continue
            for c, v in row.items():
                acc[c] = acc.get(c, zero) + coef * v
        acc = {c: v for c, v in acc.items() if v}
        if acc:
            rows[s] = acc
    return SMat(d, m, rows)


def _row_slice(m: SMat, lo: int, hi: int, out: dict):
    """Copy rows lo..hi-1 of ``m`` into ``out``, renumbered from 0."""
    for r in range(lo, hi):
        row = m.rows.get(r)
        if row:
            out[r - lo] = row


def _pair(v: dict, x: SMat, u: dict, zero):
    """v^T x u for sparse vectors given as dicts."""
    acc: dict = {}
    for k, vk in v.items():
        row = x.rows.get(k)
        if not row:
            continue
        for c, xv in row.items():
            acc[c] = acc.get(c, zero) + vk * xv
    return sum((val * u[c] for c, val in acc.items() if c in u), zero)


def _complement_hom(e: Element, f: InvolutiveField, star: bool, budget: int) -> ConcreteHom:
    """Hom M_k -> M_m onto the corner (1 - e) M_m (1 - e) (a *-hom in star mode)."""
    m = e.shape[0]
    blk = e.blocks[0]
    if _is_coordinate_projection(blk, f.one):
        coords = [i for i in range(m) if i not in blk.rows]
        return coordinate_hom([m], f, [(0, coords)])
    comp = (Element.identity([m], f) - e).blocks[0]
    cols, rows = _unit_columns(comp, f, star, budget)
    k = len(cols)
    P = SMat(k, m, {j: c for j, c in enumerate(cols) if c}).transpose()
    Q = SMat(k, m, {j: r for j, r in enumerate(rows) if r})
    return ConcreteHom([k], [m], f, [[1]], [P], [Q])


def _vstack_rows(parts, ncols: int) -> SMat:
    rows, off = {}, 0
    for m in parts:
        for r, row in m.rows.items():
            rows[off + r] = row
        off += m.nrows
    return SMat(off, ncols, rows)


# ---------------------------------------------------------------------------
# the inductive step
# ---------------------------------------------------------------------------

@dataclass
class StepTrace:
    theta: Fraction
    star: bool
    p: int
    q: int
    kappa: Fraction
    resolution_in: int
    resolution: int
    psi_mode: str
    f_prime_rank: Fraction
    f_rank: Fraction
    decomposition: list  # dicts: factor, r, value
    plan: WindowPlan
    chunk: int  # rank of e, i.e. resolution / q'
    corner: list
    z_checks: list
    family_distances: list
    audit: AuditLog
    next_stage: Stage
    gamma_matches: list = field(default_factory=list)
    corner_witnesses: list = field(default_factory=list)  # y in M_{p'} per corner sample

    @property
    def p_new(self) -> int:
        return self.plan.p_new

    @property
    def q_new(self) -> int:
        return self.plan.q_new

    def to_json(self) -> dict:
        pl = self.plan
        s = str
        return {
            "star": self.star, "theta": s(self.theta), "p": self.p, "q": self.q,
            "kappa": s(self.kappa), "kappa_meaning": "K*(p) eps" if self.star else "K(p) eps",
            "resolution_in": self.resolution_in, "resolution": self.resolution, "psi": self.psi_mode,
            "N(f')": s(self.f_prime_rank), "N(f)": s(self.f_rank),
            "decomposition": [{k: s(v) if isinstance(v, Fraction) else v for k, v in d.items()}
                              for d in self.decomposition],
            "delta": s(pl.delta), "p_i": pl.p_i, "q_new": pl.q_new, "inv_alpha": s(pl.alpha_inv),
            "lambda": [s(x) for x in pl.lambdas], "eps_i": [s(x) for x in pl.eps_i],
            "p_i_new": pl.p_i_new, "g": pl.g, "p_new": pl.p_new, "rejected_q": pl.rejected,
            "chunk": self.chunk, "kappa_new": s(self.next_stage.kappa),
            "corner": [{k: s(v) for k, v in c.items()} for c in self.corner],
            "z_checks": [{k: s(v) for k, v in c.items()} for c in self.z_checks],
            "family_distances": [s(d) for d in self.family_distances],
            "assertions": self.audit.to_json(),
        }


class _StepCtx:
    """Everything the conditions need once rho' exists."""

    def __init__(self, **kw):
        self.__dict__.update(kw)

    def f_unit(self, i, j, l):
        key = (i, j, l)
        if key not in self._f:
            ut, v = self.Ut[i][j], self.V[i][l]
            self._f[key] = Element([self.m], self.field, [ut.transpose() @ v])
        return self._f[key]


def _corner_witness(cx: _StepCtx, xprime: Element):
    """x = rho(1) x' rho(1), the proof's x~ in A and y in M_{p'}; also x_ab reconstructions."""
    f, p, g = cx.field, cx.p, cx.g
    x = cx.rho_one * xprime * cx.rho_one
    acc: dict = {}
    entries = {}
    recon_ok = True
    if cx.row_owner is None:
        # rows of x_b1 -> indices b, so only pairs (a, b) whose supports meet are formed
        owner: dict = {}
        for b in range(p):
            for r in cx.xb1[b].blocks[0].rows:
                owner.setdefault(r, set()).add(b)
        cx.row_owner = owner
    for a in range(p):
        left = cx.f * cx.x1[a] * xprime
        if left.is_zero():
            continue
        cand = set()
        for row in left.blocks[0].rows.values():
            for col in row:
                cand |= cx.row_owner.get(col, set())
        for b in sorted(cand):
            xab = left * cx.xb1[b] * cx.f
            if xab.is_zero():
                continue
            _accumulate(acc, (cx.psi_col[a] * xab * cx.psi_row[b]).blocks[0])
            recon = Element.zero([cx.m], f)
            for i, (r, pn, base) in enumerate(zip(cx.r, cx.pn, cx.gbase)):
                for j in range(r):
                    vrow = cx.V[i][j].rows.get(0, {})
                    for l in range(r):
                        urow = cx.Ut[i][l].rows.get(0, {})
                        lam = _pair(vrow, xab.blocks[0], urow, f.zero)
                        if not lam:
                            continue
                        recon = recon + cx.f_unit(i, j, l) * lam
                        for u in range(pn):
                            entries[(a * g + base + j * pn + u, b * g + base + l * pn + u)] = lam
            if recon != xab:
                recon_ok = False
    acc = {r: {c: v for c, v in row.items() if v} for r, row in acc.items()}
    xt = Element([cx.m], f, [SMat(cx.m, cx.m, {r: row for r, row in acc.items() if row})])
    y = Element([cx.p_new], f, [SMat.from_entries(cx.p_new, cx.p_new, [(r, c, v) for (r, c), v in entries.items()])])
    return x, xt, y, recon_ok


def _accumulate(acc: dict, m: SMat):
    """acc += m, in place, on a row dict."""
    for r, row in m.rows.items():
        arow = acc.setdefault(r, {})
        for c, v in row.items():
            arow[c] = arow[c] + v if c in arow else v


def halperin_step(ambient: AmbientFactor, stage: Stage, theta, corner_samples=None, z_samples=None,
                  star: bool = False, strict: bool = True, budget: int = 20000) -> StepTrace:
    """One inductive step, with every stated inequality checked exactly.

    ``corner_samples`` are elements x' of A (at the stage resolution); the
    corner condition is checked for x = rho(1) x' rho(1). ``z_samples`` are
    elements of M_p for the comparison of rho with rho' o gamma.
    """
    theta = Fraction(theta)
    f = ambient.field
    log = AuditLog(strict=strict)
    p, q, kappa = stage.p, stage.q, stage.kappa
    gap = Fraction(p, q) - theta
    if star:
        st.require_star_field(f)
        if stage.g is None:
            raise ValueError("the star step needs the projection g")
    m0 = stage.resolution
    N0 = stage.N

    # hypotheses ----------------------------------------------------------
    rho_one = stage.rho.one_image()
    log.check("(a) N(rho(1)) = p/q", N0(rho_one), "==", Fraction(p, q))
    log.check("(a) p/q > theta", Fraction(p, q), ">", theta)
    log.check("(c) K(p) eps < gap / (48 p^2)", kappa, "<", gap / (48 * p * p))
    exact = stage.approximants is None
    if exact:
        units_in = all(stage.A.contains(stage.rho.unit_image(0, a, 0)) and
                       stage.A.contains(stage.rho.unit_image(0, 0, a)) for a in range(p))
        log.check("(b) rho(e_a1), rho(e_1a) lie in A", units_in, "==", True)
    else:
        dmax = max(N0(stage.rho.unit_image(0, i, j) - stage.approximants[i][j])
                   for i in range(p) for j in range(p))
        _scaled_below(log, "(b) max N(rho(e_ij) - x_ij) < eps", p, star, dmax, kappa)
    fam = ambient.family_at(m0, stage.tracked)
    for k, x in enumerate(fam):
        _scaled_below(log, f"(b) N(x_{k+1} - A) < eps", p, star, N0(x - _nearest(stage.A, x)), kappa)
    if star:
        st.Projection(stage.g)
        _scaled_below(log, "(b*) N(rho(e11) - g) < eps", p, star, N0(stage.rho.unit_image(0, 0, 0) - stage.g), kappa)
        G = stage.A.pull(stage.g)
        if max(G.shape) <= 64:
            st.certify_hereditarily_quasi_standard(stage.g, stage.A, N0, gap, subprojections=[stage.g],
                                                   budget=budget)
        elif not all(_is_coordinate_projection(b, f.one) for b in G.blocks):
            raise st.CertificationFailure("1", "g is neither standard nor small enough to certify")

    # psi ------------------------------------------------------------------
    f_prime = stage.rho.unit_image(0, 0, 0)
    if exact and (not star or st.is_subprojection(f_prime, stage.g)):
        psi, psi_mode = stage.rho, "rho"
    else:
        approx = stage.approximants
        if approx is None:
            approx = [[stage.rho.unit_image(0, i, j) for j in range(p)] for i in range(p)]
        eps = kappa / _k(p, star)
        inst = StabilizationInstance(Shape([m0]), f, N0, stage.A, stage.rho, approx, eps, star)
        res = stabilize_star(inst, f=stage.g) if star else stabilize_matrix_units(inst)
        log.extend(res.audit, "stabilize: ")
        psi, psi_mode = res.psi, "stabilized"
    f0 = psi.unit_image(0, 0, 0)
    d_ff = N0(f0 - f_prime)
    log.check("N(f - f') < K(p) eps", d_ff, "<", kappa)
    if star:
        log.check("f = psi(e11) <= g", st.is_subprojection(f0, stage.g), "==", True)

    # decomposition of f over the simple factors of A ------------------------
    F = stage.A.pull(f0)
    factors, cols, rows = [], [], []
    for t, blk in enumerate(F.blocks):
        if blk.is_zero():
            continue
        c, r_ = _unit_columns(blk, f, star, budget)
        factors.append(t)
        cols.append(c)
        rows.append(r_)
    r = [len(c) for c in cols]
    values = [Fraction(stage.A.hom.dims[t][0], m0) for t in factors]
    f_rank = N0(f0)
    log.check("N(f) = sum r_i N(f^(i)_11)", f_rank, "==", sum(ri * v for ri, v in zip(r, values)))
    log.check("|1/q - N(f)| <= N(f - f')", abs(Fraction(1, q) - f_rank), "<=", d_ff)

    plan = plan_window(p, q, theta, kappa, values, r, ambient.divisors, ambient.n)
    plan.audit(log)

    # resolution ------------------------------------------------------------
    m = lcm(m0, plan.q_new) if ambient.lazy else m0
    if m % plan.q_new:
        raise AmbientTooSmall(f"an idempotent of rank 1/{plan.q_new} needs {plan.q_new} | {m}")
    c = m // m0
    work = stage.lifted(m)
    if psi is stage.rho:
        psi = work.rho
    else:
        psi = psi.lift(c)
    A = work.A
    N = work.N
    dchunk = m // plan.q_new
    g, p_new = plan.g, plan.p_new

    # minimal units and the h-system ----------------------------------------
    Ut = [[_frame_rows(A.hom, t, cj, True) for cj in cs] for t, cs in zip(factors, cols)]
    V = [[_frame_rows(A.hom, t, rj, False) for rj in rs] for t, rs in zip(factors, rows)]
    gbase, acc = [], 0
    for ri, pn in zip(r, plan.p_i_new):
        gbase.append(acc)
        acc += ri * pn
    ph_parts, qh_parts = [], []
    for i, (ri, pn) in enumerate(zip(r, plan.p_i_new)):
        for j in range(ri):
            for u in range(pn):
                part = {}
                _row_slice(Ut[i][j], u * dchunk, (u + 1) * dchunk, part)
                ph_parts.append(SMat(dchunk, m, part))
                part = {}
                _row_slice(V[i][j], u * dchunk, (u + 1) * dchunk, part)
                qh_parts.append(SMat(dchunk, m, part))
    PhT = _vstack_rows(ph_parts, m)
    Qh = _vstack_rows(qh_parts, m)
    H = ConcreteHom([g], [m], f, [[dchunk]], [PhT.transpose()], [Qh])
    log.check("h is a system of g x g matrix units", bool(H.verify(star=star)), "==", True)
    e = H.unit_image(0, 0, 0)
    log.check("N(e) = 1/q'", N(e), "==", Fraction(1, plan.q_new))
    cx = _StepCtx(field=f, m=m, Ut=Ut, V=V, _f={})
    f11 = cx.f_unit(0, 0, 0)
    log.check("e <= f^(1)_11", f11 * e == e and e * f11 == e, "==", True)
    for i, (ri, pn) in enumerate(zip(r, plan.p_i_new)):
        if not pn:
            continue
        fi = cx.f_unit(i, 0, 0)
        top = gbase[i]
        hsum = Element.zero([m], f)
        for u in range(pn):
            hsum = hsum + H.unit_image(0, top + u, top + u)
        log.check(f"sum_u h^({i+1},{i+1})_(1,1),(u,u) <= f^({i+1})_11",
                  fi * hsum == hsum and hsum * fi == hsum, "==", True)
        log.check(f"N(sum_u h^({i+1},{i+1})_(1,1),(u,u)) = p'_{i+1}/q'", N(hsum), "==",
                  Fraction(pn, plan.q_new))
        u1, u2 = pn - 1, 0
        ok = True
        for j1 in range(ri):
            for j2 in range(ri):
                lhs = H.unit_image(0, top + j1 * pn + u1, top + j2 * pn + u2)
                rhs = cx.f_unit(i, j1, 0) * H.unit_image(0, top + u1, top + u2) * cx.f_unit(i, 0, j2)
                ok = ok and lhs == rhs
        log.check(f"h^({i+1},{i+1})_(j1,j2),(u1,u2) = f_j1,1 h_(1,1),(u1,u2) f_1,j2", ok, "==", True)

    # rho' -------------------------------------------------------------------
    psi_col = [psi.unit_image(0, a, 0) for a in range(p)]
    psi_row = [psi.unit_image(0, 0, b) for b in range(p)]
    PT = _vstack_rows([PhT @ pc.blocks[0].transpose() for pc in psi_col], m)
    Qn = _vstack_rows([Qh @ pr.blocks[0] for pr in psi_row], m)
    rho_new = ConcreteHom([p_new], [m], f, [[dchunk]], [PT.transpose()], [Qn])
    log.check("rho' is a (star) homomorphism", bool(rho_new.verify(star=star)), "==", True)
    for a, b, g1, g2 in {(0, 0, 0, 0), (p - 1, 0, g - 1, 0), (0, p - 1, 0, g - 1)}:
        lhs = rho_new.unit_image(0, a * g + g1, b * g + g2)
        rhs = psi_col[a] * H.unit_image(0, g1, g2) * psi_row[b]
        log.check(f"rho'(e_{a+1}{b+1} (x) e_({g1+1},{g2+1})) = psi(e_{a+1}1) h psi(e_1{b+1})", lhs == rhs, "==", True)
    rho_new_one = rho_new.one_image()
    log.check("(1) N(rho'(1)) = p'/q'", N(rho_new_one), "==", Fraction(p_new, plan.q_new))

    # (3) corner approximation ----------------------------------------------
    rho_one_m = work.rho.one_image()
    if exact:
        x1 = [work.rho.unit_image(0, 0, a) for a in range(p)]
        xb1 = [work.rho.unit_image(0, b, 0) for b in range(p)]
    else:
        x1 = [work.approximants[0][a] for a in range(p)]
        xb1 = [work.approximants[b][0] for b in range(p)]
    cx.__dict__.update(p=p, g=g, p_new=p_new, rho_one=rho_one_m, f=psi.unit_image(0, 0, 0), x1=x1, xb1=xb1,
                       psi_col=psi_col, psi_row=psi_row, r=r, row_owner=None, pn=plan.p_i_new, gbase=gbase)
    if corner_samples is None:
        corner_samples = [Element.identity([m0], f)]
    shortfall = p * sum(ri * (v - Fraction(pn, plan.q_new)) for ri, v, pn in zip(r, values, plan.p_i_new))
    corner, witnesses = [], []
    for k, xs in enumerate(corner_samples):
        xp = xs.lift(c)
        log.check(f"(3) sample {k+1}: x' lies in A", A.contains(xp), "==", True)
        x, xt, y, recon = _corner_witness(cx, xp)
        log.check(f"(3) sample {k+1}: every x_ab is a combination of the f^(i)_jl", recon, "==", True)
        d1, d2, d3 = N(x - xt), N(xt - rho_new(y)), N(x - rho_new(y))
        log.check(f"(3) sample {k+1}: N(x - x~) < 5 K(p) p^2 eps", d1, "<", 5 * p * p * kappa)
        log.check(f"(3) sample {k+1}: N(x~ - rho'(y)) <= p sum r_i (N(f^(i)_11) - p'_i/q')", d2, "<=", shortfall)
        log.check(f"(3) sample {k+1}: N(x~ - rho'(y)) < K(p) eps p + 7/8 gap", d2, "<", kappa * p + Fraction(7, 8) * gap)
        log.check(f"(3) sample {k+1}: N(x - rho'(y)) < gap", d3, "<", gap)
        corner.append({"x_minus_xt": d1, "xt_minus_rho_y": d2, "x_minus_rho_y": d3})
        witnesses.append(y)

    # (4) rho versus rho' o gamma --------------------------------------------
    if z_samples is None:
        z_samples = default_z_samples(p, f)
    z_checks, gamma_matches = [], []
    for k, z in enumerate(z_samples):
        gz = tensor_stabilize(z, g)
        rz = work.rho(z)
        dz = N(rz - rho_new(gz))
        log.check(f"(4) z sample {k+1}: N(rho(z) - rho'(gamma(z))) < gap", dz, "<", gap)
        z_checks.append({"distance": dz})
        if exact and A.contains(rz):
            _, _, y, _ = _corner_witness(cx, rz)
            same = y == gz
            gamma_matches.append(same)
            log.check(f"(4) z sample {k+1}: the corner witness of rho(z) is gamma(z)", same, "==", True)
    one_dist = N(rho_one_m - rho_new_one)
    drop = Fraction(p, q) - Fraction(p_new, plan.q_new)
    if psi_mode == "rho":
        log.check("(4) N(rho(1) - rho'(1)) = p/q - p'/q'", one_dist, "==", drop)
    else:
        log.check("(4) N(rho(1) - rho'(1)) >= p/q - p'/q'", one_dist, ">=", drop)
    log.check("(4) N(rho(1) - rho'(1)) < gap", one_dist, "<", gap)

    # (5), (6): the next subalgebra and tolerance ----------------------------
    comp = _complement_hom(rho_new_one, f, star, budget)
    A_new = Subalgebra(direct_sum([rho_new, comp]), star=star)
    new_gap = plan.new_gap
    kappa_new = new_gap / (96 * p_new * p_new)
    log.check("(6) K(p') eps' < gap' / (48 p'^2)", kappa_new, "<", new_gap / (48 * p_new * p_new))
    log.check("(5) rho' is the first summand of A' (so rho'(e'_ij) lie in A')",
              A_new.hom.P[0].submatrix(range(m), range(p_new * dchunk)) == rho_new.P[0], "==", True)
    tracked = min(stage.tracked + 1, len(ambient.family))
    fam_d = []
    for k, x in enumerate(ambient.family_at(m, tracked)):
        d = N(x - _nearest(A_new, x))
        fam_d.append(d)
        _scaled_below(log, f"(5) N(x_{k+1} - A') < eps'", p_new, star, d, kappa_new)
    g_new = None
    if star:
        g_new = rho_new.unit_image(0, 0, 0)
        log.check("(5*) N(rho'(e'_11) - g') < eps'", N(rho_new.unit_image(0, 0, 0) - g_new), "<", kappa_new)
        log.check("g' is a standard projection of A'", st.is_standard_projection(g_new, A_new), "==", True)

    nxt = Stage(p_new, plan.q_new, m, rho_new, A_new, kappa_new, tracked, None, g_new)
    decomp = [{"factor": t, "r": ri, "value": v} for t, ri, v in zip(factors, r, values)]
    return StepTrace(theta, star, p, q, kappa, m0, m, psi_mode, N0(f_prime), f_rank, decomp, plan, dchunk,
                     corner, z_checks, fam_d, log, nxt, gamma_matches, witnesses)


def halperin_step_star(ambient: AmbientFactor, stage: Stage, theta, **kw) -> StepTrace:
    """The star variant: projections, *-matrix units and the output projection g'."""
    return halperin_step(ambient, stage, theta, star=True, **kw)


def default_z_samples(p: int, f: InvolutiveField):
    """Identity, three matrix units and one two-term combination in M_p."""
    zs = [Element.identity([p], f), Element.unit([p], f, 0, 0, 0)]
    if p > 1:
        zs += [Element.unit([p], f, 0, 0, p - 1), Element.unit([p], f, 0, p - 1, 0),
               Element.unit([p], f, 0, 0, 1) * 2 + Element.unit([p], f, 0, p - 1, p - 1)]
    return zs


# ---------------------------------------------------------------------------
# the chain
# ---------------------------------------------------------------------------

def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


@dataclass
class ChainState:
    """Stages 0..k of the telescoping chain, their traces and the chain-level checks.

    Stage 0 is the degenerate start p = q = 1. ``cauchy``, ``ranks`` and
    ``surjectivity`` hold the sampled checks; every one is also in ``audit``.
    """

    theta: Fraction
    ambient: AmbientFactor
    stages: list
    traces: list
    audit: AuditLog
    seed: int = 0
    star: bool = False
    cauchy: list = field(default_factory=list)
    ranks: list = field(default_factory=list)
    surjectivity: list = field(default_factory=list)

    @property
    def index(self) -> int:
        return len(self.stages) - 1

    @property
    def p(self):
        return [s.p for s in self.stages]

    @property
    def q(self):
        return [s.q for s in self.stages]

    @property
    def delta(self):
        return [Fraction(s.p, s.q) - self.theta for s in self.stages]

    @property
    def kappa(self):
        return [s.kappa for s in self.stages]

    def gamma(self, j: int, i: int, z: Element) -> Element:
        """gamma_{j,i}: M_{p_i} -> M_{p_j}, z -> z (x) 1."""
        return tensor_stabilize(z, self.stages[j].p // self.stages[i].p)

    def image(self, j: int, i: int, z: Element) -> Element:
        """rho_j(gamma_{j,i}(z)) at the resolution of stage j."""
        return self.stages[j].rho(self.gamma(j, i, z))

    def to_json(self) -> dict:
        s = str
        return {
            "theta": s(self.theta), "star": self.star, "seed": self.seed, "ambient": self.ambient.to_json(),
            "stages": [{"index": k, "p": st_.p, "q": st_.q, "resolution": st_.resolution,
                        "delta": s(d), "kappa": s(st_.kappa)}
                       for k, (st_, d) in enumerate(zip(self.stages, self.delta))],
            "steps": [t.to_json() for t in self.traces],
            "cauchy": [{k: v if isinstance(v, int) else s(v) for k, v in c.items()} for c in self.cauchy],
            "rank_identity": [{k: v if isinstance(v, int) else s(v) for k, v in c.items()} for c in self.ranks],
            "surjectivity": [{k: v if isinstance(v, int) else s(v) for k, v in c.items()}
                             for c in self.surjectivity],
            "assertions": self.audit.to_json(),
        }


def sparse_z_sample(ps, f: InvolutiveField, rng: random.Random, count: int = 10):
    """``count`` pairs (i, z) with z in M_{p_i}: zero and identity of M_{p_0}, then
    sparse elements with a few random entries, cycling through the later stages."""
    out = [(0, Element.zero([ps[0]], f)), (0, Element.identity([ps[0]], f))]
    later = list(range(1, len(ps))) or [0]
    t = 0
    while len(out) < count:
        i = later[t % len(later)]
        p = ps[i]
        t += 1
        acc: dict = {}
        for _ in range(rng.randint(1, 3)):
            key = (rng.randrange(p), rng.randrange(p))
            acc[key] = acc.get(key, f.zero) + f(rng.choice([1, 2, -1, 3]))
        out.append((i, Element([p], f, [SMat.from_entries(p, p, [(r, c, v) for (r, c), v in acc.items()])])))
    return out[:count]


def chain_build(ambient: AmbientFactor, theta, stages: int, z_count: int = 10, seed: int = 0, eta=None,
                star: bool = False, step_z_samples=None, strict: bool = True) -> ChainState:
    """Iterate the inductive step ``stages`` times and verify the chain inequalities.

    Checked for ``z_count`` sampled pairs (i, z), z in M_{p_i}, and all i <= j < h:
    N(rho_h(gamma_{h,i} z) - rho_j(gamma_{j,i} z)) < delta_j + ... + delta_{h-1} < 2^(1-j),
    together with the exact rank identity, delta halving and the surjectivity
    desk check at tolerance ``eta`` (default 6 delta_{k-1}).
    """
    theta = Fraction(theta)
    if stages < 1:
        raise ValueError("at least one stage is needed")
    f = ambient.field
    log = AuditLog(strict=strict)
    stage = initial_stage(ambient, theta, star=star)
    chain = ChainState(theta, ambient, [stage], [], log, seed, star)
    for k in range(stages):
        xs = ambient.family_at(stage.resolution, stage.tracked)
        corner = [_nearest(stage.A, x) for x in xs]
        tr = halperin_step(ambient, stage, theta, corner_samples=corner, z_samples=step_z_samples,
                           star=star, strict=strict)
        log.extend(tr.audit, f"step {k + 1}: ")
        chain.traces.append(tr)
        stage = tr.next_stage
        chain.stages.append(stage)

    delta = chain.delta
    fr = [Fraction(s.p, s.q) for s in chain.stages]
    for i in range(stages):
        log.check(f"p_{i}/q_{i} > p_{i+1}/q_{i+1}", fr[i], ">", fr[i + 1])
        log.check(f"delta_{i+1} < delta_{i}/2", delta[i + 1], "<", delta[i] / 2)
    for i in range(stages + 1):
        log.check(f"delta_{i} > 0", delta[i], ">", 0)
        log.check(f"delta_{i} < 2^-{i}", delta[i], "<", _pow2(-i))
        log.check(f"K(p_{i}) eps_{i} < delta_{i}", chain.stages[i].kappa, "<", delta[i])
    log.check(f"p_1/q_1 < 1", fr[1], "<", 1)

    rng = random.Random(seed)
    res = [s.resolution for s in chain.stages]
    for t, (i, z) in enumerate(sparse_z_sample(chain.p, f, rng, z_count)):
        rz = normalized_rank(z)
        imgs = {}
        prev = None
        for j in range(i, stages + 1):
            imgs[j] = chain.image(j, i, z)
            nj = chain.stages[j].N(imgs[j])
            log.check(f"rank identity: N(rho_{j}(gamma_{j},{i}(z_{t}))) = p_{j}/q_{j} N(z_{t})", nj, "==", fr[j] * rz)
            dev = abs(nj - theta * rz)
            log.check(f"trend: |N(rho_{j}(gamma_{j},{i}(z_{t}))) - theta N(z_{t})| <= tail + delta_{j}",
                      dev, "<=", sum(delta[j:]) + delta[j])
            if prev is not None:
                log.check(f"trend: deviation at stage {j} does not exceed stage {j - 1}", dev, "<=", prev)
            prev = dev
            chain.ranks.append({"i": i, "j": j, "z": t, "N_z": rz, "N_image": nj})
        for j in range(i, stages + 1):
            for h in range(j + 1, stages + 1):
                d = chain.stages[h].N(imgs[h] - imgs[j].lift(res[h] // res[j]))
                bound = sum(delta[j:h])
                log.check(f"Cauchy: N(rho_{h}(gamma_{h},{i} z_{t}) - rho_{j}(gamma_{j},{i} z_{t})) "
                          f"< delta_{j} + ... + delta_{h - 1}", d, "<", bound)
                log.check(f"Cauchy: delta_{j} + ... + delta_{h - 1} < 2^({1 - j})", bound, "<", _pow2(1 - j))
                if z.is_zero():
                    log.check(f"Cauchy: z = 0 gives distance 0 ({i},{j},{h})", d, "==", 0)
                chain.cauchy.append({"i": i, "j": j, "h": h, "z": t, "distance": d, "bound": bound})
        del imgs
    surjectivity_check(chain, eta)
    return chain


def surjectivity_check(chain: ChainState, eta=None):
    """Finite form of the surjectivity argument, for every tracked family member.

    With e = rho_k(1) standing in for the limit idempotent, the earliest
    stage i meeting the tolerance budget is used; its corner witness z gives
    w = gamma_{k,i+1}(z) with N(exe - rho_k(w)) < eta.
    """
    k = chain.index
    if k < 1:
        raise StageBudgetExhausted("the desk check needs at least one step")
    delta = chain.delta
    eta = 6 * delta[k - 1] if eta is None else Fraction(eta)
    log = chain.audit
    top = chain.stages[k]
    N = top.N
    e = top.rho.one_image()
    ones = {}
    i = None
    for c in range(k):
        s = chain.stages[c]
        one_c = s.rho.one_image().lift(top.resolution // s.resolution)
        if (s.kappa < eta / 10 and delta[c] < eta / 5 and N(e - one_c) < eta / 5):
            i, ones[c] = c, one_c
            break
    if i is None:
        raise StageBudgetExhausted(f"no stage below {k} meets the budget for eta = {eta}")
    s, nxt, tr = chain.stages[i], chain.stages[i + 1], chain.traces[i]
    c_top = top.resolution // s.resolution
    log.check(f"surjectivity: eps_{i} <= K(p_{i}) eps_{i} < eta/10", s.kappa, "<", eta / 10)
    log.check(f"surjectivity: delta_{i} < eta/5", delta[i], "<", eta / 5)
    log.check(f"surjectivity: N(e - rho_{i}(1)) < eta/5", N(e - ones[i]), "<", eta / 5)
    one_i = s.rho.one_image()
    for t, x in enumerate(chain.ambient.family_at(s.resolution, min(s.tracked, len(tr.corner_witnesses)))):
        y = _nearest(s.A, x)
        dxy = s.N(x - y)
        log.check(f"surjectivity x_{t+1}: N(x - y) < eta/5 with y in A_{i}", dxy, "<", eta / 5)
        corner = one_i * y * one_i
        xt = x.lift(c_top)
        exe = e * xt * e
        d1 = N(exe - corner.lift(c_top))
        log.check(f"surjectivity x_{t+1}: N(exe - rho_{i}(1) y rho_{i}(1)) < 3/5 eta", d1, "<", Fraction(3, 5) * eta)
        z = tr.corner_witnesses[t]
        rz = nxt.rho(z)
        d2 = nxt.N(corner.lift(nxt.resolution // s.resolution) - rz)
        log.check(f"surjectivity x_{t+1}: N(rho_{i}(1) y rho_{i}(1) - rho_{i+1}(z)) < delta_{i}", d2, "<", delta[i])
        w = chain.gamma(k, i + 1, z)
        rw = top.rho(w)
        d3 = N(rw - rz.lift(top.resolution // nxt.resolution))
        log.check(f"surjectivity x_{t+1}: N(rho_{k}(w) - rho_{i+1}(z)) <= delta_{i}", d3, "<=", delta[i])
        d4 = N(exe - rw)
        log.check(f"surjectivity x_{t+1}: N(exe - rho_{k}(w)) < eta", d4, "<", eta)
        chain.surjectivity.append({"x": t, "stage": i, "eta": eta, "x_minus_y": dxy, "exe_minus_corner": d1,
                                   "corner_minus_rho_z": d2, "tail": d3, "exe_minus_rho_w": d4,
                                   "w_size": w.shape[0]})
    return chain.surjectivity


def theta_half_doubling_check(chain: ChainState, strict: bool = True) -> dict:
    """At each stage, split off e <= rho(1) with N(e) = 1/2 and exhibit e ~ 1 - e.

    rho(1) itself has rank p/q > 1/2 for every stage after the first, so it
    cannot be equivalent to its complement; the check works with a rank-1/2
    subidempotent e of rho(1), which is within delta of it, and verifies the
    2 x 2 system {e, x, y, 1 - e} that gives the doubling M = M_2(eMe).
    """
    if chain.theta != Fraction(1, 2):
        raise ValueError(f"the doubling check needs theta = 1/2, got {chain.theta}")
    f = chain.ambient.field
    log = AuditLog(strict=strict)
    out = []
    for k, s in enumerate(chain.stages):
        m = s.resolution if s.resolution % 2 == 0 else 2 * s.resolution
        e0 = s.rho.one_image().lift(m // s.resolution)
        N = PseudoRank([m], [1])
        one = Element.identity([m], f)
        C, R = sparse_rank_factorization(e0.blocks[0], f)
        h = m // 2
        Ch = C.submatrix(range(m), range(h))
        Rh = R.submatrix(range(h), range(m))
        e = Element([m], f, [Ch @ Rh])
        ce = one - e
        C2, R2 = sparse_rank_factorization(ce.blocks[0], f)
        x = Element([m], f, [Ch @ R2])
        y = Element([m], f, [C2 @ Rh])
        re, rc = e.blocks[0].rank(f), ce.blocks[0].rank(f)
        tag = f"stage {k}: "
        log.check(tag + "N(rho(1)) + N(1 - rho(1)) = 1", N(e0) + N(one - e0), "==", 1)
        log.check(tag + "N(rho(1)) = p/q", N(e0), "==", Fraction(s.p, s.q))
        log.check(tag + "e is idempotent", e * e == e, "==", True)
        log.check(tag + "e <= rho(1)", e0 * e == e and e * e0 == e, "==", True)
        log.check(tag + "N(e) = theta", N(e), "==", chain.theta)
        log.check(tag + "N(e) + N(1 - e) = 1", N(e) + N(ce), "==", 1)
        log.check(tag + "rank(e) = rank(1 - e)", re, "==", rc)
        log.check(tag + "N(rho(1) - e) = delta", N(e0 - e), "==", Fraction(s.p, s.q) - chain.theta)
        log.check(tag + "x y = e", x * y == e, "==", True)
        log.check(tag + "y x = 1 - e", y * x == ce, "==", True)
        units = verify_matrix_units([[e, x], [y, ce]])
        log.check(tag + "{e, x, y, 1 - e} is a system of 2 x 2 matrix units", bool(units), "==", True)
        log.check(tag + "e + (1 - e) = 1", e + ce == one, "==", True)
        out.append({"stage": k, "p": s.p, "q": s.q, "resolution": m, "rank_rho_one": N(e0) * m,
                    "rank_e": re, "rank_complement": rc, "N_e": N(e), "delta": Fraction(s.p, s.q) - chain.theta})
    return {"theta": str(chain.theta), "stages": [{k: v if isinstance(v, int) else str(v) for k, v in d.items()}
                                                  for d in out],
            "assertions": log.to_json(), "ok": log.ok}
