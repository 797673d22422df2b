"""The *-regular layer: projections, relative inverses, perturbation bounds,
*-equivalence over Q(i), exhaustion of equivalent projections and
hereditary quasi-standardness certificates."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd

from . import linalg as la
from .audit import AuditLog
from .linalg import SMat
from .matalg import Element, PseudoRank, Subalgebra, Verdict, one_like
from .scalar import FieldMismatch, InvolutiveField, involute


def require_star_field(f: InvolutiveField):
    if not f.positive_definite:
        raise FieldMismatch(f"{f.name} has no positive definite involution")


def adjoint(x: Element) -> Element:
    return x.adjoint()


def _ctrans(m, f):
    return la.conj_transpose(m, f)


class Projection:
    """Self-adjoint idempotent, validated on construction."""

    __slots__ = ("e",)

    def __init__(self, e: Element):
        require_star_field(e.field)
        if e * e != e or e.adjoint() != e:
            raise ValueError("not a projection")
        self.e = e

    def __repr__(self):
        return f"Projection({self.e!r})"


@dataclass
class PartialIsometryWitness:
    w: Element
    source: Element  # w* w
    target: Element  # w w*

    def check(self) -> bool:
        return self.w * self.w.adjoint() == self.target and self.w.adjoint() * self.w == self.source


def _as_elem(p):
    return p.e if isinstance(p, Projection) else p


# ---------------------------------------------------------------------------
# lp / rp / relative inverse, one component at a time
# ---------------------------------------------------------------------------

def _blockwise(x: Element, dense_fn, transpose_out: bool):
    f = x.field
    require_star_field(f)
    out = []
    for b in x.blocks:
        rows: dict = {}
        for rs, cs in b.components():
            sub = b.submatrix(rs, cs).to_dense(f.zero)
            y = dense_fn(sub, f)
            ri, ci = (cs, rs) if transpose_out else (rs, rs)
            for a, r in enumerate(ri):
                for c, col in enumerate(ci):
                    if y[a][c]:
                        rows.setdefault(r, {})[col] = y[a][c]
        n = b.nrows
        out.append(SMat(n, n, rows))
    return Element(x.shape, f, out)


def _dense_lp(m, f):
    c, _, _ = la.rank_factorization(m, f)
    ch = _ctrans(c, f)
    return la.matmul(la.matmul(c, la.inverse(la.matmul(ch, c, f), f), f), ch, f)


def _dense_rel_inverse(m, f):
    c, r, _ = la.rank_factorization(m, f)
    ch, rh = _ctrans(c, f), _ctrans(r, f)
    rr = la.inverse(la.matmul(r, rh, f), f)
    cc = la.inverse(la.matmul(ch, c, f), f)
    return la.matmul(la.matmul(rh, rr, f), la.matmul(cc, ch, f), f)


def lp(x: Element) -> Element:
    """Projection onto the column space of x."""
    return _blockwise(x, _dense_lp, transpose_out=False)


def rp(x: Element) -> Element:
    return lp(x.adjoint())


def rel_inverse(x: Element) -> Element:
    """Unique y with x y = lp(x), y x = rp(x), y x y = y."""
    return _blockwise(x, _dense_rel_inverse, transpose_out=True)


def perturbation_ratios(r: Element, s: Element, N: PseudoRank, strict: bool = True) -> dict:
    """Exact ratios for the isometry and the 3/4/4 perturbation bounds."""
    require_star_field(r.field)
    d = N(r - s)
    if d == 0:
        raise ValueError("r and s must differ")
    log = AuditLog(strict=strict)
    log.check("N(r*) = N(r)", N(r.adjoint()), "==", N(r))
    log.check("N(s*) = N(s)", N(s.adjoint()), "==", N(s))
    ri = N(rel_inverse(r) - rel_inverse(s))
    lpd = N(lp(r) - lp(s))
    rpd = N(rp(r) - rp(s))
    log.check("relative inverse", ri, "<=", 3 * d)
    log.check("left projection", lpd, "<=", 4 * d)
    log.check("right projection", rpd, "<=", 4 * d)
    return {"distance": d, "rel_inverse_ratio": ri / d, "lp_ratio": lpd / d, "rp_ratio": rpd / d, "audit": log}


def is_subprojection(a: Element, b: Element) -> bool:
    """a <= b for projections."""
    return b * a == a and a * b == a


def shrink_to_star_equiv(e1, e2, f1, f2, w, N: PseudoRank, eps):
    """Subprojections e1' <= e1, e2' <= e2 that are *-equivalent, each 5 eps close.

    ``w`` witnesses f1 ~* f2 (w w* = f1, w* w = f2). Returns (e1', e2', w'').
    """
    e1, e2, f1, f2 = (_as_elem(z) for z in (e1, e2, f1, f2))
    w = w.w if isinstance(w, PartialIsometryWitness) else w
    for z in (e1, e2, f1, f2):
        Projection(z)
    wa = w.adjoint()
    if w * wa != f1 or wa * w != f2:
        raise ValueError("w does not witness f1 ~* f2")
    eps = Fraction(eps)
    if not (N(e1 - f1) <= eps and N(e2 - f2) <= eps):
        raise ValueError("need N(e_i - f_i) <= eps")
    a = e1 - e1 * w * wa * e1
    p1 = lp(a)
    p1c = e1 - p1
    w1 = p1c * w
    b = e2 - e2 * w1.adjoint() * w1 * e2
    e2c = e2 - lp(b)
    w2 = w1 * e2c
    e1c = w2 * w2.adjoint()
    log = AuditLog()
    log.check("e1' <= e1", is_subprojection(e1c, e1), "==", True)
    log.check("e2' <= e2", is_subprojection(e2c, e2), "==", True)
    log.check("w'' w''* = e1'", w2 * w2.adjoint() == e1c, "==", True)
    log.check("w''* w'' = e2'", w2.adjoint() * w2 == e2c, "==", True)
    log.check("N(e1 - e1')", N(e1 - e1c), "<=", 5 * eps)
    log.check("N(e2 - e2')", N(e2 - e2c), "<=", 3 * eps)
    return e1c, e2c, PartialIsometryWitness(w2, e2c, e1c), log


# ---------------------------------------------------------------------------
# hermitian forms over Q(i)
# ---------------------------------------------------------------------------

class FactorizationBudgetExceeded(RuntimeError):
    pass


FACTOR_BUDGET_BITS = 160


def _factor(n: int) -> dict:
    from sympy import factorint

    if n.bit_length() > FACTOR_BUDGET_BITS:
        raise FactorizationBudgetExceeded(f"{n.bit_length()}-bit integer exceeds the factoring budget")
    return {int(p): int(e) for p, e in factorint(n).items()}


def norm_class(r: Fraction) -> int:
    """Representative of r in Q*_{>0} modulo norms from Q(i): the product of the
    primes = 3 (mod 4) occurring to an odd power."""
    r = Fraction(r)
    if r <= 0:
        raise ValueError("norm classes are defined for positive rationals")
    rep = 1
    for p, e in _factor(r.numerator * r.denominator).items():
        if p % 4 == 3 and e % 2:
            rep *= p
    return rep


def two_squares(n: int):
    """(a, b) with a^2 + b^2 = n, or None."""
    from sympy.solvers.diophantine.diophantine import cornacchia

    if n < 0:
        return None
    if n == 0:
        return (0, 0)
    re, im = 1, 0
    for p, e in _factor(n).items():
        if p % 4 == 3:
            if e % 2:
                return None
            re, im = re * p ** (e // 2), im * p ** (e // 2)
            continue
        a, b = min(cornacchia(1, 1, p)) if p != 2 else (1, 1)
        for _ in range(e):
            re, im = re * a - im * b, re * b + im * a
    return (abs(re), abs(im))


def gaussian_with_norm(r: Fraction):
    """c in Q(i) with c conj(c) = r, or None when r is not a norm."""
    from .scalar import GaussQ

    r = Fraction(r)
    if r == 0:
        return GaussQ(0)
    sq = two_squares(r.numerator * r.denominator)
    if sq is None:
        return None
    return GaussQ(Fraction(sq[0], r.denominator), Fraction(sq[1], r.denominator))


def _herm(u, v, f):
    """u* v for column vectors."""
    s = f.zero
    for a, b in zip(u, v):
        s = s + involute(a, f) * b
    return s


def _real(x) -> Fraction:
    return x.re if hasattr(x, "re") else Fraction(x)


def gram_schmidt(vectors, f):
    """Orthogonal vectors spanning the same flag, and their hermitian norms."""
    out, norms = [], []
    for v in vectors:
        w = list(v)
        for u, nu in zip(out, norms):
            c = _herm(u, w, f) / nu
            w = [a - c * b for a, b in zip(w, u)]
        out.append(w)
        norms.append(_real(_herm(w, w, f)))
    return out, norms


def range_basis(p: Element):
    """Pivot columns of a single-block element, as column vectors."""
    if len(p.shape) != 1:
        raise ValueError("single-block element required")
    m = p.blocks[0].to_dense(p.field.zero)
    c, _, _ = la.rank_factorization(m, p.field)
    return [list(col) for col in zip(*c)] if c and c[0] else []


@dataclass(frozen=True)
class HermitianClassInvariant:
    rank: int
    discriminant: int

    def to_json(self):
        return {"rank": self.rank, "discriminant": self.discriminant}


def hermitian_invariant(p: Element) -> HermitianClassInvariant:
    basis = range_basis(p)
    if not basis:
        return HermitianClassInvariant(0, 1)
    _, norms = gram_schmidt(basis, p.field)
    det = Fraction(1)
    for nrm in norms:
        det *= nrm
    return HermitianClassInvariant(len(basis), norm_class(det))


class SearchBudgetExceeded(RuntimeError):
    pass


def _sum_two_squares_mod(c: int, p: int):
    """(a, b) with a^2 + b^2 = c (mod p) for an odd prime p."""
    from sympy.ntheory import sqrt_mod

    c %= p
    for a in range(p):
        t = (c - a * a) % p
        r = sqrt_mod(t, p)
        if r is not None:
            return a, int(r)
    raise ArithmeticError(f"{c} is not a sum of two squares mod {p}")


def _represent_norm(a: int, b: int, budget: int):
    """Gaussian integers x, y with a N(x) + b N(y) a nonzero norm.

    ``a`` and ``b`` are squarefree. Every value of the form is a multiple of
    g = gcd(a, b), so the cofactor must have class g; the congruences modulo
    the primes of g are solved first and then lifted by a bounded search.
    """
    from sympy.ntheory.modular import crt

    from .scalar import GaussQ

    g = gcd(a, b)
    a1, b1 = a // g, b // g
    primes = list(_factor(g)) if g > 1 else []
    if primes:
        res = [_sum_two_squares_mod(-b1 * pow(a1, -1, q), q) for q in primes]
        r1 = int(crt(primes, [r[0] for r in res])[0])
        r2 = int(crt(primes, [r[1] for r in res])[0])
    else:
        r1 = r2 = 0
    tried = 0
    radius = 0
    while tried < budget:
        for k1 in range(-radius, radius + 1):
            for k2 in range(-radius, radius + 1):
                if max(abs(k1), abs(k2)) != radius:
                    continue
                tried += 1
                x = GaussQ(r1 + g * k1, r2 + g * k2)
                m1 = a1 * x.norm() + b1
                if m1 and norm_class(m1) == g:
                    return x, GaussQ(1)
        radius += 1
    return None


def _rescale_to_class(v, nv: Fraction, f):
    """Scale v so that its hermitian norm becomes its squarefree class representative."""
    cls = norm_class(nv)
    s = gaussian_with_norm(nv / cls)
    return [a / s for a in v], Fraction(cls)


def normalized_basis(basis, f, budget: int = 20000):
    """Orthogonal basis of the same span with hermitian norms (1, ..., 1, d)."""
    vecs, norms = gram_schmidt(basis, f)
    if len(vecs) <= 1:
        return vecs, norms
    out = []
    cur, ncur = _rescale_to_class(vecs[0], norms[0], f)
    for v, nv in zip(vecs[1:], norms[1:]):
        v, nv = _rescale_to_class(v, nv, f)
        found = _represent_norm(int(ncur), int(nv), budget)
        if found is None:
            raise SearchBudgetExceeded(f"no norm represented by <{ncur}, {nv}> within {budget} trials")
        x, y = found
        m = ncur * x.norm() + nv * y.norm()
        c = gaussian_with_norm(m)
        w1 = [(x * a + y * b) / c for a, b in zip(cur, v)]
        cx, cy = involute(x, f), involute(y, f)
        w2 = [nv * cy * a - ncur * cx * b for a, b in zip(cur, v)]
        out.append(w1)
        # norm of w2 is A B m; its class is A B / g^2 and g c rescales onto it
        g = gcd(int(ncur), int(nv))
        cur = [z / (g * c) for z in w2]
        ncur = ncur * nv / (g * g)
    out.append(cur)
    return out, [Fraction(1)] * (len(out) - 1) + [ncur]


@dataclass
class StarEquivalenceVerdict:
    equivalent: bool
    witness: PartialIsometryWitness | None
    invariants: tuple

    def __bool__(self):
        return self.equivalent


def _outer_sum(us, vs, cs, n, f):
    m = [[f.zero] * n for _ in range(n)]
    for u, v, c in zip(us, vs, cs):
        for i in range(n):
            if not u[i]:
                continue
            for j in range(n):
                if v[j]:
                    m[i][j] = m[i][j] + u[i] * involute(v[j], f) / c
    return m


def decide_star_equivalence(p, q, budget: int = 20000) -> StarEquivalenceVerdict:
    """Decide p ~* q for projections in a single block over Q(i)."""
    p, q = _as_elem(p), _as_elem(q)
    f = p.field
    if f.kind != "qi":
        raise FieldMismatch("the decision procedure needs Q(i) with conjugation")
    Projection(p), Projection(q)
    ip, iq = hermitian_invariant(p), hermitian_invariant(q)
    if ip != iq:
        return StarEquivalenceVerdict(False, None, (ip, iq))
    n = p.shape[0]
    if ip.rank == 0:
        w = Element.zero(p.shape, f)
        return StarEquivalenceVerdict(True, PartialIsometryWitness(w, q, p), (ip, iq))
    us, nus = normalized_basis(range_basis(p), f, budget)
    vs, nvs = normalized_basis(range_basis(q), f, budget)
    cs = []
    for nu, nv in zip(nus, nvs):
        c = gaussian_with_norm(nu * nv)
        if c is None:  # excluded by the invariant comparison
            raise AssertionError("norm equation unsolvable despite equal classes")
        cs.append(c)
    w = Element.from_dense(f, [_outer_sum(us, vs, cs, n, f)])
    wit = PartialIsometryWitness(w, q, p)
    if not wit.check():
        raise AssertionError("constructed witness fails w w* = p, w* w = q")
    return StarEquivalenceVerdict(True, wit, (ip, iq))


def verify_star_witness(p, q, w) -> bool:
    """w w* = p and w* w = q, over any positive definite field."""
    return PartialIsometryWitness(_as_elem(w), _as_elem(q), _as_elem(p)).check()


def plain_equivalence_witness(p: Element, q: Element):
    """(x, y) with x y = p and y x = q, for idempotents of equal block ranks."""
    f = p.field
    xs, ys = [], []
    for bp, bq in zip(p.blocks, q.blocks):
        dp, dq = bp.to_dense(f.zero), bq.to_dense(f.zero)
        cp, rp_, _ = la.rank_factorization(dp, f)
        cq, rq, _ = la.rank_factorization(dq, f)
        if len(rp_) != len(rq):
            return None
        if not rp_:
            xs.append(SMat(bp.nrows, bp.ncols))
            ys.append(SMat(bp.nrows, bp.ncols))
            continue
        xs.append(SMat.from_dense(la.matmul(cp, rq, f)))
        ys.append(SMat.from_dense(la.matmul(cq, rp_, f)))
    x, y = Element(p.shape, f, xs), Element(p.shape, f, ys)
    if x * y != p or y * x != q:
        return None
    return x, y


def projection_onto(v, f: InvolutiveField) -> Element:
    """The rank-one projection v v* / (v* v)."""
    require_star_field(f)
    v = [f(x) for x in v]
    if not any(v):
        raise ValueError("zero vector")
    return _rank1_projection(v, f, len(v))


def gaussian_height_family(height: int, f: InvolutiveField):
    """Rank-one projections of M_2(Q(i)) onto (x, y), x, y Gaussian integers of height <= ``height``.

    Vectors giving the same projection are listed once (first in scan order).
    """
    seen, out = set(), []
    rng = range(-height, height + 1)
    for a in rng:
        for b in rng:
            for c in rng:
                for d in rng:
                    v = (f(a, b), f(c, d))
                    if not (a or b or c or d):
                        continue
                    P = projection_onto(v, f)
                    key = tuple(str(x) for row in P.to_dense()[0] for x in row)
                    if key in seen:
                        continue
                    seen.add(key)
                    out.append((v, P))
    return out


def _gauss_divmod_round(a, b):
    """Nearest Gaussian-integer quotient of a by b, for pairs of ints."""
    (ar, ai), (br, bi) = a, b
    nb = br * br + bi * bi
    nr, ni = ar * br + ai * bi, ai * br - ar * bi
    return (2 * nr + nb) // (2 * nb), (2 * ni + nb) // (2 * nb)


def _gauss_gcd(a, b):
    while b != (0, 0):
        qr, qi = _gauss_divmod_round(a, b)
        r = (a[0] - (qr * b[0] - qi * b[1]), a[1] - (qr * b[1] + qi * b[0]))
        a, b = b, r
    return a


def primitive_gaussian(u, f: InvolutiveField):
    """A Gaussian-integer multiple of ``u`` whose entries have no common
    non-unit factor in Z[i]; it spans the same line and has least norm."""
    parts = [(int(c.numerator), int(c.denominator)) for x in u for c in (x.re, x.im)]
    den = 1
    for _, d in parts:
        den = den * d // gcd(den, d)
    flat = [a * (den // d) for a, d in parts]
    ints = list(zip(flat[::2], flat[1::2]))
    g = (0, 0)
    for z in ints:
        if z != (0, 0):
            g = _gauss_gcd(g, z) if g != (0, 0) else z
    if g == (0, 0):
        return list(u)
    ng = g[0] * g[0] + g[1] * g[1]
    return [f(Fraction(zr * g[0] + zi * g[1], ng), Fraction(zi * g[0] - zr * g[1], ng)) for zr, zi in ints]


def bounded_witness_search(p: Element, q: Element, coeff: int, max_den: int):
    """Brute-force w with w w* = p, w* w = q for rank-one projections in one block.

    Any such w equals c v t* where v, t span the ranges of p, q (taken as
    primitive Gaussian-integer vectors), so the search runs over
    c = (a + b i)/d with |a|, |b| <= coeff and 1 <= d <= max_den.
    Returns the first witness found or None.
    """
    f = p.field
    bp, bq = range_basis(p), range_basis(q)
    if len(bp) != 1 or len(bq) != 1:
        raise ValueError("rank-one projections expected")
    v, t = primitive_gaussian(bp[0], f), primitive_gaussian(bq[0], f)
    n = p.shape[0]
    target = _real(_herm(v, v, f)) * _real(_herm(t, t, f))
    for d in range(1, max_den + 1):
        for a in range(-coeff, coeff + 1):
            for b in range(-coeff, coeff + 1):
                if Fraction(a * a + b * b, d * d) * target != 1:
                    continue
                c = f(Fraction(a, d), Fraction(b, d))
                w = Element.from_dense(f, [[[c * v[i] * involute(t[j], f) for j in range(n)] for i in range(n)]])
                if verify_star_witness(p, q, w):
                    return w
    return None


# ---------------------------------------------------------------------------
# exhaustion of equivalent projections by *-equivalent pieces
# ---------------------------------------------------------------------------

class OracleFailure(RuntimeError):
    def __init__(self, stage: int, reason: str):
        super().__init__(f"stage {stage}: {reason}")
        self.stage = stage
        self.reason = reason


@dataclass
class ExhaustionStage:
    stage: int
    p_piece: Element
    q_piece: Element
    w_piece: Element
    residual_p: Fraction
    residual_q: Fraction
    norm_w: Fraction


@dataclass
class ExhaustionTranscript:
    stages: list
    terminated: bool
    w_sum: Element
    audit: AuditLog

    def to_json(self):
        return {
            "terminated": self.terminated,
            "stages": [{"stage": s.stage, "residual_p": str(s.residual_p), "residual_q": str(s.residual_q),
                        "norm_w": str(s.norm_w)} for s in self.stages],
            "assertions": self.audit.to_json(),
        }


def _rank1_projection(u, f, n):
    nu = _real(_herm(u, u, f))
    return Element.from_dense(f, [[[u[i] * involute(u[j], f) / nu for j in range(n)] for i in range(n)]])


def identity_oracle(p_res: Element, q_res: Element, bound: Fraction):
    """Accepts only p' = q', returning the pair itself."""
    if p_res != q_res:
        raise ValueError("residuals differ")
    return p_res, q_res, p_res


def star_decision_oracle(budget: int = 20000):
    """Oracle backed by the Q(i) decision procedure.

    Returns the residual pair when it is *-equivalent, otherwise a pair of
    corank-one subprojections that is, otherwise fails.
    """

    def oracle(p_res: Element, q_res: Element, bound: Fraction):
        d = decide_star_equivalence(p_res, q_res, budget)
        if d:
            return p_res, q_res, d.witness.w
        f, n = p_res.field, p_res.shape[0]
        us, _ = gram_schmidt(range_basis(p_res), f)
        vs, _ = gram_schmidt(range_basis(q_res), f)
        for u in us:
            pp = p_res - _rank1_projection(u, f, n)
            for v in vs:
                qq = q_res - _rank1_projection(v, f, n)
                d = decide_star_equivalence(pp, qq, budget)
                if d:
                    return pp, qq, d.witness.w
        raise ValueError("no *-equivalent pair of corank-one subprojections; "
                         f"classes {hermitian_invariant(p_res).discriminant} vs {hermitian_invariant(q_res).discriminant}")

    return oracle


def lp_rp_exhaustion(p, q, oracle, stages: int, N: PseudoRank | None = None) -> ExhaustionTranscript:
    """Exhaust equivalent projections p ~ q by orthogonal *-equivalent pieces.

    At stage n the oracle must leave residuals below 2^-n; the transcript
    records every piece and checks the partial-isometry tail bounds.
    """
    p, q = _as_elem(p), _as_elem(q)
    Projection(p), Projection(q)
    if N is None:
        N = PseudoRank(p.shape)
    if plain_equivalence_witness(p, q) is None:
        raise ValueError("p and q are not equivalent")
    log = AuditLog(strict=False)
    sum_p = Element.zero(p.shape, p.field)
    sum_q = Element.zero(p.shape, p.field)
    w_sum = Element.zero(p.shape, p.field)
    records = []
    terminated = False
    for n in range(1, stages + 1):
        p_res, q_res = p - sum_p, q - sum_q
        if p_res.is_zero() and q_res.is_zero():
            terminated = True
            break
        bound = Fraction(1, 2 ** n)
        try:
            pn, qn, wn = oracle(p_res, q_res, bound)
        except (ValueError, RuntimeError, ArithmeticError) as exc:
            raise OracleFailure(n, str(exc)) from exc
        pn, qn = _as_elem(pn), _as_elem(qn)
        wn = wn.w if isinstance(wn, PartialIsometryWitness) else wn
        if not (is_subprojection(pn, p_res) and is_subprojection(qn, q_res)):
            raise OracleFailure(n, "oracle pieces are not subprojections of the residuals")
        if not verify_star_witness(pn, qn, wn):
            raise OracleFailure(n, "oracle witness fails w w* = p_n, w* w = q_n")
        rp_n, rq_n = N(p_res - pn), N(q_res - qn)
        ok_p = log.check(f"stage {n}: N(p - sum p_i)", rp_n, "<", bound)
        ok_q = log.check(f"stage {n}: N(q - sum q_i)", rq_n, "<", bound)
        nw, npn, prev = N(wn), N(pn), N(p_res)
        log.check(f"stage {n}: N(w_n) <= N(p_n)", nw, "<=", npn)
        log.check(f"stage {n}: N(p_n) <= previous residual", npn, "<=", prev)
        if n >= 2:
            log.check(f"stage {n}: N(w_n)", nw, "<", Fraction(2, 2 ** n))
        if not (ok_p and ok_q):
            raise OracleFailure(n, f"residuals {rp_n}, {rq_n} not below {bound}")
        sum_p, sum_q, w_sum = sum_p + pn, sum_q + qn, w_sum + wn
        records.append(ExhaustionStage(n, pn, qn, wn, rp_n, rq_n, nw))
    else:
        terminated = (p - sum_p).is_zero() and (q - sum_q).is_zero()
    if terminated:
        log.check("w w* = p", w_sum * w_sum.adjoint() == p, "==", True)
        log.check("w* w = q", w_sum.adjoint() * w_sum == q, "==", True)
    return ExhaustionTranscript(records, terminated, w_sum, log)


# ---------------------------------------------------------------------------
# standard and hereditarily quasi-standard projections
# ---------------------------------------------------------------------------

class CertificationFailure(RuntimeError):
    def __init__(self, clause: str, reason: str):
        super().__init__(f"clause ({clause}): {reason}")
        self.clause = clause
        self.reason = reason


def is_standard_projection(p: Element, A: Subalgebra) -> bool:
    """Diagonal 0/1 image in every simple factor of A."""
    P = A.pull(p)
    one, zero = p.field.one, p.field.zero
    for blk in P.blocks:
        for r, row in blk.rows.items():
            if set(row) != {r} or row[r] != one:
                return False
    return True


def _diagonal_projection(n: int, rank: int, f):
    return Element([n], f, [SMat.diagonal(n, range(rank), f.one)])


def _orthonormal_over_q(basis, f):
    """Orthonormal basis over Q when every Gram-Schmidt norm is a rational square."""
    from math import isqrt

    vecs, norms = gram_schmidt(basis, f)
    out = []
    for v, nv in zip(vecs, norms):
        a, b = nv.numerator, nv.denominator
        ra, rb = isqrt(a), isqrt(b)
        if ra * ra != a or rb * rb != b:
            return None
        out.append([x / Fraction(ra, rb) for x in v])
    return out


def _standard_witness(P: Element, budget: int):
    """w with w w* = P and w* w = diagonal projection of equal rank, or a reason string."""
    f, n = P.field, P.shape[0]
    basis = range_basis(P)
    k = len(basis)
    D = _diagonal_projection(n, k, f)
    if f.kind == "qi":
        d = decide_star_equivalence(P, D, budget)
        if not d:
            return None, f"range form has discriminant class {d.invariants[0].discriminant}, not 1"
        return d.witness.w, None
    ons = _orthonormal_over_q(basis, f)
    if ons is None:
        return None, "no rational orthonormal basis of the range (witness-only over Q)"
    es = [[f.one if i == j else f.zero for i in range(n)] for j in range(k)]
    return Element.from_dense(f, [_outer_sum(ons, es, [f.one] * k, n, f)]), None


@dataclass
class QuasiStandardCertificate:
    p: Element
    witness: Element
    standard: Element
    entries: list = field(default_factory=list)  # (p', A', p'', witness'', standard'')

    def verify(self, A: Subalgebra, N: PseudoRank, eps) -> bool:
        w = self.witness
        if not (w * w.adjoint() == self.p and w.adjoint() * w == self.standard and A.contains(w)):
            return False
        for pp, A2, ppp, w2, s2 in self.entries:
            if not (is_subprojection(ppp, pp) and N(pp - ppp) < eps and A2.contains(ppp)):
                return False
            if not (w2 * w2.adjoint() == ppp and w2.adjoint() * w2 == s2 and is_standard_projection(s2, A2)):
                return False
        return True


def _per_factor(P: Element, fn):
    blocks = []
    for t, blk in enumerate(P.blocks):
        sub = Element([P.shape[t]], P.field, [blk])
        blocks.append(fn(t, sub))
    return blocks


def certify_hereditarily_quasi_standard(p: Element, A: Subalgebra, N: PseudoRank, eps,
                                        subprojections=None, depth: int = 1, budget: int = 20000):
    """Certificate for clause (1) and, for a finite family of subprojections, clause (2).

    The enlarged algebra is A itself; p'' is p' or p' minus one rank-one piece.
    The family defaults to p and its first ``depth`` proper Gram-Schmidt
    prefix subprojections.
    """
    require_star_field(p.field)
    Projection(p)
    eps = Fraction(eps)
    f = p.field
    P = A.pull(p)

    def standardize(Q: Element, clause: str):
        ws, ds = [], []
        for t, blk in enumerate(Q.blocks):
            sub = Element([Q.shape[t]], f, [blk])
            w, why = _standard_witness(sub, budget)
            if w is None:
                raise CertificationFailure(clause, f"factor {t}: {why}")
            ws.append(w.blocks[0])
            ds.append(SMat.diagonal(Q.shape[t], range(len(range_basis(sub))), f.one))
        return A.push(Element(Q.shape, f, ws)), A.push(Element(Q.shape, f, ds))

    w, std = standardize(P, "1")
    cert = QuasiStandardCertificate(p, w, std)

    if subprojections is None:
        subprojections = [p]
        for t, blk in enumerate(P.blocks):
            sub = Element([P.shape[t]], f, [blk])
            vecs, _ = gram_schmidt(range_basis(sub), f)
            for k in range(1, min(depth, len(vecs)) + 1):
                if k >= len(vecs):
                    break
                pieces = [SMat(n, n) for n in P.shape]
                acc = Element.zero([P.shape[t]], f)
                for v in vecs[:k]:
                    acc = acc + _rank1_projection(v, f, P.shape[t])
                pieces[t] = acc.blocks[0]
                subprojections.append(A.push(Element(P.shape, f, pieces)))

    for pp in subprojections:
        if not is_subprojection(pp, p) or not A.contains(pp):
            raise CertificationFailure("2c", "requested family member is not a subprojection of p in A")
        PP = A.pull(pp)
        try:
            w2, s2 = standardize(PP, "2b")
            cert.entries.append((pp, A, pp, w2, s2))
            continue
        except CertificationFailure:
            if f.kind != "qi":
                raise
        # drop the last vector of a (1, ..., 1, d)-normalized basis in each failing factor
        blocks = []
        for t, blk in enumerate(PP.blocks):
            sub = Element([PP.shape[t]], f, [blk])
            if _standard_witness(sub, budget)[0] is not None:
                blocks.append(blk)
                continue
            us, _ = normalized_basis(range_basis(sub), f, budget)
            blocks.append((sub - _rank1_projection(us[-1], f, PP.shape[t])).blocks[0])
        ppp = A.push(Element(PP.shape, f, blocks))
        gap = N(pp - ppp)
        if not gap < eps:
            raise CertificationFailure("2c", f"N(p' - p'') = {gap} is not below {eps}")
        w2, s2 = standardize(A.pull(ppp), "2b")
        cert.entries.append((pp, A, ppp, w2, s2))
    if not cert.verify(A, N, eps):
        raise CertificationFailure("2", "certificate failed re-verification")
    return cert
