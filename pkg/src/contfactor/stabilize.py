"""Turn approximate matrix units into exact ones inside a subalgebra.

The construction is inductive in p: stabilize the (p-1)-corner, make the
new corner candidates orthogonal to the existing units, correct the (1,1)
entry to an idempotent, and assemble the full system. All algebra runs in the
subalgebra's own coordinates; every rank bound along the way is checked in the
ambient algebra.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from . import linalg as la
from .audit import AuditLog
from .linalg import SMat
from .matalg import (ConcreteHom, Element, PseudoRank, Shape, Subalgebra, coordinate_hom,
                     standard_embedding, verify_matrix_units)
from .regular import idempotent_near, quasi_inverse
from .scalar import InvolutiveField, QQ
from . import star as st


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def k_constant(p: int) -> int:
    """K(1) = 4, K(p) = (2^{p+3} + 2^p - 2) K(p-1) + 2^{p+3} + 2^p."""
    if p < 1:
        raise ValueError("p must be >= 1")
    k = 4
    for q in range(2, p + 1):
        k = (2 ** (q + 3) + 2 ** q - 2) * k + 2 ** (q + 3) + 2 ** q
    return k


@lru_cache(maxsize=None)
def k_star_constant(p: int) -> int:
    """K*(1) = 16, K*(p) = (2^{p+5} + 2^p - 2) K*(p-1) + 2^{p+5} + 2^p.

    The factor 4 of the left-projection perturbation bound is inserted where
    the idempotent g is replaced by LP(g).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    k = 16
    for q in range(2, p + 1):
        k = (2 ** (q + 5) + 2 ** q - 2) * k + 2 ** (q + 5) + 2 ** q
    return k


@dataclass
class ConstantLedger:
    max_p: int = 6

    def rows(self):
        return [{"p": p, "K": str(k_constant(p)), "K_provenance": "published",
                 "K_star": str(k_star_constant(p)), "K_star_provenance": "artifact-defined"}
                for p in range(1, self.max_p + 1)]

    def to_json(self):
        return {"K_recursion": "K(1)=4; K(p)=(2^(p+3)+2^p-2)K(p-1)+2^(p+3)+2^p",
                "K_star_recursion": "K*(1)=16; K*(p)=(2^(p+5)+2^p-2)K*(p-1)+2^(p+5)+2^p",
                "table": self.rows()}


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------

class InstanceInvariantViolation(ValueError):
    pass


@dataclass
class StabilizationInstance:
    ambient: Shape
    field: InvolutiveField
    N: PseudoRank
    A: Subalgebra
    rho: ConcreteHom
    approximants: list  # p x p list of Elements in A
    eps: Fraction
    star: bool = False
    max_distance: Fraction | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ambient = Shape(self.ambient)
        self.eps = Fraction(self.eps)
        p = self.p
        if self.rho.src != Shape([p]) or self.rho.tgt != self.ambient:
            raise InstanceInvariantViolation("rho must map M_p into the ambient algebra")
        if not self.rho.verify(star=self.star):
            raise InstanceInvariantViolation("rho images are not (star) matrix units")
        if self.star:
            st.require_star_field(self.field)
        dmax = Fraction(0)
        for i in range(p):
            for j in range(p):
                x = self.approximants[i][j]
                if not self.A.contains(x):
                    raise InstanceInvariantViolation(f"approximant ({i+1},{j+1}) is not in A")
                d = self.N(self.rho.unit_image(0, i, j) - x)
                dmax = max(dmax, d)
        if not dmax < self.eps:
            raise InstanceInvariantViolation(f"max distance {dmax} is not below eps {self.eps}")
        self.max_distance = dmax

    @property
    def p(self) -> int:
        return len(self.approximants)

    def with_eps(self, eps) -> "StabilizationInstance":
        return StabilizationInstance(self.ambient, self.field, self.N, self.A, self.rho,
                                     self.approximants, eps, self.star, None, dict(self.meta))


@dataclass
class StabilizationResult:
    psi: ConcreteHom
    units: list
    audit: AuditLog
    distances: list
    bound: Fraction

    @property
    def max_distance(self) -> Fraction:
        return max(max(row) for row in self.distances)

    def ratio(self, eps) -> Fraction:
        return self.max_distance / Fraction(eps)


# ---------------------------------------------------------------------------
# the construction
# ---------------------------------------------------------------------------

class _Ctx:
    """Coordinates of the instance inside A plus helpers for ambient audits.

    In star mode A's hom is a *-hom, so adjoints and left projections can be
    taken directly in coordinates.
    """

    def __init__(self, inst: StabilizationInstance, log: AuditLog):
        self.inst = inst
        self.A = inst.A
        self.log = log
        self.eps = inst.eps
        self.rho = [[inst.rho.unit_image(0, i, j) for j in range(inst.p)] for i in range(inst.p)]
        self.X = [[self.A.pull(x) for x in row] for row in inst.approximants]
        self.one = Element.identity(self.A.shape, inst.field)

    def dist(self, i, j, Y):
        return self.inst.N(self.rho[i][j] - self.A.push(Y))

    def n(self, Y):
        return self.inst.N(self.A.push(Y))


def _corner(ctx: _Ctx, p: int, star: bool, f_coord, tag: str):
    """Exact p x p units (in A coordinates) near rho on the top-left p-corner."""
    eps = ctx.eps
    log = ctx.log
    K = k_star_constant if star else k_constant
    if p == 1:
        if star and f_coord is not None:
            g = f_coord
        else:
            g = idempotent_near(ctx.A.push(ctx.X[0][0]), ctx.A, strong=False).g
            g = ctx.A.pull(g)
            if star:
                g = st.lp(g)
        log.check(f"{tag}p=1: N(rho(e11) - psi(e11)) < K(1) eps", ctx.dist(0, 0, g), "<", K(1) * eps)
        return [[g]]

    x = _corner(ctx, p - 1, star, f_coord, tag)
    Kp = K(p - 1)
    last = p - 1

    # make z_1p orthogonal to x_i1 (and z_p1 to x_1i) for i < p
    z1p = ctx.X[0][last]
    for i in range(p - 1):
        w = z1p * x[i][0]
        if star:
            g = st.lp(w)
        else:
            g = w * quasi_inverse(w)
        log.check(f"{tag}p={p}: N(g_{i+1}) left", ctx.n(g), "<",
                  ((2 ** i - 1) * Kp + 2 ** i + Kp) * eps)
        z1p = (ctx.one - g) * z1p
        log.check(f"{tag}p={p}: z_1p^({i+1}) bound", ctx.dist(0, last, z1p), "<",
                  ((2 ** (i + 1) - 1) * Kp + 2 ** (i + 1)) * eps)
    for i in range(p - 1):
        log.check(f"{tag}p={p}: z'_1p x_{i+1}1 = 0", (z1p * x[i][0]).is_zero(), "==", True)

    if star:
        zp1 = z1p.adjoint()
    else:
        zp1 = ctx.X[last][0]
        for i in range(p - 1):
            w = x[0][i] * zp1
            g = quasi_inverse(w) * w
            log.check(f"{tag}p={p}: N(g'_{i+1}) right", ctx.n(g), "<",
                      ((2 ** i - 1) * Kp + 2 ** i + Kp) * eps)
            zp1 = zp1 * (ctx.one - g)
            log.check(f"{tag}p={p}: z_p1^({i+1}) bound", ctx.dist(last, 0, zp1), "<",
                      ((2 ** (i + 1) - 1) * Kp + 2 ** (i + 1)) * eps)
        for i in range(p - 1):
            log.check(f"{tag}p={p}: x_1{i+1} z'_p1 = 0", (x[0][i] * zp1).is_zero(), "==", True)

    x11p = x[0][0] * z1p * zp1 * x[0][0]
    corner = (Kp + 1) * 2 ** p * eps
    log.check(f"{tag}p={p}: N(x'11 - rho(e11))", ctx.dist(0, 0, x11p), "<", corner)
    log.check(f"{tag}p={p}: N(x'11 - x'11^2)", ctx.n(x11p - x11p * x11p), "<", 3 * corner)

    rep = idempotent_near(ctx.A.push(x11p), ctx.A, strong=True)
    g = ctx.A.pull(rep.g)
    log.check(f"{tag}p={p}: g <= x11", (x[0][0] * g == g and g * x[0][0] == g), "==", True)
    log.check(f"{tag}p={p}: g z'_1p z'_p1 g = g", g * z1p * zp1 * g == g, "==", True)
    log.check(f"{tag}p={p}: N(g - rho(e11))", ctx.dist(0, 0, g), "<", (Kp + 1) * 2 ** (p + 2) * eps)
    if star:
        P = st.lp(g)
        log.check(f"{tag}p={p}: N(LP(g) - rho(e11))", ctx.dist(0, 0, P), "<", (Kp + 1) * 2 ** (p + 4) * eps)
        g = P

    row = [g] + [g * x[0][i] for i in range(1, p - 1)] + [g * z1p]
    if star:
        col = [r.adjoint() for r in row]
        edge = ((2 ** (p + 4) + 2 ** (p - 1) - 1) * Kp + 2 ** (p + 4) + 2 ** (p - 1)) * eps
    else:
        col = [g] + [x[i][0] * g for i in range(1, p - 1)] + [zp1 * g]
        edge = ((2 ** (p + 2) + 2 ** (p - 1) - 1) * Kp + 2 ** (p + 2) + 2 ** (p - 1)) * eps
    for i in range(p):
        log.check(f"{tag}p={p}: N(y_1{i+1} - rho(e_1{i+1}))", ctx.dist(0, i, row[i]), "<", edge)
        log.check(f"{tag}p={p}: N(y_{i+1}1 - rho(e_{i+1}1))", ctx.dist(i, 0, col[i]), "<", edge)
    y = [[col[i] * row[j] for j in range(p)] for i in range(p)]
    for i in range(p):
        for j in range(p):
            log.check(f"{tag}p={p}: N(y_{i+1}{j+1} - rho(e_{i+1}{j+1}))", ctx.dist(i, j, y[i][j]), "<", K(p) * eps)
    return y


def _finish(inst: StabilizationInstance, ctx: _Ctx, y, star: bool, K) -> StabilizationResult:
    units = [[inst.A.push(v) for v in row] for row in y]
    v = verify_matrix_units(units, star=star)
    ctx.log.check("matrix-unit relations", v.ok, "==", True)
    p = inst.p
    cols = [[units[a][0] for a in range(p)]]
    rows = [[units[0][b] for b in range(p)]]
    psi = ConcreteHom.from_generators([p], inst.ambient, inst.field, cols, rows)
    dists = [[inst.N(ctx.rho[i][j] - units[i][j]) for j in range(p)] for i in range(p)]
    return StabilizationResult(psi, units, ctx.log, dists, K(p) * inst.eps)


def stabilize_matrix_units(inst: StabilizationInstance, strict: bool = True) -> StabilizationResult:
    """Exact matrix units psi(e_ij) in A with N(rho(e_ij) - psi(e_ij)) < K(p) eps."""
    log = AuditLog(strict=strict)
    ctx = _Ctx(inst, log)
    y = _corner(ctx, inst.p, False, None, "")
    return _finish(inst, ctx, y, False, k_constant)


def stabilize_star(inst: StabilizationInstance, f: Element | None = None, strict: bool = True) -> StabilizationResult:
    """*-matrix units in A near rho, within K*(p) eps; psi(e11) <= f when f is given."""
    st.require_star_field(inst.field)
    if not inst.star:
        raise ValueError("instance is not a *-instance")
    log = AuditLog(strict=strict)
    ctx = _Ctx(inst, log)
    f_coord = None
    if f is not None:
        st.Projection(f)
        f_coord = inst.A.pull(f)
        d = inst.N(ctx.rho[0][0] - f)
        if not d < inst.eps:
            raise InstanceInvariantViolation(f"N(rho(e11) - f) = {d} is not below eps")
    y = _corner(ctx, inst.p, True, f_coord, "")
    res = _finish(inst, ctx, y, True, k_star_constant)
    if f is not None:
        log.check("psi(e11) <= f", st.is_subprojection(res.units[0][0], f), "==", True)
    return res


# ---------------------------------------------------------------------------
# instance generation
# ---------------------------------------------------------------------------

def _dense_elem(f, m):
    return Element([len(m)], f, [SMat.from_dense(m)])


def _perturbation_unit(rng, n, f, rank, star, height):
    """(u, u^-1): 1 + a rank-``rank`` perturbation, or a product of Householder reflections."""
    one = la.identity(n, f)
    u = one
    for _ in range(rank):
        v = [f.random(rng, height) for _ in range(n)]
        while all(x == 0 for x in v):
            v = [f.random(rng, height) for _ in range(n)]
        if star:
            vv = sum((st.involute(a, f) * a for a in v), f.zero)
            refl = [[one[i][j] - 2 * v[i] * st.involute(v[j], f) / vv for j in range(n)] for i in range(n)]
            u = la.matmul(u, refl, f)
        else:
            while True:
                w = [f.random(rng, height) for _ in range(n)]
                cand = [[one[i][j] + v[i] * w[j] for j in range(n)] for i in range(n)]
                cand = la.matmul(u, cand, f)
                if la.dense_rank(cand, f) == n:
                    u = cand
                    break
    return _dense_elem(f, u), _dense_elem(f, la.inverse(u, f))


def generate_instance(seed, p: int, n: int, budget: int, field: InvolutiveField = QQ, star: bool = False,
                      trial: int = 0, noise: int = 1, height: int = 2) -> StabilizationInstance:
    """Deterministic instance in M_n from ``(seed, trial)``.

    A = u A0 u^-1 where A0 = M_p x ... x M_p (x M_r for the remainder) sits
    block-diagonally and u differs from 1 by rank ``budget`` (unitary in star
    mode). rho is the diagonal embedding of M_p into A0. The approximants are
    u (rho(e_ij) + t_ij) u^-1 with ``noise`` random rank-one terms t_ij in A0.
    eps is declared as the exact maximal distance plus 1/(2n).
    """
    if p < 1 or n < p:
        raise ValueError("need 1 <= p <= n")
    if 2 * budget + noise >= n:
        raise ValueError("perturbation budget too large for a distance below 1")
    if star:
        st.require_star_field(field)
    rng = random.Random(f"{seed}:{trial}")
    copies, rem = divmod(n, p)
    pieces = [(0, list(range(c * p, (c + 1) * p))) for c in range(copies)]
    if rem:
        pieces.append((0, list(range(copies * p, n))))
    A0 = coordinate_hom([n], field, pieces)
    mult = [[copies]]
    rho = standard_embedding([p], [n], mult, field)
    u, u_inv = _perturbation_unit(rng, n, field, budget, star, height)
    A = Subalgebra(A0.conjugate(u, u_inv), star=star)
    approx = []
    slots = [(rng.randrange(p), rng.randrange(p)) for _ in range(noise)]
    for i in range(p):
        row = []
        for j in range(p):
            t = Element.zero([n], field)
            for k, (a, b) in enumerate(slots):
                if (a, b) == (i, j):
                    c = rng.randrange(copies)
                    r, s = rng.randrange(p), rng.randrange(p)
                    t = t + Element.unit([n], field, 0, c * p + r, c * p + s) * field.random(rng, height)
            row.append(u * (rho.unit_image(0, i, j) + t) * u_inv)
        approx.append(row)
    N = PseudoRank([n])
    dmax = max(N(rho.unit_image(0, i, j) - approx[i][j]) for i in range(p) for j in range(p))
    eps = dmax + Fraction(1, 2 * n)
    return StabilizationInstance(Shape([n]), field, N, A, rho, approx, eps, star,
                                 meta={"seed": seed, "trial": trial, "budget": budget, "noise": noise,
                                       "max_distance": dmax})
