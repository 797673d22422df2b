"""Regular-ring primitives for matricial algebras.

Dense work is done per connected component of a block's sparsity pattern, so
elements that are mostly zero (the common case at large resolutions) stay cheap.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import linalg as la
from .linalg import SMat
from .matalg import Element, PseudoRank, Subalgebra, Verdict, one_like


class ConstructionFailure(RuntimeError):
    """An idempotent construction could not meet its postconditions."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


def _dense_qi(m, f):
    """Quasi-inverse of a dense matrix via a rank factorization m = C R."""
    nr = len(m)
    nc = len(m[0]) if nr else 0
    c, r, piv = la.rank_factorization(m, f)
    k = len(piv)
    y = la.zeros(nc, nr, f)
    if not k:
        return y
    # R has an identity at its pivot columns; C's pivot-row minor is invertible
    rowpiv = _pivot_rows(c, f)
    cinv = la.inverse([c[i] for i in rowpiv], f)
    for a, col in enumerate(piv):
        for b, row in enumerate(rowpiv):
            y[col][row] = cinv[a][b]
    return y


def _pivot_rows(c, f):
    _, piv = la.rref(la.transpose(c), f)
    return piv


def _smat_qi(m: SMat, f) -> SMat:
    rows: dict = {}
    for rs, cs in m.components():
        sub = m.submatrix(rs, cs).to_dense(f.zero)
        y = _dense_qi(sub, f)
        for a, cidx in enumerate(cs):
            for b, ridx in enumerate(rs):
                if y[a][b]:
                    rows.setdefault(cidx, {})[ridx] = y[a][b]
    return SMat(m.ncols, m.nrows, rows)


def quasi_inverse(x: Element) -> Element:
    """y with x y x = x and y x y = y (both verified)."""
    y = Element(x.shape, x.field, [_smat_qi(b, x.field) for b in x.blocks])
    if x * y * x != x or y * x * y != y:
        raise ConstructionFailure("quasi-inverse postcondition failed")
    return y


@dataclass
class IdealMembershipCertificate:
    kind: str  # "left": m = b a ; "right": m = a c
    witness: Element

    def check(self, m: Element, a: Element) -> bool:
        if self.kind == "left":
            return self.witness * a == m
        return a * self.witness == m


def in_left_ideal(m: Element, a: Element):
    """Certificate b with m = b a, or None when some row of m leaves rowspace(a)."""
    b = m * quasi_inverse(a)
    if b * a == m:
        return IdealMembershipCertificate("left", b)
    return None


def in_right_ideal(m: Element, a: Element):
    c = quasi_inverse(a) * m
    if a * c == m:
        return IdealMembershipCertificate("right", c)
    return None


# ---------------------------------------------------------------------------
# idempotent correction
# ---------------------------------------------------------------------------

def _symmetric_components(m: SMat):
    """Index classes of the graph i ~ j when m[i][j] != 0 (square m)."""
    parent = {}

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for r, row in m.rows.items():
        parent.setdefault(r, r)
        for c in row:
            parent.setdefault(c, c)
            ra, rb = find(r), find(c)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    classes: dict = {}
    for i in parent:
        classes.setdefault(find(i), []).append(i)
    return [sorted(v) for v in classes.values()]


def _dense_idempotent_near(X, f):
    """Projection onto ker(X - 1) along ker(X) plus standard complements."""
    n = len(X)
    xm1 = [[X[i][j] - (f.one if i == j else f.zero) for j in range(n)] for i in range(n)]
    w1 = la.nullspace(xm1, f)
    w0 = la.nullspace(X, f)
    basis = list(w1) + list(w0)
    # extend with standard vectors
    for i in range(n):
        if len(basis) == n:
            break
        e = [f.one if k == i else f.zero for k in range(n)]
        if la.dense_rank([*basis, e], f, prepass=False) > len(basis):
            basis.append(e)
    if not w1:
        return la.zeros(n, n, f)
    B = la.transpose(basis)  # columns are basis vectors
    Binv = la.inverse(B, f)
    k = len(w1)
    D = [[f.one if (i == j and i < k) else f.zero for j in range(n)] for i in range(n)]
    return la.matmul(la.matmul(B, D, f), Binv, f)


def _smat_idempotent_near(m: SMat, f) -> SMat:
    rows: dict = {}
    for idx in _symmetric_components(m):
        sub = m.submatrix(idx, idx).to_dense(f.zero)
        g = _dense_idempotent_near(sub, f)
        for a, ra in enumerate(idx):
            for b, cb in enumerate(idx):
                if g[a][b]:
                    rows.setdefault(ra, {})[cb] = g[a][b]
    return SMat(m.nrows, m.ncols, rows)


@dataclass
class IdempotentReport:
    g: Element
    certificate: IdealMembershipCertificate
    strong: bool


def idempotent_near(x: Element, A: Subalgebra | None = None, strong: bool = True) -> IdempotentReport:
    """Idempotent g in A with x - g in A (x - x^2).

    In strong mode also g in xA, g in Ax and x g = g. The construction runs in
    A's coordinates; every postcondition is re-checked there and in the ambient.
    """
    if A is None:
        A = Subalgebra.whole(x.shape, x.field)
    X = A.pull(x)
    f = x.field
    G = Element(X.shape, f, [_smat_idempotent_near(b, f) for b in X.blocks])
    defect = X - X * X
    diag = {}
    if G * G != G:
        diag["idempotent"] = False
    cert = in_left_ideal(X - G, defect)
    if cert is None:
        diag["ideal"] = False
    if strong:
        if X * G != G:
            diag["xg=g"] = False
        if in_right_ideal(G, X) is None:
            diag["g in xA"] = False
        if in_left_ideal(G, X) is None:
            diag["g in Ax"] = False
    if diag:
        raise ConstructionFailure("idempotent_near postconditions failed", diag)
    g = A.push(G)
    amb_cert = IdealMembershipCertificate("left", A.push(cert.witness))
    if not amb_cert.check(x - g, x - x * x):
        raise ConstructionFailure("ambient certificate failed")
    return IdempotentReport(g, amb_cert, strong)


@dataclass
class CorrectionReport:
    distance_before: Fraction
    distance_after: Fraction
    eps: Fraction | None
    ratio: Fraction | None
    verdict: Verdict


def idempotent_correction_bound(rho1: Element, x: Element, A: Subalgebra | None, N: PseudoRank,
                                eps: Fraction | None = None) -> CorrectionReport:
    """Correct x to an idempotent g and check N(rho1 - g) against 4 N(rho1 - x).

    With ``eps`` given (a declared bound N(rho1 - x) < eps) the strict claim
    N(rho1 - g) < 4 eps is asserted as well.
    """
    if rho1 * rho1 != rho1:
        raise ValueError("rho1 must be idempotent")
    d = N(rho1 - x)
    if eps is not None and not d < eps:
        raise ValueError(f"declared eps {eps} does not exceed N(rho1 - x) = {d}")
    g = idempotent_near(x, A, strong=False).g
    after = N(rho1 - g)
    ok = after <= 4 * d and (eps is None or after < 4 * eps)
    ratio = after / d if d else None
    detail = None if ok else f"N(rho1 - g) = {after} exceeds 4 * {d if eps is None else eps}"
    return CorrectionReport(d, after, eps, ratio, Verdict(ok, detail))


__all__ = [
    "quasi_inverse", "in_left_ideal", "in_right_ideal", "IdealMembershipCertificate",
    "idempotent_near", "idempotent_correction_bound", "ConstructionFailure",
    "IdempotentReport", "CorrectionReport", "one_like",
]
