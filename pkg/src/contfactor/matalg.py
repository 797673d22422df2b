"""Matricial algebras, pseudo-rank functions and homomorphisms between them.

An element of ``M_{n(1)} x ... x M_{n(k)}`` is a tuple of sparse blocks.

Homomorphisms are stored in *frame* form. For a hom ``phi`` from a matricial
algebra with blocks ``n_t`` into a target block of size ``m``, let ``d_t`` be
the rank of ``phi(e^{(t)}_{11})`` there. Then there are matrices ``P``
(``m x D``) and ``Q`` (``D x m``), ``D = sum n_t d_t``, with ``Q P = I_D`` and::

    phi(x) = P . (X_1 (x) I_{d_1}  +  ...  +  X_k (x) I_{d_k}) . Q

Every homomorphism between matricial algebras has this shape. The relation
``Q P = I`` is equivalent to the matrix-unit relations for all images at once,
so validating a hom costs one sparse product.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from math import gcd

from . import linalg as la
from .linalg import SMat
from .scalar import FieldMismatch, InvolutiveField, involute


class ShapeMismatch(ValueError):
    pass


class InfeasibleEmbedding(ValueError):
    pass


class Shape(tuple):
    """Ordered block sizes ``(n(1), ..., n(k))``; nonempty, all >= 1."""

    def __new__(cls, sizes):
        sizes = tuple(int(s) for s in sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"invalid shape {sizes}")
        return super().__new__(cls, sizes)

    def __repr__(self):
        return "Shape(" + ",".join(map(str, self)) + ")"


@dataclass
class Verdict:
    ok: bool
    detail: str | None = None
    data: dict = dc_field(default_factory=dict)

    def __bool__(self):
        return self.ok


# ---------------------------------------------------------------------------
# elements
# ---------------------------------------------------------------------------

class Element:
    """Element of a matricial algebra over ``field``; blocks are :class:`SMat`."""

    __slots__ = ("shape", "field", "blocks")

    def __init__(self, shape, field: InvolutiveField, blocks):
        self.shape = shape if isinstance(shape, Shape) else Shape(shape)
        self.field = field
        self.blocks = tuple(blocks)
        if len(self.blocks) != len(self.shape):
            raise ShapeMismatch(f"{len(self.blocks)} blocks for shape {self.shape}")
        for b, n in zip(self.blocks, self.shape):
            if (b.nrows, b.ncols) != (n, n):
                raise ShapeMismatch(f"block {b.nrows}x{b.ncols} in a size-{n} slot")

    # constructors ----------------------------------------------------------
    @classmethod
    def zero(cls, shape, f: InvolutiveField):
        shape = Shape(shape)
        return cls(shape, f, [SMat(n, n) for n in shape])

    @classmethod
    def identity(cls, shape, f: InvolutiveField):
        shape = Shape(shape)
        return cls(shape, f, [SMat.identity(n, f.one) for n in shape])

    @classmethod
    def unit(cls, shape, f: InvolutiveField, block: int, i: int, j: int):
        """Canonical matrix unit ``e_{ij}`` of the given block (0-based)."""
        shape = Shape(shape)
        blocks = [SMat(n, n) for n in shape]
        blocks[block] = SMat.unit(shape[block], i, j, f.one)
        return cls(shape, f, blocks)

    @classmethod
    def from_dense(cls, f: InvolutiveField, mats, shape=None):
        """From a list of dense square matrices (entries coerced into ``f``)."""
        mats = [[[f(x) for x in row] for row in m] for m in mats]
        shape = Shape([len(m) for m in mats]) if shape is None else Shape(shape)
        return cls(shape, f, [SMat.from_dense(m, n) for m, n in zip(mats, shape)])

    @classmethod
    def single(cls, f: InvolutiveField, m):
        return cls.from_dense(f, [m])

    # structure ------------------------------------------------------------
    def to_dense(self):
        return [b.to_dense(self.field.zero) for b in self.blocks]

    def _compat(self, other):
        if not isinstance(other, Element):
            raise TypeError(f"expected Element, got {type(other).__name__}")
        if self.shape != other.shape:
            raise ShapeMismatch(f"{self.shape} vs {other.shape}")
        if self.field != other.field:
            raise FieldMismatch(f"{self.field.name} vs {other.field.name}")

    def __add__(self, other):
        self._compat(other)
        return Element(self.shape, self.field, [a + b for a, b in zip(self.blocks, other.blocks)])

    def __sub__(self, other):
        self._compat(other)
        return Element(self.shape, self.field, [a - b for a, b in zip(self.blocks, other.blocks)])

    def __neg__(self):
        return Element(self.shape, self.field, [-a for a in self.blocks])

    def __mul__(self, other):
        if isinstance(other, Element):
            self._compat(other)
            return Element(self.shape, self.field, [a @ b for a, b in zip(self.blocks, other.blocks)])
        s = self.field.check(self.field(other) if isinstance(other, int) else other)
        return Element(self.shape, self.field, [a.scale(s) for a in self.blocks])

    def __rmul__(self, other):
        return self * other

    def __eq__(self, other):
        if not isinstance(other, Element):
            return NotImplemented
        return self.shape == other.shape and self.field == other.field and all(
            a == b for a, b in zip(self.blocks, other.blocks))

    __hash__ = None

    def __repr__(self):
        return f"Element({self.shape}, {self.field.name}, nnz={[b.nnz for b in self.blocks]})"

    def is_zero(self) -> bool:
        return all(b.is_zero() for b in self.blocks)

    def is_identity(self) -> bool:
        return all(b.is_identity(self.field.one) for b in self.blocks)

    def is_idempotent(self) -> bool:
        return self * self == self

    def adjoint(self):
        """Blockwise conjugate transpose."""
        f = self.field
        if f.kind == "qi":
            return Element(self.shape, f, [b.transpose().map(lambda v: v.conj()) for b in self.blocks])
        return Element(self.shape, f, [b.transpose() for b in self.blocks])

    def block_ranks(self):
        return [b.rank(self.field) for b in self.blocks]

    def lift(self, copies: int):
        """Image under ``x -> diag(x, ..., x)`` (blockwise), which preserves normalized ranks."""
        return Element(Shape(n * copies for n in self.shape), self.field,
                       [b.kron_left_identity(copies) for b in self.blocks])


def one_like(x: Element) -> Element:
    return Element.identity(x.shape, x.field)


# ---------------------------------------------------------------------------
# pseudo-rank functions
# ---------------------------------------------------------------------------

class PseudoRank:
    """``N(x) = sum_i alpha_i rank(x_i) / n(i)`` with rational convex weights."""

    def __init__(self, shape, weights=None):
        self.shape = Shape(shape)
        if weights is None:
            weights = [Fraction(1, len(self.shape))] * len(self.shape)
        self.weights = tuple(Fraction(w) for w in weights)
        if len(self.weights) != len(self.shape):
            raise ShapeMismatch("one weight per block required")
        if any(w < 0 for w in self.weights) or sum(self.weights) != 1:
            raise ValueError(f"weights must be nonnegative and sum to 1, got {self.weights}")

    @classmethod
    def uniform_single(cls, n: int):
        return cls([n], [1])

    def __call__(self, x: Element) -> Fraction:
        return rank_of(x, self)

    def is_rank_function(self) -> bool:
        return all(w > 0 for w in self.weights)

    def __repr__(self):
        return f"PseudoRank({tuple(self.shape)}, {[str(w) for w in self.weights]})"


def rank_of(x: Element, N: PseudoRank) -> Fraction:
    if x.shape != N.shape:
        raise ShapeMismatch(f"element shape {x.shape} vs rank shape {N.shape}")
    total = Fraction(0)
    for w, n, b in zip(N.weights, x.shape, x.blocks):
        if w and not b.is_zero():
            total += w * Fraction(b.rank(x.field), n)
    return total


def normalized_rank(x: Element) -> Fraction:
    """Normalized rank of a single-block element."""
    if len(x.shape) != 1:
        raise ShapeMismatch("normalized_rank needs a single block")
    return Fraction(x.blocks[0].rank(x.field), x.shape[0])


# ---------------------------------------------------------------------------
# homomorphisms
# ---------------------------------------------------------------------------

def sparse_rank_factorization(m: SMat, f: InvolutiveField):
    """``m = C @ R`` with ``R @ C = I`` whenever m is idempotent.

    Works component by component, so coordinate idempotents factor in linear time.
    Columns of C are ordered by their first row.
    """
    cols_c = []  # list of dict row->val (columns of C)
    rows_r = []  # list of dict col->val (rows of R)
    for rs, cs in sorted(m.components()):
        if len(rs) == 1 and len(cs) == 1:
            v = m.rows[rs[0]][cs[0]]
            cols_c.append({rs[0]: v})
            rows_r.append({cs[0]: f.one})
            continue
        sub = m.submatrix(rs, cs).to_dense(f.zero)
        c, r, _ = la.rank_factorization(sub, f)
        for j in range(len(r)):
            cols_c.append({rs[i]: c[i][j] for i in range(len(rs)) if c[i][j]})
            rows_r.append({cs[k]: r[j][k] for k in range(len(cs)) if r[j][k]})
    d = len(cols_c)
    crows: dict = {}
    for j, col in enumerate(cols_c):
        for i, v in col.items():
            crows.setdefault(i, {})[j] = v
    C = SMat(m.nrows, d, crows)
    R = SMat(d, m.ncols, {j: row for j, row in enumerate(rows_r) if row})
    return C, R


class NotInSubalgebra(ValueError):
    pass


class ConcreteHom:
    """Algebra homomorphism between matricial algebras, in frame form.

    ``dims[t][b]`` is the rank of the image of ``e^{(t)}_{11}`` in target
    block ``b``; ``P[b]``/``Q[b]`` are the frames of target block ``b``.
    """

    def __init__(self, src, tgt, field: InvolutiveField, dims, P, Q):
        self.src = Shape(src)
        self.tgt = Shape(tgt)
        self.field = field
        self.dims = [list(row) for row in dims]
        self.P = list(P)
        self.Q = list(Q)
        self._Pt = [None] * len(self.tgt)
        self._Qt = [None] * len(self.tgt)
        self.offsets = []
        for b, m in enumerate(self.tgt):
            off, row = 0, []
            for t, n in enumerate(self.src):
                row.append(off)
                off += n * self.dims[t][b]
            self.offsets.append(row)
            if (self.P[b].nrows, self.P[b].ncols) != (m, off) or (self.Q[b].nrows, self.Q[b].ncols) != (off, m):
                raise ShapeMismatch(f"frame sizes wrong in target block {b}")

    # construction ----------------------------------------------------------
    @classmethod
    def from_generators(cls, src, tgt, field, cols, rows, check: bool = True):
        """From ``cols[t][a] = phi(e^{(t)}_{a1})`` and ``rows[t][b] = phi(e^{(t)}_{1b})``."""
        src, tgt = Shape(src), Shape(tgt)
        dims = [[0] * len(tgt) for _ in src]
        Pcols = [[] for _ in tgt]  # per target block: list of column dicts
        Qrows = [[] for _ in tgt]
        for t, n in enumerate(src):
            f11 = cols[t][0]
            for b in range(len(tgt)):
                Cb, Rb = sparse_rank_factorization(f11.blocks[b], field)
                dims[t][b] = Cb.ncols
                if not Cb.ncols:
                    continue
                for a in range(n):
                    pa = cols[t][a].blocks[b] @ Cb
                    Pcols[b].append(pa)
                    Qrows[b].append(Rb @ rows[t][a].blocks[b])
        P, Q = [], []
        for b, m in enumerate(tgt):
            P.append(_hstack(Pcols[b], m))
            Q.append(_vstack(Qrows[b], m))
        hom = cls(src, tgt, field, dims, P, Q)
        if check:
            v = hom.verify()
            if not v:
                raise ValueError(f"generator images are not matrix units: {v.detail}")
            for t, n in enumerate(src):
                for a in range(n):
                    if hom.unit_image(t, a, 0) != cols[t][a] or hom.unit_image(t, 0, a) != rows[t][a]:
                        raise ValueError(f"generator image ({t},{a}) not reproduced by frames")
        return hom

    @classmethod
    def from_images(cls, src, tgt, field, images, check: bool = True):
        """From a dict ``(t, a, b) -> Element`` of all canonical unit images."""
        src = Shape(src)
        cols = [[images[(t, a, 0)] for a in range(n)] for t, n in enumerate(src)]
        rows = [[images[(t, 0, b)] for b in range(n)] for t, n in enumerate(src)]
        hom = cls.from_generators(src, tgt, field, cols, rows, check=check)
        if check:
            for key, img in images.items():
                if hom.unit_image(*key) != img:
                    raise ValueError(f"image of unit {key} inconsistent with the generators")
        return hom

    # evaluation ------------------------------------------------------------
    def _pt(self, b):
        if self._Pt[b] is None:
            self._Pt[b] = self.P[b].transpose()
        return self._Pt[b]

    def _qt(self, b):
        if self._Qt[b] is None:
            self._Qt[b] = self.Q[b].transpose()
        return self._Qt[b]

    def coordinates(self, x: SMat, t: int, b: int) -> SMat:
        """Block-t coordinates read off target block b: ``(Q x P)`` at the slots (t, a, 0).

        Cost is proportional to the nonzeros met, not to the frame size.
        """
        n, d, off = self.src[t], self.dims[t][b], self.offsets[b][t]
        zero = self.field.zero
        end = off + n * d
        qt = self._qt(b)
        left: dict = {}
        for k, xrow in x.rows.items():
            qcol = qt.rows.get(k)
            if not qcol:
                continue
            for r, qv in qcol.items():
                if r < off or r >= end or (r - off) % d:
                    continue
                row = left.setdefault((r - off) // d, {})
                for c, xv in xrow.items():
                    row[c] = row.get(c, zero) + qv * xv
        P = self.P[b]
        out = {}
        for a, row in left.items():
            res: dict = {}
            for c, v in row.items():
                if not v:
                    continue
                prow = P.rows.get(c)
                if not prow:
                    continue
                for col, pv in prow.items():
                    if col < off or col >= end or (col - off) % d:
                        continue
                    k = (col - off) // d
                    res[k] = res.get(k, zero) + v * pv
            res = {k: v for k, v in res.items() if v}
            if res:
                out[a] = res
        return SMat(n, n, out)

    def _middle(self, x: Element, b: int) -> SMat:
        D = self.P[b].ncols
        rows = {}
        for t, blk in enumerate(x.blocks):
            d = self.dims[t][b]
            if not d:
                continue
            off = self.offsets[b][t]
            for r, row in blk.rows.items():
                for s in range(d):
                    rows[off + r * d + s] = {off + c * d + s: v for c, v in row.items()}
        return SMat(D, D, rows)

    def __call__(self, x: Element) -> Element:
        if x.shape != self.src:
            raise ShapeMismatch(f"hom source {self.src}, got {x.shape}")
        out = []
        for b, m in enumerate(self.tgt):
            mid = self._middle(x, b)
            if mid.is_zero():
                out.append(SMat(m, m))
                continue
            w = mid @ self.Q[b]
            # P @ w, touching only the columns of P that meet nonzero rows of w
            pt = self._pt(b)
            acc_rows: dict = {}
            for k, wrow in w.rows.items():
                pcol = pt.rows.get(k)
                if not pcol:
                    continue
                for r, pv in pcol.items():
                    acc = acc_rows.setdefault(r, {})
                    for c, wv in wrow.items():
                        s = acc.get(c)
                        acc[c] = pv * wv if s is None else s + pv * wv
            rows = {}
            for r, acc in acc_rows.items():
                acc = {c: v for c, v in acc.items() if v}
                if acc:
                    rows[r] = acc
            out.append(SMat(m, m, rows))
        return Element(self.tgt, self.field, out)

    apply = __call__

    def unit_image(self, t: int, a: int, b: int) -> Element:
        return self(Element.unit(self.src, self.field, t, a, b))

    def one_image(self) -> Element:
        return self(Element.identity(self.src, self.field))

    def images(self) -> dict:
        return {(t, a, b): self.unit_image(t, a, b)
                for t, n in enumerate(self.src) for a in range(n) for b in range(n)}

    @property
    def frames_square(self) -> bool:
        """Every target block is filled; with ``Q P = I`` this makes the hom unital."""
        return all(P.ncols == m for P, m in zip(self.P, self.tgt))

    @property
    def unital(self) -> bool:
        if self.frames_square:
            return True
        return self.one_image().is_identity()

    # checks ------------------------------------------------------------
    def verify(self, star: bool = False) -> Verdict:
        """Matrix-unit relations for every image, via ``Q P = I`` per target block."""
        for b in range(len(self.tgt)):
            if not (self.Q[b] @ self.P[b]).is_identity(self.field.one):
                return Verdict(False, f"frame relation Q P = I fails in target block {b}")
            if star:
                adj = self.P[b].transpose()
                if self.field.kind == "qi":
                    adj = adj.map(lambda v: v.conj())
                if adj != self.Q[b]:
                    return Verdict(False, f"images are not *-matrix units in target block {b}")
        return Verdict(True)

    # transformations ------------------------------------------------------
    def conjugate(self, u: Element, u_inv: Element) -> "ConcreteHom":
        """``x -> u phi(x) u^{-1}``."""
        P = [ub @ p for ub, p in zip(u.blocks, self.P)]
        Q = [q @ vb for q, vb in zip(self.Q, u_inv.blocks)]
        return ConcreteHom(self.src, self.tgt, self.field, self.dims, P, Q)

    def lift(self, copies: int) -> "ConcreteHom":
        """Compose with ``y -> diag(y, ..., y)`` on every target block."""
        if copies == 1:
            return self
        P, Q = [], []
        for b, m in enumerate(self.tgt):
            colmap = {}
            for t, n in enumerate(self.src):
                d = self.dims[t][b]
                off = self.offsets[b][t]
                for a in range(n):
                    for s in range(d):
                        for k in range(copies):
                            colmap[(off + a * d + s, k)] = off * copies + a * d * copies + k * d + s
            prow: dict = {}
            for r, row in self.P[b].rows.items():
                for k in range(copies):
                    prow[k * m + r] = {colmap[(c, k)]: v for c, v in row.items()}
            qrow: dict = {}
            for r, row in self.Q[b].rows.items():
                for k in range(copies):
                    qrow[colmap[(r, k)]] = {k * m + c: v for c, v in row.items()}
            D = self.P[b].ncols * copies
            P.append(SMat(m * copies, D, prow))
            Q.append(SMat(D, m * copies, qrow))
        dims = [[d * copies for d in row] for row in self.dims]
        return ConcreteHom(self.src, Shape(m * copies for m in self.tgt), self.field, dims, P, Q)

    def compose(self, inner: "ConcreteHom") -> "ConcreteHom":
        """``self o inner``."""
        if inner.tgt != self.src:
            raise ShapeMismatch("composition shapes do not match")
        cols = [[self(inner.unit_image(t, a, 0)) for a in range(n)] for t, n in enumerate(inner.src)]
        rows = [[self(inner.unit_image(t, 0, a)) for a in range(n)] for t, n in enumerate(inner.src)]
        return ConcreteHom.from_generators(inner.src, self.tgt, self.field, cols, rows)

    def __repr__(self):
        return f"ConcreteHom({self.src} -> {self.tgt}, dims={self.dims})"


def _hstack(mats, nrows: int) -> SMat:
    rows: dict = {}
    off = 0
    for m in mats:
        for r, row in m.rows.items():
            rows.setdefault(r, {}).update({off + c: v for c, v in row.items()})
        off += m.ncols
    return SMat(nrows, off, rows)


def _vstack(mats, ncols: int) -> SMat:
    rows: dict = {}
    off = 0
    for m in mats:
        for r, row in m.rows.items():
            rows[off + r] = dict(row)
        off += m.nrows
    return SMat(off, ncols, rows)


def standard_embedding(src, tgt, multiplicities, field: InvolutiveField, unital: bool | None = None) -> ConcreteHom:
    """Block-diagonal hom with ``multiplicities[b][t]`` copies of source block t in target block b.

    Copies are laid out in order (source block 0 first) starting at the top-left
    corner; ``x -> diag(x, x)`` is ``M_2 -> M_4`` with multiplicity 2.
    """
    src, tgt = Shape(src), Shape(tgt)
    if len(multiplicities) != len(tgt) or any(len(row) != len(src) for row in multiplicities):
        raise InfeasibleEmbedding("multiplicity matrix must be len(tgt) x len(src)")
    used = [sum(mult * n for mult, n in zip(row, src)) for row in multiplicities]
    for b, (u, m) in enumerate(zip(used, tgt)):
        if u > m:
            raise InfeasibleEmbedding(f"target block {b}: {u} > {m}")
        if any(k < 0 for k in multiplicities[b]):
            raise InfeasibleEmbedding("negative multiplicity")
    is_full = all(u == m for u, m in zip(used, tgt))
    if unital is True and not is_full:
        raise InfeasibleEmbedding("unital embedding needs sum m_ts n(s) = n'(t) in every target block")
    if unital is False and is_full:
        raise InfeasibleEmbedding("multiplicities fill the target; the embedding would be unital")
    dims = [[multiplicities[b][t] for b in range(len(tgt))] for t in range(len(src))]
    P, Q = [], []
    for b, m in enumerate(tgt):
        # coordinate of (t, a, copy k) in the target block
        prow, qrow = {}, {}
        pos = 0
        frame_off = 0
        for t, n in enumerate(src):
            d = multiplicities[b][t]
            for k in range(d):
                for a in range(n):
                    col = frame_off + a * d + k
                    prow[pos + a] = {col: field.one}
                    qrow[col] = {pos + a: field.one}
                pos += n
            frame_off += n * d
        P.append(SMat(m, frame_off, prow))
        Q.append(SMat(frame_off, m, qrow))
    return ConcreteHom(src, tgt, field, dims, P, Q)


def tensor_stabilize(z: Element, g: int) -> Element:
    """``z -> z (x) 1_g`` for a single-block element."""
    if len(z.shape) != 1:
        raise ShapeMismatch("tensor_stabilize needs a single-block element")
    return Element([z.shape[0] * g], z.field, [z.blocks[0].kron_right_identity(g)])


def verify_matrix_units(family, star: bool = False) -> Verdict:
    """Check ``x_ij x_kl = delta_jk x_il`` (and ``x_ji = x_ij*`` in star mode).

    ``family`` is a square list of lists of Elements.
    """
    p = len(family)
    if any(len(row) != p for row in family):
        return Verdict(False, "index set is not square")
    for i in range(p):
        for j in range(p):
            if star and family[j][i] != family[i][j].adjoint():
                return Verdict(False, f"x_{j+1}{i+1} != x_{i+1}{j+1}*", {"pair": [(j, i), (i, j)]})
            for k in range(p):
                for l in range(p):
                    prod = family[i][j] * family[k][l]
                    want = family[i][l] if j == k else Element.zero(family[i][l].shape, family[i][l].field)
                    if prod != want:
                        return Verdict(False, f"x_{i+1}{j+1} x_{k+1}{l+1} violates the unit relation",
                                       {"pair": [(i, j), (k, l)]})
    return Verdict(True)


def canonical_units(n: int, f: InvolutiveField):
    return [[Element.unit([n], f, 0, i, j) for j in range(n)] for i in range(n)]


# ---------------------------------------------------------------------------
# embedding chains
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingChain:
    shapes: list
    homs: list
    factor_sequence: bool = False

    def __post_init__(self):
        self.shapes = [Shape(s) for s in self.shapes]
        if len(self.homs) != len(self.shapes) - 1:
            raise ValueError("need one hom between consecutive shapes")
        for i, h in enumerate(self.homs):
            if h.src != self.shapes[i] or h.tgt != self.shapes[i + 1]:
                raise ShapeMismatch(f"hom {i} does not connect stage {i} to {i+1}")
        if self.factor_sequence:
            for i, s in enumerate(self.shapes):
                if len(s) != 1:
                    raise ValueError("factor sequences are single-block")
                if i and s[0] % self.shapes[i - 1][0]:
                    raise ValueError("p_i must divide p_{i+1}")

    @classmethod
    def factor(cls, sizes, f: InvolutiveField):
        homs = [standard_embedding([a], [b], [[b // a]], f) for a, b in zip(sizes, sizes[1:])]
        return cls([[s] for s in sizes], homs, factor_sequence=True)

    def composite(self, j: int, i: int) -> ConcreteHom:
        h = None
        for k in range(i, j):
            h = self.homs[k] if h is None else self.homs[k].compose(h)
        return h


def check_rank_compatibility(chain: EmbeddingChain, weights) -> Verdict:
    """Stage-wise compatibility of pseudo-rank weights along the chain."""
    if len(weights) != len(chain.shapes):
        raise ValueError("one weight vector per stage required")
    Ns = [w if isinstance(w, PseudoRank) else PseudoRank(s, w) for w, s in zip(weights, chain.shapes)]
    if chain.factor_sequence and any(N.weights != (1,) for N in Ns):
        return Verdict(False, "factor sequences admit only the weights (1)")
    for i, h in enumerate(chain.homs):
        for t, n in enumerate(chain.shapes[i]):
            for a in range(n):
                for b in range(n):
                    u = Element.unit(chain.shapes[i], h.field, t, a, b)
                    lhs, rhs = Ns[i](u), Ns[i + 1](h(u))
                    if lhs != rhs:
                        return Verdict(False, f"stage {i}: unit ({t},{a},{b}) has rank {lhs} but image rank {rhs}",
                                       {"stage": i, "unit": (t, a, b), "lhs": lhs, "rhs": rhs})
    return Verdict(True, data={"extremal": all(len(s) == 1 for s in chain.shapes)})


def divisors(n: int):
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d * d != n:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


__all__ = [
    "Shape", "Element", "PseudoRank", "rank_of", "normalized_rank", "ConcreteHom",
    "standard_embedding", "tensor_stabilize", "verify_matrix_units", "EmbeddingChain",
    "check_rank_compatibility", "Verdict", "sparse_rank_factorization", "canonical_units",
    "divisors", "lcm", "one_like", "ShapeMismatch", "InfeasibleEmbedding", "NotInSubalgebra",
]


# ---------------------------------------------------------------------------
# subalgebras
# ---------------------------------------------------------------------------

def coordinate_hom(ambient, field: InvolutiveField, pieces) -> ConcreteHom:
    """Hom from ``Shape(len(coords) ...)`` onto coordinate corners of the ambient.

    ``pieces`` is a list of ``(block, coords)``; block t of the source is sent
    onto the rows/columns ``coords`` of ambient block ``block``.
    """
    ambient = Shape(ambient)
    src = Shape(len(c) for _, c in pieces)
    dims = [[1 if b == blk else 0 for b in range(len(ambient))] for blk, _ in pieces]
    P, Q = [], []
    for b, m in enumerate(ambient):
        prow, qrow, off = {}, {}, 0
        for blk, coords in pieces:
            if blk != b:
                continue
            for a, r in enumerate(coords):
                prow[r] = {off + a: field.one}
                qrow[off + a] = {r: field.one}
            off += len(coords)
        P.append(SMat(m, off, prow))
        Q.append(SMat(off, m, qrow))
    return ConcreteHom(src, ambient, field, dims, P, Q)


def direct_sum(homs) -> ConcreteHom:
    """Hom from the concatenated source shapes; images must be orthogonal (verified)."""
    homs = list(homs)
    tgt, field = homs[0].tgt, homs[0].field
    src = Shape([n for h in homs for n in h.src])
    dims = [row for h in homs for row in h.dims]
    P = [_hstack([h.P[b] for h in homs], m) for b, m in enumerate(tgt)]
    Q = [_vstack([h.Q[b] for h in homs], m) for b, m in enumerate(tgt)]
    hom = ConcreteHom(src, tgt, field, dims, P, Q)
    v = hom.verify()
    if not v:
        raise ValueError(f"summands are not orthogonal: {v.detail}")
    return hom


class Subalgebra:
    """Matricial subalgebra of an ambient algebra, given by an injective hom
    from a standard shape. Membership is decided by pulling back through the
    frames and re-pushing exactly."""

    def __init__(self, hom: ConcreteHom, star: bool = False):
        for t, row in enumerate(hom.dims):
            if not any(row):
                raise ValueError(f"factor {t} has zero image; the hom is not injective")
        self.hom = hom
        self.star = star
        if star:
            v = hom.verify(star=True)
            if not v:
                raise ValueError(v.detail)

    @classmethod
    def whole(cls, ambient, field: InvolutiveField, star: bool = False):
        ambient = Shape(ambient)
        return cls(coordinate_hom(ambient, field, [(b, list(range(m))) for b, m in enumerate(ambient)]), star)

    @classmethod
    def scalars(cls, ambient, field: InvolutiveField, star: bool = False):
        ambient = Shape(ambient)
        mult = [[m] for m in ambient]
        return cls(standard_embedding([1], ambient, mult, field, unital=True), star)

    @property
    def shape(self) -> Shape:
        return self.hom.src

    @property
    def ambient(self) -> Shape:
        return self.hom.tgt

    @property
    def field(self):
        return self.hom.field

    def unit(self) -> Element:
        return self.hom.one_image()

    def push(self, X: Element) -> Element:
        return self.hom(X)

    def pull(self, x: Element) -> Element:
        """Coordinates of x; raises :class:`NotInSubalgebra`."""
        if x.shape != self.ambient:
            raise ShapeMismatch(f"ambient {self.ambient}, got {x.shape}")
        h = self.hom
        if h.frames_square and x.is_identity():
            return Element.identity(h.src, self.field)
        blocks = []
        for t in range(len(h.src)):
            b = next(b for b, d in enumerate(h.dims[t]) if d)
            blocks.append(h.coordinates(x.blocks[b], t, b))
        X = Element(h.src, self.field, blocks)
        if h(X) != x:
            raise NotInSubalgebra("element is not in the subalgebra")
        return X

    def contains(self, x: Element) -> bool:
        try:
            self.pull(x)
            return True
        except NotInSubalgebra:
            return False

    def induced_rank(self, N: PseudoRank) -> PseudoRank:
        """Pseudo-rank on the standard shape induced through the hom (normalized by N(1_A))."""
        total = N(self.unit())
        w = [N(self.hom.unit_image(t, 0, 0)) * n / total for t, n in enumerate(self.shape)]
        return PseudoRank(self.shape, w)

    def __repr__(self):
        return f"Subalgebra({self.shape} in {self.ambient})"


__all__ += ["coordinate_hom", "direct_sum", "Subalgebra"]
