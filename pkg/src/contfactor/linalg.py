"""Exact dense and sparse linear algebra over the supported fields.

Dense matrices are lists of rows of field values. Rank is computed by
fraction-free (Bareiss) elimination after clearing denominators, preceded by a
rank computation modulo a large prime: the modular rank is a lower bound, so a
full modular rank settles the question without the exact pass.

:class:`SMat` is a sparse matrix (dict of rows). Its rank splits the matrix
into connected components of the row/column incidence graph and eliminates
each component separately, which keeps the huge but very structured elements
of the chain simulation cheap.
"""
from __future__ import annotations

from fractions import Fraction
from math import lcm

from .scalar import GaussQ, GFElem, InvolutiveField, QQ

_P_MOD = 2305843009213693973  # prime, = 1 mod 4
_SQRT_M1 = 1035093963448091331  # sqrt(-1) mod _P_MOD


# ---------------------------------------------------------------------------
# dense helpers
# ---------------------------------------------------------------------------

def zeros(r: int, c: int, f: InvolutiveField):
    return [[f.zero] * c for _ in range(r)]


def identity(n: int, f: InvolutiveField):
    m = zeros(n, n, f)
    for i in range(n):
        m[i][i] = f.one
    return m


def matmul(a, b, f: InvolutiveField):
    if not a:
        return []
    inner = len(b)
    cols = len(b[0]) if b else 0
    out = []
    for row in a:
        acc = [f.zero] * cols
        for k in range(inner):
            x = row[k]
            if x:
                bk = b[k]
                for j in range(cols):
                    y = bk[j]
                    if y:
                        acc[j] = acc[j] + x * y
        out.append(acc)
    return out


def rref(m, f: InvolutiveField):
    """Reduced row echelon form. Returns ``(R, pivot_columns)``."""
    a = [list(row) for row in m]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = f.one / a[r][c]
        a[r] = [x * inv if x else x for x in a[r]]
        for i in range(rows):
            if i != r and a[i][c]:
                t = a[i][c]
                ar = a[r]
                a[i] = [x - t * y if y else x for x, y in zip(a[i], ar)]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return a, pivots


def rank_factorization(m, f: InvolutiveField):
    """``m = C @ R`` with C the pivot columns of m and R the nonzero rref rows."""
    red, pivots = rref(m, f)
    rk = len(pivots)
    c = [[row[j] for j in pivots] for row in m]
    return c, red[:rk], pivots


def nullspace(m, f: InvolutiveField):
    """Basis (list of column vectors) of ``{v : m v = 0}``."""
    cols = len(m[0]) if m else 0
    red, pivots = rref(m, f)
    free = [j for j in range(cols) if j not in pivots]
    basis = []
    for j in free:
        v = [f.zero] * cols
        v[j] = f.one
        for r, pc in enumerate(pivots):
            if red[r][j]:
                v[pc] = -red[r][j]
        basis.append(v)
    return basis


def inverse(m, f: InvolutiveField):
    n = len(m)
    aug = [list(row) + ident for row, ident in zip(m, identity(n, f))]
    red, pivots = rref(aug, f)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return [row[n:] for row in red]


def solve(a, b, f: InvolutiveField):
    """One solution X of ``a X = b`` or None (b is a matrix)."""
    rows = len(a)
    ncols_a = len(a[0]) if rows else 0
    ncols_b = len(b[0]) if b else 0
    aug = [list(a[i]) + list(b[i]) for i in range(rows)]
    red, pivots = rref(aug, f)
    if any(p >= ncols_a for p in pivots):
        return None
    x = zeros(ncols_a, ncols_b, f)
    for r, pc in enumerate(pivots):
        x[pc] = red[r][ncols_a:]
    return x


def transpose(m):
    return [list(col) for col in zip(*m)] if m else []


def conj_transpose(m, f: InvolutiveField):
    if f.kind == "qi":
        return [[x.conj() for x in col] for col in zip(*m)] if m else []
    return transpose(m)


def dense_equal(a, b) -> bool:
    return len(a) == len(b) and all(len(x) == len(y) and all(u == v for u, v in zip(x, y)) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# rank: modular pre-pass + Bareiss
# ---------------------------------------------------------------------------

def _rank_mod(a, p: int) -> int:
    a = [[x % p for x in row] for row in a]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = pow(a[r][c], -1, p)
        ar = a[r]
        for i in range(r + 1, rows):
            t = a[i][c]
            if t:
                t = t * inv % p
                a[i] = [(x - t * y) % p for x, y in zip(a[i], ar)]
        r += 1
        if r == rows:
            break
    return r


def _bareiss_rank_int(a) -> int:
    """Fraction-free elimination on an integer matrix (modified in place)."""
    rows = len(a)
    cols = len(a[0]) if rows else 0
    prev = 1
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pv = a[r][c]
        ar = a[r]
        for i in range(r + 1, rows):
            ai = a[i]
            t = ai[c]
            for j in range(c + 1, cols):
                ai[j] = (ai[j] * pv - t * ar[j]) // prev
            ai[c] = 0
        prev = pv
        r += 1
        if r == rows:
            break
    return r


def _gmul(x, y):
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def _gdiv_exact(x, y):
    n = y[0] * y[0] + y[1] * y[1]
    num = _gmul(x, (y[0], -y[1]))
    assert num[0] % n == 0 and num[1] % n == 0, "inexact Gaussian division"
    return (num[0] // n, num[1] // n)


def _bareiss_rank_gauss(a) -> int:
    """Fraction-free elimination over Z[i]; entries are (re, im) int pairs."""
    rows = len(a)
    cols = len(a[0]) if rows else 0
    prev = (1, 0)
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if a[i][c] != (0, 0)), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        pv = a[r][c]
        ar = a[r]
        for i in range(r + 1, rows):
            ai = a[i]
            t = ai[c]
            for j in range(c + 1, cols):
                u = _gmul(ai[j], pv)
                v = _gmul(t, ar[j])
                ai[j] = _gdiv_exact((u[0] - v[0], u[1] - v[1]), prev)
            ai[c] = (0, 0)
        prev = pv
        r += 1
        if r == rows:
            break
    return r


def _integerize_q(m):
    out = []
    for row in m:
        d = 1
        for x in row:
            if x:
                d = lcm(d, Fraction(x).denominator)
        out.append([int(Fraction(x) * d) for x in row])
    return out


def _integerize_qi(m):
    out = []
    for row in m:
        d = 1
        for x in row:
            if x:
                d = lcm(d, x.re.denominator, x.im.denominator)
        out.append([(int(x.re * d), int(x.im * d)) for x in row])
    return out


def dense_rank(m, f: InvolutiveField, prepass: bool = True) -> int:
    """Exact rank of a dense matrix."""
    if not m or not m[0]:
        return 0
    full = min(len(m), len(m[0]))
    if f.kind == "gf":
        return _rank_mod([[x.v for x in row] for row in m], f.p)
    if f.kind == "q":
        ints = _integerize_q(m)
        if prepass and _rank_mod(ints, _P_MOD) == full:
            return full
        return _bareiss_rank_int(ints)
    gints = _integerize_qi(m)
    if prepass:
        reduced = [[re + im * _SQRT_M1 for re, im in row] for row in gints]
        if _rank_mod(reduced, _P_MOD) == full:
            return full
    return _bareiss_rank_gauss(gints)


# ---------------------------------------------------------------------------
# sparse matrices
# ---------------------------------------------------------------------------

class SMat:
    """Immutable-by-convention sparse matrix: ``rows[r][c] = value`` (nonzero)."""

    __slots__ = ("nrows", "ncols", "rows")

    def __init__(self, nrows: int, ncols: int, rows: dict | None = None):
        self.nrows = nrows
        self.ncols = ncols
        self.rows = rows if rows is not None else {}

    # construction ----------------------------------------------------------
    @classmethod
    def from_dense(cls, m, ncols: int | None = None):
        nr = len(m)
        nc = ncols if ncols is not None else (len(m[0]) if nr else 0)
        rows = {}
        for i, row in enumerate(m):
            d = {j: x for j, x in enumerate(row) if x}
            if d:
                rows[i] = d
        return cls(nr, nc, rows)

    @classmethod
    def identity(cls, n: int, one):
        return cls(n, n, {i: {i: one} for i in range(n)})

    @classmethod
    def diagonal(cls, n: int, idx, one):
        return cls(n, n, {i: {i: one} for i in idx})

    @classmethod
    def unit(cls, n: int, i: int, j: int, one, ncols: int | None = None):
        return cls(n, n if ncols is None else ncols, {i: {j: one}})

    @classmethod
    def from_entries(cls, nrows: int, ncols: int, entries):
        rows: dict = {}
        for r, c, v in entries:
            if not v:
                continue
            row = rows.setdefault(r, {})
            s = row.get(c)
            s = v if s is None else s + v
            if s:
                row[c] = s
            else:
                del row[c]
                if not row:
                    del rows[r]
        return cls(nrows, ncols, rows)

    def to_dense(self, zero):
        out = [[zero] * self.ncols for _ in range(self.nrows)]
        for r, row in self.rows.items():
            for c, v in row.items():
                out[r][c] = v
        return out

    # inspection ------------------------------------------------------------
    def entries(self):
        for r, row in self.rows.items():
            for c, v in row.items():
                yield r, c, v

    @property
    def nnz(self) -> int:
        return sum(len(row) for row in self.rows.values())

    def get(self, r: int, c: int, zero=0):
        return self.rows.get(r, {}).get(c, zero)

    def is_zero(self) -> bool:
        return not self.rows

    def is_identity(self, one) -> bool:
        if self.nrows != self.ncols or len(self.rows) != self.nrows:
            return False
        return all(len(row) == 1 and row.get(r) == one for r, row in self.rows.items())

    def __eq__(self, other):
        if not isinstance(other, SMat):
            return NotImplemented
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            return False
        if self.rows.keys() != other.rows.keys():
            return False
        for r, row in self.rows.items():
            orow = other.rows[r]
            if row.keys() != orow.keys():
                return False
            if any(v != orow[c] for c, v in row.items()):
                return False
        return True

    __hash__ = None

    def __repr__(self):
        return f"SMat({self.nrows}x{self.ncols}, nnz={self.nnz})"

    # arithmetic ------------------------------------------------------------
    def _check_same(self, other):
        if (self.nrows, self.ncols) != (other.nrows, other.ncols):
            raise ValueError(f"shape mismatch {self.nrows}x{self.ncols} vs {other.nrows}x{other.ncols}")

    def __add__(self, other):
        self._check_same(other)
        rows = {r: dict(row) for r, row in self.rows.items()}
        for r, orow in other.rows.items():
            row = rows.get(r)
            if row is None:
                rows[r] = dict(orow)
                continue
            for c, v in orow.items():
                s = row.get(c)
                s = v if s is None else s + v
                if s:
                    row[c] = s
                else:
                    del row[c]
            if not row:
                del rows[r]
        return SMat(self.nrows, self.ncols, rows)

    def __neg__(self):
        return SMat(self.nrows, self.ncols, {r: {c: -v for c, v in row.items()} for r, row in self.rows.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, s):
        if not s:
            return SMat(self.nrows, self.ncols)
        return SMat(self.nrows, self.ncols, {r: {c: s * v for c, v in row.items()} for r, row in self.rows.items()})

    def __matmul__(self, other):
        if self.ncols != other.nrows:
            raise ValueError(f"cannot multiply {self.nrows}x{self.ncols} by {other.nrows}x{other.ncols}")
        orows = other.rows
        rows = {}
        for r, row in self.rows.items():
            acc: dict = {}
            for k, a in row.items():
                brow = orows.get(k)
                if brow is None:
                    continue
                for c, b in brow.items():
                    s = acc.get(c)
                    acc[c] = a * b if s is None else s + a * b
            acc = {c: v for c, v in acc.items() if v}
            if acc:
                rows[r] = acc
        return SMat(self.nrows, other.ncols, rows)

    def transpose(self):
        rows: dict = {}
        for r, row in self.rows.items():
            for c, v in row.items():
                rows.setdefault(c, {})[r] = v
        return SMat(self.ncols, self.nrows, rows)

    def map(self, fn):
        return SMat(self.nrows, self.ncols, {r: {c: fn(v) for c, v in row.items()} for r, row in self.rows.items()})

    def kron_left_identity(self, copies: int):
        """``I_copies (x) self``: ``copies`` diagonal copies of this matrix."""
        if copies == 1:
            return self
        rows = {}
        nr, nc = self.nrows, self.ncols
        for t in range(copies):
            ro, co = t * nr, t * nc
            for r, row in self.rows.items():
                rows[ro + r] = {co + c: v for c, v in row.items()}
        return SMat(nr * copies, nc * copies, rows)

    def kron_right_identity(self, g: int):
        """``self (x) I_g``."""
        if g == 1:
            return self
        rows = {}
        for r, row in self.rows.items():
            for t in range(g):
                rows[r * g + t] = {c * g + t: v for c, v in row.items()}
        return SMat(self.nrows * g, self.ncols * g, rows)

    def submatrix(self, row_idx, col_idx):
        cpos = {c: j for j, c in enumerate(col_idx)}
        rows = {}
        for i, r in enumerate(row_idx):
            row = self.rows.get(r)
            if not row:
                continue
            d = {cpos[c]: v for c, v in row.items() if c in cpos}
            if d:
                rows[i] = d
        return SMat(len(row_idx), len(col_idx), rows)

    def embed(self, row_idx, col_idx, nrows: int, ncols: int):
        """Place this matrix at the given row/column positions of a larger one."""
        rows = {}
        for r, row in self.rows.items():
            rows[row_idx[r]] = {col_idx[c]: v for c, v in row.items()}
        return SMat(nrows, ncols, rows)

    # rank --------------------------------------------------------------------
    def components(self):
        """Connected components of the incidence graph as (rows, cols) lists."""
        off = self.nrows
        parent: dict = {}

        def find(x):
            root = x
            while parent[root] != root:
                root = parent[root]
            while parent[x] != root:
                parent[x], x = root, parent[x]
            return root

        for r, row in self.rows.items():
            parent.setdefault(r, r)
            for c in row:
                ck = off + c
                if ck not in parent:
                    parent[ck] = r
                    continue
                a, b = find(r), find(ck)
                if a != b:
                    parent[b] = a
        groups: dict = {}
        for node in parent:
            g = groups.get(find(node))
            if g is None:
                g = groups[find(node)] = ([], [])
            if node < off:
                g[0].append(node)
            else:
                g[1].append(node - off)
        return [(sorted(rs), sorted(cs)) for rs, cs in groups.values()]

    def rank(self, f: InvolutiveField) -> int:
        total = 0
        for rs, cs in self.components():
            if len(rs) == 1 or len(cs) == 1:
                total += 1
                continue
            total += dense_rank(self.submatrix(rs, cs).to_dense(f.zero), f)
        return total


__all__ = [
    "SMat", "dense_rank", "rref", "rank_factorization", "nullspace", "inverse", "solve",
    "matmul", "identity", "zeros", "transpose", "conj_transpose", "dense_equal", "QQ",
]
