"""Independent reference computations used to check the package.

Nothing here imports the algorithms under test: ranks go through sympy,
window choices are re-derived by plain scanning with ``Fraction``, and the
norm question is settled by brute-force search over integer squares.
"""
from __future__ import annotations

import math
from fractions import Fraction

import sympy


# ---------------------------------------------------------------------------
# exact ranks
# ---------------------------------------------------------------------------

def _to_sympy(x):
    if hasattr(x, "im"):
        return sympy.Rational(int(x.re.numerator), int(x.re.denominator)) + sympy.I * sympy.Rational(
            int(x.im.numerator), int(x.im.denominator))
    if hasattr(x, "v"):
        raise TypeError("use gf_rank for prime fields")
    q = Fraction(int(x.numerator), int(x.denominator))
    return sympy.Rational(q.numerator, q.denominator)


def sympy_rank(rows) -> int:
    """Rank of a dense matrix of Q or Q(i) entries, computed by sympy."""
    if not rows:
        return 0
    return sympy.Matrix([[_to_sympy(v) for v in r] for r in rows]).rank(simplify=True)


def gf_rank(rows, p: int) -> int:
    """Rank over GF(p) by textbook elimination on plain ints."""
    m = [[int(v.v) % p for v in r] for r in rows]
    rank, col, n = 0, 0, len(m[0]) if m else 0
    while rank < len(m) and col < n:
        piv = next((i for i in range(rank, len(m)) if m[i][col]), None)
        if piv is None:
            col += 1
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = pow(m[rank][col], -1, p)
        m[rank] = [a * inv % p for a in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][col]:
                c = m[i][col]
                m[i] = [(a - c * b) % p for a, b in zip(m[i], m[rank])]
        rank += 1
        col += 1
    return rank


def element_rank_norm(x, weights) -> Fraction:
    """sum_i alpha_i rank(x_i) / n(i) with ranks from sympy."""
    total = Fraction(0)
    for w, block in zip(weights, x.to_dense()):
        if w:
            total += Fraction(w) * Fraction(sympy_rank(block), len(block))
    return total


# ---------------------------------------------------------------------------
# the stabilization constant, rebuilt from the proof's individual estimates
# ---------------------------------------------------------------------------

def k_from_proof_steps(p: int) -> int:
    """Compose the estimates of the inductive argument symbolically.

    With k = K(p-1): the corner iteration leaves z' within
    (2^(p-1) - 1) k + 2^(p-1); the defect of x'_11 is at most
    3 (k+1) 2^p; g is within (k+1) 2^(p+2) of rho(e_11); the first row and
    column of y then sit within the sum of the last two; and y_ij = y_i1 y_1j
    doubles that.
    """
    if p == 1:
        return 4
    k = sympy.Symbol("k")
    z_prime = (2 ** (p - 1) - 1) * k + 2 ** (p - 1)
    x11 = (k + 1) * 2 ** p
    g_vs_x11 = 3 * (k + 1) * 2 ** p
    g = g_vs_x11 + x11
    first_row = sympy.expand(g + z_prime)
    full = sympy.expand(2 * first_row)
    return int(full.subs(k, k_from_proof_steps(p - 1)))


# ---------------------------------------------------------------------------
# norms from Q(i)
# ---------------------------------------------------------------------------

def is_sum_of_two_squares(n: int) -> bool:
    """Brute force: is n = a^2 + b^2 with integers a, b?"""
    if n < 0:
        return False
    a = 0
    while a * a <= n:
        b = math.isqrt(n - a * a)
        if b * b == n - a * a:
            return True
        a += 1
    return False


def is_rational_norm(r: Fraction) -> bool:
    """r = |c|^2 for some c in Q(i) iff num * den is a sum of two integer squares."""
    r = Fraction(r)
    return r > 0 and is_sum_of_two_squares(r.numerator * r.denominator)


# ---------------------------------------------------------------------------
# window choices of the inductive step, coordinate case
# ---------------------------------------------------------------------------

def divisors_by_scan(n: int):
    return [d for d in range(1, n + 1) if n % d == 0]


def first_step_oracle(p: int, q: int, theta: Fraction, n: int, value: Fraction):
    """Smallest divisor q' of n whose rational and integer windows are both nonempty.

    Single family member with r = 1 and N(f_11) = ``value``; the new p'_1 is
    the largest integer of the open integer window. Returns (q', p_1, p'_1, p').
    """
    gap = Fraction(p, q) - theta
    delta = gap / (48 * p)
    divs = divisors_by_scan(n) if n <= 10 ** 6 else sorted(sympy.divisors(n))
    for d in divs:
        p1 = None
        for cand in range(int(value * d), -1, -1):
            if Fraction(cand, d) < value:
                p1 = cand
                break
        if p1 is None or p1 == 0 or not value - Fraction(p1, d) < delta:
            continue
        eps = gap / p
        if not eps * d / 8 > 1:
            continue
        lo = p1 - Fraction(3, 4) * eps * d
        hi = p1 - Fraction(5, 8) * eps * d
        inside = [x for x in range(max(0, math.floor(lo)), math.ceil(hi) + 1) if lo < x < hi]
        if not inside or max(inside) == 0:
            continue
        g = max(inside)
        return d, p1, g, p * g
    return None


def chain_oracle(theta: Fraction, n: int, stages: int):
    """(p_k, q_k) for a coordinate chain: each step sees the single value 1/q."""
    p, q = 1, 1
    ps, qs = [1], [1]
    for _ in range(stages):
        step = first_step_oracle(p, q, theta, n, Fraction(1, q))
        if step is None:
            return ps, qs
        q_new, _, _, p_new = step
        p, q = p_new, q_new
        ps.append(p)
        qs.append(q)
    return ps, qs
