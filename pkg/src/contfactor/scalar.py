"""Exact coefficient fields with involution.

Three fields are supported:

* ``QQ``   rationals, identity involution (positive definite)
* ``QQI``  Gaussian rationals a + b*i, complex conjugation (positive definite)
* ``GF(p)`` prime fields, identity involution (not positive definite)

Rationals are :class:`gmpy2.mpq` values (they mix freely with
:class:`fractions.Fraction`, which is used for ranks). Gaussian rationals
(with mpq parts) and prime-field residues are small immutable classes
supporting the usual operators, so generic linear algebra can be written once
with ``+ - * /``.
"""
from __future__ import annotations

import random
from fractions import Fraction
from functools import lru_cache

from gmpy2 import mpq, mpz

MPQ = type(mpq())
RATIONAL = (int, Fraction, MPQ, type(mpz()))


def _q(x):
    if type(x) is MPQ:
        return x
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    return mpq(x)


class FieldMismatch(TypeError):
    """Raised when a scalar is used with a field it does not belong to."""


_ZERO = mpq(0)


class GaussQ:
    """Immutable Gaussian rational ``re + im*i`` with mpq parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        object.__setattr__(self, "re", _q(re))
        object.__setattr__(self, "im", _q(im))

    @classmethod
    def _raw(cls, re, im):
        z = object.__new__(cls)
        object.__setattr__(z, "re", re)
        object.__setattr__(z, "im", im)
        return z

    def __setattr__(self, name, value):
        raise AttributeError("GaussQ is immutable")

    @staticmethod
    def _lift(other):
        if isinstance(other, GaussQ):
            return other
        if isinstance(other, RATIONAL):
            return GaussQ._raw(_q(other), _ZERO)
        return NotImplemented

    def __add__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return GaussQ._raw(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return GaussQ._raw(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return o - self

    def __neg__(self):
        return GaussQ._raw(-self.re, -self.im)

    def __mul__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return GaussQ._raw(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def norm(self):
        return self.re * self.re + self.im * self.im

    def conj(self) -> "GaussQ":
        return GaussQ._raw(self.re, -self.im)

    def __truediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero in Q(i)")
        num = self * o.conj()
        return GaussQ._raw(num.re / n, num.im / n)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return o / self

    def __eq__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return False
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        if self.im == 0:
            return hash(self.re)
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        return f"GaussQ({self.re}, {self.im})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        if self.re == 0:
            return f"{self.im}i"
        sign = "+" if self.im > 0 else "-"
        return f"{self.re}{sign}{abs(self.im)}i"


class GFElem:
    """Residue modulo a prime ``p``, canonical in ``[0, p)``."""

    __slots__ = ("v", "p")

    def __init__(self, v: int, p: int):
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v % p)

    def __setattr__(self, name, value):
        raise AttributeError("GFElem is immutable")

    def _lift(self, other):
        if isinstance(other, GFElem):
            if other.p != self.p:
                raise FieldMismatch(f"GF({self.p}) vs GF({other.p})")
            return other.v
        if isinstance(other, int):
            return other
        if isinstance(other, RATIONAL):
            return int(other.numerator) * pow(int(other.denominator), -1, self.p)
        return NotImplemented

    def __add__(self, other):
        o = self._lift(other)
        return o if o is NotImplemented else GFElem(self.v + o, self.p)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return o if o is NotImplemented else GFElem(self.v - o, self.p)

    def __rsub__(self, other):
        o = self._lift(other)
        return o if o is NotImplemented else GFElem(o - self.v, self.p)

    def __neg__(self):
        return GFElem(-self.v, self.p)

    def __mul__(self, other):
        o = self._lift(other)
        return o if o is NotImplemented else GFElem(self.v * o, self.p)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        if o % self.p == 0:
            raise ZeroDivisionError(f"division by zero in GF({self.p})")
        return GFElem(self.v * pow(o, -1, self.p), self.p)

    def __rtruediv__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return o
        return GFElem(o, self.p) / self

    def __eq__(self, other):
        try:
            o = self._lift(other)
        except FieldMismatch:
            return False
        if o is NotImplemented:
            return False
        return (self.v - o) % self.p == 0

    def __hash__(self):
        return hash((self.v, self.p))

    def __bool__(self):
        return self.v != 0

    def __repr__(self):
        return f"GF{self.p}({self.v})"

    __str__ = lambda self: str(self.v)  # noqa: E731


class InvolutiveField:
    """A coefficient field together with its involution.

    ``kind`` is one of ``"q"``, ``"qi"``, ``"gf"``; ``p`` is the characteristic
    for prime fields.
    """

    def __init__(self, kind: str, p: int | None = None):
        if kind not in ("q", "qi", "gf"):
            raise ValueError(f"unknown field kind {kind!r}")
        if kind == "gf":
            if p is None or p < 2 or not _is_prime(p):
                raise ValueError(f"GF needs a prime modulus, got {p!r}")
        self.kind = kind
        self.p = p if kind == "gf" else None
        self.involution = "gaussian-conjugation" if kind == "qi" else "identity"
        self.positive_definite = kind in ("q", "qi")
        if kind == "q":
            self.zero, self.one = mpq(0), mpq(1)
        elif kind == "qi":
            self.zero, self.one = GaussQ(0), GaussQ(1)
        else:
            self.zero, self.one = GFElem(0, p), GFElem(1, p)

    @property
    def name(self) -> str:
        return {"q": "q", "qi": "qi"}.get(self.kind, f"gf:{self.p}")

    def __eq__(self, other):
        return isinstance(other, InvolutiveField) and (self.kind, self.p) == (other.kind, other.p)

    def __hash__(self):
        return hash((self.kind, self.p))

    def __repr__(self):
        return f"InvolutiveField({self.name})"

    def __call__(self, value=0, im=0):
        """Coerce ``value`` (and an imaginary part for Q(i)) into the field."""
        if self.kind == "q":
            if im:
                raise FieldMismatch("Q has no imaginary unit")
            if isinstance(value, (GaussQ, GFElem)):
                raise FieldMismatch(f"{value!r} is not rational")
            if isinstance(value, Fraction):
                return mpq(value.numerator, value.denominator)
            return mpq(value)
        if self.kind == "qi":
            if isinstance(value, GaussQ):
                return value if not im else value + GaussQ(0, im)
            if isinstance(value, GFElem):
                raise FieldMismatch(f"{value!r} is not in Q(i)")
            return GaussQ(value, im)
        if im:
            raise FieldMismatch("GF(p) has no imaginary unit")
        if isinstance(value, GFElem):
            if value.p != self.p:
                raise FieldMismatch(f"GF({value.p}) element in GF({self.p})")
            return value
        if isinstance(value, GaussQ):
            raise FieldMismatch(f"{value!r} is not in GF({self.p})")
        if isinstance(value, RATIONAL) and not isinstance(value, int):
            return GFElem(int(value.numerator), self.p) / int(value.denominator)
        return GFElem(int(value), self.p)

    def contains(self, x) -> bool:
        if self.kind == "q":
            return isinstance(x, RATIONAL)
        if self.kind == "qi":
            return isinstance(x, GaussQ)
        return isinstance(x, GFElem) and x.p == self.p

    def check(self, x):
        if not self.contains(x):
            raise FieldMismatch(f"{x!r} does not belong to {self.name}")
        return x

    @property
    def i(self):
        if self.kind != "qi":
            raise FieldMismatch("only Q(i) has an imaginary unit")
        return GaussQ(0, 1)

    def random(self, rng: random.Random, height: int = 3, zero_weight: float = 0.0):
        """Random element with small numerators/denominators."""
        if zero_weight and rng.random() < zero_weight:
            return self.zero
        if self.kind == "gf":
            return GFElem(rng.randrange(self.p), self.p)

        def rat():
            return mpq(rng.randint(-height, height), rng.randint(1, height))

        if self.kind == "q":
            return rat()
        return GaussQ(rat(), rat())

    # json -----------------------------------------------------------------
    def to_json(self, x) -> dict:
        self.check(x)
        if self.kind == "q":
            x = Fraction(x)
            return {"kind": "q", "num": str(x.numerator), "den": str(x.denominator)}
        if self.kind == "qi":
            return {
                "kind": "qi",
                "re": {"num": str(x.re.numerator), "den": str(x.re.denominator)},
                "im": {"num": str(x.im.numerator), "den": str(x.im.denominator)},
            }
        return {"kind": "gf", "p": str(self.p), "v": str(x.v)}

    def from_json(self, obj: dict):
        kind = obj.get("kind")
        if kind != self.kind:
            raise FieldMismatch(f"scalar of kind {kind!r} in field {self.name}")
        if kind == "q":
            return mpq(int(obj["num"]), int(obj["den"]))
        if kind == "qi":
            re, im = obj["re"], obj["im"]
            return GaussQ(mpq(int(re["num"]), int(re["den"])), mpq(int(im["num"]), int(im["den"])))
        if int(obj["p"]) != self.p:
            raise FieldMismatch(f"GF({obj['p']}) scalar in GF({self.p})")
        return GFElem(int(obj["v"]), self.p)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


QQ = InvolutiveField("q")
QQI = InvolutiveField("qi")


@lru_cache(maxsize=None)
def GF(p: int) -> InvolutiveField:
    return InvolutiveField("gf", p)


def parse_field(spec: str) -> InvolutiveField:
    """Parse the CLI field syntax ``q``, ``qi`` or ``gf:p``."""
    if spec == "q":
        return QQ
    if spec == "qi":
        return QQI
    if spec.startswith("gf:"):
        return GF(int(spec[3:]))
    raise ValueError(f"bad field spec {spec!r}; expected q, qi or gf:p")


def field_of(x) -> InvolutiveField:
    if isinstance(x, GaussQ):
        return QQI
    if isinstance(x, GFElem):
        return GF(x.p)
    if isinstance(x, RATIONAL):
        return QQ
    raise FieldMismatch(f"{x!r} is not a supported scalar")


def involute(x, f: InvolutiveField):
    f.check(x)
    if f.kind == "qi":
        return x.conj()
    return x


def check_positive_definite(xs, f: InvolutiveField) -> str:
    """Evaluate sum(x* x) over ``xs``.

    Returns ``"zero-sum-with-nonzero-entry"`` when the sum vanishes although
    some entry is nonzero, and ``"consistent"`` otherwise.
    """
    total = f.zero
    for x in xs:
        total = total + involute(x, f) * x
    if total == 0 and any(x != 0 for x in xs):
        return "zero-sum-with-nonzero-entry"
    return "consistent"
