"""Exact arithmetic: rationals, truncated multivariate polynomials, multinomials.

Scalars are plain Python ints or :class:`gmpy2.mpq`. A :class:`Poly` lives in a
:class:`PolyRing` that fixes the variable names, a truncation degree per
variable (terms above it are dropped, which is the quotient by the monomial
ideal and therefore still a ring homomorphism) and a hard cap per variable
(the number of ground atoms of the predicate the variable tracks). Reaching
past the cap means the engine is double counting atoms, so it raises.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Dict, Iterable, Iterator, Mapping, Sequence, Tuple, Union

from gmpy2 import mpq, mpz

Scalar = Union[int, mpq]


class AlgebraError(ArithmeticError):
    pass


def rational(value) -> mpq:
    """Parse ``value`` (int, str such as ``"3/2"`` or ``"0.25"``, Fraction) exactly."""
    if isinstance(value, str):
        value = Fraction(value.strip())
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    return mpq(value)


def is_scalar(x) -> bool:
    return not isinstance(x, Poly)


def normalize_scalar(x: Scalar) -> Scalar:
    """Collapse integral mpq values to int so results print and compare cleanly."""
    if isinstance(x, type(mpq())) and x.denominator == 1:
        return int(x.numerator)
    if isinstance(x, type(mpz())):
        return int(x)
    return x


def to_fraction(x: Scalar) -> Fraction:
    x = mpq(x)
    return Fraction(int(x.numerator), int(x.denominator))


def multinomial(counts: Sequence[int]) -> int:
    """|k|! / prod(k_i!) computed as a product of binomials."""
    if any(c < 0 for c in counts):
        raise ValueError(f"negative entry in {tuple(counts)}")
    total = 0
    result = 1
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def power(base, exponent: int):
    # Python already gives 0 ** 0 == 1 for ints; mpq follows the same rule.
    if exponent == 0:
        return 1
    return base ** exponent


class PolyRing:
    """Variable set shared by all polynomials of one engine run.

    Exponent vectors are packed into a single int, ``width`` bits per variable,
    so that adding two packed keys adds the exponents field-wise without carry.
    Overflow past the truncation degree (and past the hard cap) is detected
    with one addition and a mask per check.
    """

    __slots__ = ("names", "limits", "caps", "width", "_index", "_trunc_add",
                 "_cap_add", "_high", "_field")

    def __init__(self, names: Sequence[str], limits: Sequence[int] | None = None,
                 caps: Sequence[int] | None = None):
        self.names = tuple(names)
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate variable names in {self.names}")
        n = len(self.names)
        caps = tuple(caps) if caps is not None else (1 << 20,) * n
        limits = tuple(limits) if limits is not None else caps
        if len(caps) != n or len(limits) != n:
            raise ValueError("limits and caps must match the variable count")
        if any(l < 0 or l > c for l, c in zip(limits, caps)):
            raise ValueError(f"truncation limits {limits} must lie within caps {caps}")
        self.caps = caps
        self.limits = limits
        self._index = {name: i for i, name in enumerate(self.names)}
        self.width = max([c.bit_length() + 2 for c in caps], default=2)
        w = self.width
        half = 1 << (w - 1)
        self._field = (1 << w) - 1
        self._high = sum(half << (w * i) for i in range(n))
        self._trunc_add = sum((half - 1 - l) << (w * i) for i, l in enumerate(limits))
        self._cap_add = sum((half - 1 - c) << (w * i) for i, c in enumerate(caps))

    def __repr__(self) -> str:
        parts = ", ".join(f"{v}<={l}" for v, l in zip(self.names, self.limits))
        return f"PolyRing({parts})"

    def __eq__(self, other) -> bool:
        return (isinstance(other, PolyRing) and self.names == other.names
                and self.limits == other.limits and self.caps == other.caps)

    def __hash__(self) -> int:
        return hash((self.names, self.limits, self.caps))

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown polynomial variable {name!r}") from None

    def pack(self, exponents: Sequence[int]) -> int:
        key = 0
        for i, e in enumerate(exponents):
            if e < 0:
                raise AlgebraError("negative exponent")
            if e > self.caps[i]:
                raise AlgebraError(
                    f"degree {e} of {self.names[i]} exceeds cap {self.caps[i]}")
            key |= e << (self.width * i)
        return key

    def unpack(self, key: int) -> Tuple[int, ...]:
        w, f = self.width, self._field
        return tuple((key >> (w * i)) & f for i in range(len(self.names)))

    def truncated(self, key: int) -> bool:
        return bool((key + self._trunc_add) & self._high)

    def check_cap(self, key: int) -> None:
        if (key + self._cap_add) & self._high:
            exps = self.unpack(key)
            bad = [f"{v}^{e} > cap {c}" for v, e, c in zip(self.names, exps, self.caps) if e > c]
            raise AlgebraError("polynomial degree cap exceeded: " + ", ".join(bad))

    def var(self, name: str) -> "Poly":
        exps = [0] * len(self.names)
        exps[self.index(name)] = 1
        return Poly(self, {self.pack(exps): 1})

    def const(self, c: Scalar) -> "Poly":
        return Poly(self, {0: c} if c else {})

    def from_terms(self, terms: Mapping[Tuple[int, ...], Scalar]) -> "Poly":
        out: Dict[int, Scalar] = {}
        for exps, c in terms.items():
            if c:
                key = self.pack(exps)
                if not self.truncated(key):
                    out[key] = out.get(key, 0) + c
        return Poly(self, {k: v for k, v in out.items() if v})

    def without(self, name: str) -> "PolyRing":
        i = self.index(name)
        return PolyRing(self.names[:i] + self.names[i + 1:],
                        self.limits[:i] + self.limits[i + 1:],
                        self.caps[:i] + self.caps[i + 1:])


class Poly:
    """Sparse polynomial with exact coefficients over a :class:`PolyRing`."""

    __slots__ = ("ring", "terms")

    def __init__(self, ring: PolyRing, terms: Dict[int, Scalar]):
        self.ring = ring
        self.terms = terms

    # -- construction helpers -------------------------------------------------
    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.ring is not self.ring and other.ring != self.ring:
                raise AlgebraError("polynomials from different rings")
            return other
        return self.ring.const(other)

    # -- arithmetic -------------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Poly):
            if not other:
                return self
            terms = dict(self.terms)
            v = terms.get(0, 0) + other
            if v:
                terms[0] = v
            else:
                terms.pop(0, None)
            return Poly(self.ring, terms)
        other = self._coerce(other)
        terms = dict(self.terms)
        for k, c in other.terms.items():
            v = terms.get(k, 0) + c
            if v:
                terms[k] = v
            else:
                del terms[k]
        return Poly(self.ring, terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.ring, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            if not other:
                return Poly(self.ring, {})
            if other == 1:
                return self
            return Poly(self.ring, {k: c * other for k, c in self.terms.items()})
        other = self._coerce(other)
        a, b = self.terms, other.terms
        if len(a) < len(b):
            a, b = b, a
        if len(b) == 1:
            ((kb, cb),) = b.items()
            if kb == 0:
                return Poly(self.ring, {k: c * cb for k, c in a.items()})
        ring = self.ring
        trunc, high, cap = ring._trunc_add, ring._high, ring._cap_add
        out: Dict[int, Scalar] = {}
        get = out.get
        for kb, cb in b.items():
            for ka, ca in a.items():
                s = ka + kb
                if (s + trunc) & high:
                    if (s + cap) & high:
                        ring.check_cap(s)
                    continue
                out[s] = get(s, 0) + ca * cb
        return Poly(ring, {k: v for k, v in out.items() if v})

    __rmul__ = __mul__

    def __pow__(self, exponent: int):
        if exponent < 0:
            raise AlgebraError("negative power of a polynomial")
        result = self.ring.const(1)
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            exponent >>= 1
            if exponent:
                base = base * base
        return result

    def __truediv__(self, other):
        if isinstance(other, Poly):
            if other.is_constant():
                other = other.constant_term()
            else:
                raise AlgebraError("polynomial division is not supported")
        inv = 1 / mpq(other)
        return self * inv

    # -- comparison -----------------------------------------------------------
    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.ring.names == other.ring.names and self.terms == other.terms
        if len(self.terms) == 0:
            return other == 0
        return len(self.terms) == 1 and 0 in self.terms and self.terms[0] == other

    def __hash__(self) -> int:
        return hash((self.ring.names, frozenset(self.terms.items())))

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- inspection -----------------------------------------------------------
    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and 0 in self.terms)

    def constant_term(self) -> Scalar:
        return self.terms.get(0, 0)

    def items(self) -> Iterator[Tuple[Tuple[int, ...], Scalar]]:
        """Yield ``(exponent tuple, coefficient)`` in a deterministic order."""
        for k in sorted(self.terms):
            yield self.ring.unpack(k), self.terms[k]

    def degree(self, name: str) -> int:
        i = self.ring.index(name)
        return max((e[i] for e, _ in self.items()), default=-1)

    def evaluate(self, values: Mapping[str, Scalar]) -> Scalar:
        total: Scalar = 0
        names = self.ring.names
        for exps, c in self.items():
            term = c
            for name, e in zip(names, exps):
                if e:
                    term = term * power(values[name], e)
            total += term
        return total

    def substitute(self, name: str, value: Scalar):
        """Replace one variable by a scalar; drops it from the ring."""
        i = self.ring.index(name)
        sub_ring = self.ring.without(name)
        out: Dict[Tuple[int, ...], Scalar] = {}
        for exps, c in self.items():
            rest = exps[:i] + exps[i + 1:]
            out[rest] = out.get(rest, 0) + c * power(value, exps[i])
        return collapse(sub_ring.from_terms(out))

    def __repr__(self) -> str:
        return f"Poly({self})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        names = self.ring.names
        for exps, c in sorted(self.items(), key=lambda t: (-sum(t[0]), t[0])):
            mono = "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(names, exps) if e)
            c = normalize_scalar(c)
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append("-" + mono)
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")


def collapse(x):
    """Return a scalar when a polynomial has no variables left or is constant."""
    if isinstance(x, Poly):
        if not x.ring.names or x.is_constant():
            return normalize_scalar(x.constant_term())
        return x
    return normalize_scalar(x)


def poly_coeff(e, var: str, degree: int):
    """Coefficient of ``var**degree`` in ``e`` with ``var`` eliminated.

    Scalars are treated as degree-0 polynomials in any variable.
    """
    if not isinstance(e, Poly):
        return normalize_scalar(e) if degree == 0 else 0
    i = e.ring.index(var)
    sub_ring = e.ring.without(var)
    out: Dict[Tuple[int, ...], Scalar] = {}
    for exps, c in e.items():
        if exps[i] == degree:
            out[exps[:i] + exps[i + 1:]] = c
    return collapse(sub_ring.from_terms(out))


def coefficients(e, var: str) -> Dict[int, object]:
    """All coefficients of ``e`` viewed as a polynomial in ``var``."""
    if not isinstance(e, Poly):
        return {0: normalize_scalar(e)} if e else {}
    i = e.ring.index(var)
    degrees = sorted({exps[i] for exps, _ in e.items()})
    return {d: poly_coeff(e, var, d) for d in degrees}


def exact_sum(values: Iterable) -> object:
    total = 0
    for v in values:
        total = total + v
    return total
