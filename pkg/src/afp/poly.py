"""Complex polynomials with ascending coefficient storage.

Text format: comma-separated coefficients, lowest degree first, each written
as ``a``, ``bi`` or ``a+bi`` (``"0,1"`` is ``z``; ``"1,0,0,2i"`` is
``1 + 2i z^3``).
"""

from __future__ import annotations

import re
from typing import Iterable

import numpy as np

_BARE_I = re.compile(r"(?<![0-9.])i")


class PolyParseError(ValueError):
    pass


def _parse_coefficient(token: str) -> complex:
    t = token.strip().replace(" ", "")
    if not t:
        raise PolyParseError("empty coefficient")
    t = _BARE_I.sub("1i", t).replace("i", "j")
    try:
        return complex(t)
    except ValueError as exc:
        raise PolyParseError(f"cannot parse coefficient {token!r}") from exc


def _format_coefficient(c: complex) -> str:
    re_, im = float(c.real), float(c.imag)
    if im == 0:
        return repr(re_)
    if re_ == 0:
        return f"{im!r}i"
    sign = "+" if im >= 0 else "-"
    return f"{re_!r}{sign}{abs(im)!r}i"


class Poly:
    """Polynomial ``sum_k c_k z^k``; trailing zeros are stripped on construction."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[complex] = ()):
        c = np.array(list(coeffs), dtype=complex)
        nz = np.flatnonzero(c)
        self.coeffs = c[: nz[-1] + 1] if nz.size else c[:0]

    @classmethod
    def parse(cls, text: str) -> "Poly":
        return cls(_parse_coefficient(tok) for tok in text.split(","))

    def to_text(self) -> str:
        if self.is_zero():
            return "0"
        return ",".join(_format_coefficient(c) for c in self.coeffs)

    @classmethod
    def monomial(cls, k: int, c: complex = 1.0) -> "Poly":
        return cls([0] * k + [c])

    @property
    def degree(self) -> int:
        """Degree; ``-1`` for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    def scale(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if len(self.coeffs) else 0.0

    def trimmed(self, rtol: float) -> "Poly":
        """Drop trailing coefficients below ``rtol`` times the largest one."""
        c = self.coeffs.copy()
        s = self.scale()
        while len(c) and abs(c[-1]) <= rtol * s:
            c = c[:-1]
        return Poly(c)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def derivative(self) -> "Poly":
        if len(self.coeffs) <= 1:
            return Poly()
        return Poly(self.coeffs[1:] * np.arange(1, len(self.coeffs)))

    def __add__(self, other: "Poly") -> "Poly":
        m = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(m, complex)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return Poly(a)

    def __neg__(self) -> "Poly":
        return Poly(-self.coeffs)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            if self.is_zero() or other.is_zero():
                return Poly()
            return Poly(np.convolve(self.coeffs, other.coeffs))
        return Poly(self.coeffs * complex(other))

    __rmul__ = __mul__

    def divmod(self, other: "Poly") -> tuple["Poly", "Poly"]:
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        r = self.coeffs.copy()
        d = other.coeffs
        dq = len(r) - len(d)
        if dq < 0:
            return Poly(), Poly(r)
        q = np.zeros(dq + 1, complex)
        for k in range(dq, -1, -1):
            q[k] = r[k + len(d) - 1] / d[-1]
            r[k: k + len(d)] -= q[k] * d
        return Poly(q), Poly(r[: len(d) - 1])

    def roots(self) -> np.ndarray:
        if self.degree < 1:
            return np.zeros(0, complex)
        return np.roots(self.coeffs[::-1])

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and np.array_equal(self.coeffs, other.coeffs)

    def __repr__(self) -> str:
        return f"Poly({self.to_text()!r})"


def gcd(a: Poly, b: Poly, rtol: float = 1e-9) -> Poly:
    """Monic GCD by the Euclidean algorithm with a relative remainder tolerance.

    A remainder counts as zero once all its coefficients fall below ``rtol``
    times the size of the dividend; both operands are rescaled to unit size at
    each step so the tolerance stays meaningful.
    """
    if a.is_zero() and b.is_zero():
        return Poly()
    if a.degree < b.degree:
        a, b = b, a
    a = a * (1.0 / a.scale())
    if b.is_zero():
        return a * (1.0 / a.coeffs[-1])
    b = b * (1.0 / b.scale())
    while True:
        _, r = a.divmod(b)
        size = max(a.scale(), b.scale())
        if r.is_zero() or r.scale() <= rtol * size:
            return b * (1.0 / b.coeffs[-1])
        # cancellation noise in the top coefficients would fake a higher degree
        c = r.coeffs
        while abs(c[-1]) <= rtol * size:
            c = c[:-1]
        r = Poly(c)
        a, b = b, r * (1.0 / r.scale())
