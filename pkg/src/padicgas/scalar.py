"""Dual-mode scalars: exact rationals or IEEE-754 doubles, never silently mixed.

Every closed form in this package is a rational function of u = p^-alpha and
v = p^-d, so exact mode (backed by fractions.Fraction) is available whenever
alpha is an integer.  Float mode covers non-integer alpha.  A positive
infinity is carried as an explicit flag so that confining potentials can
propagate through sums without turning into NaN accidents.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

from .errors import ScalarModeError

EXACT = "exact"
FLOAT = "float"

_RawNumber = Union[int, Fraction, float]


class Scalar:
    """A tagged number: ``mode`` is "exact" (Fraction) or "float" (double).

    Arithmetic between scalars of different modes raises ScalarModeError;
    plain Python ints are accepted on either side because they are exact in
    both representations.
    """

    __slots__ = ("value", "mode", "infinite")

    def __init__(self, value, mode: str, infinite: bool = False):
        if mode not in (EXACT, FLOAT):
            raise ScalarModeError(f"unknown scalar mode {mode!r}")
        self.mode = mode
        self.infinite = infinite
        if infinite:
            self.value = None
        elif mode == EXACT:
            self.value = Fraction(value)
        else:
            self.value = float(value)

    # -- constructors ------------------------------------------------------

    @staticmethod
    def exact(value: Union[int, str, Fraction]) -> "Scalar":
        return Scalar(Fraction(value), EXACT)

    @staticmethod
    def approx(value: float) -> "Scalar":
        return Scalar(float(value), FLOAT)

    @staticmethod
    def of(value: _RawNumber, mode: str) -> "Scalar":
        return Scalar(value, mode)

    @staticmethod
    def zero(mode: str) -> "Scalar":
        return Scalar(0, mode)

    @staticmethod
    def one(mode: str) -> "Scalar":
        return Scalar(1, mode)

    @staticmethod
    def infinity(mode: str) -> "Scalar":
        return Scalar(None, mode, infinite=True)

    # -- mode plumbing -----------------------------------------------------

    def _coerce(self, other) -> "Scalar":
        if isinstance(other, Scalar):
            if other.mode != self.mode:
                raise ScalarModeError(
                    f"cannot combine {self.mode} and {other.mode} scalars"
                )
            return other
        if isinstance(other, int) and not isinstance(other, bool):
            return Scalar(other, self.mode)
        return NotImplemented

    @property
    def is_exact(self) -> bool:
        return self.mode == EXACT

    @property
    def is_infinite(self) -> bool:
        return self.infinite

    def as_fraction(self) -> Fraction:
        if self.infinite or self.mode != EXACT:
            raise ScalarModeError("not a finite exact scalar")
        return self.value

    def __float__(self) -> float:
        if self.infinite:
            return math.inf
        return float(self.value)

    def __bool__(self) -> bool:
        return self.infinite or bool(self.value)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if self.infinite or o.infinite:
            return Scalar.infinity(self.mode)
        return Scalar(self.value + o.value, self.mode)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.infinite:
            raise ArithmeticError("subtraction of +infinity is not supported")
        if self.infinite:
            return Scalar.infinity(self.mode)
        return Scalar(self.value - o.value, self.mode)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o.__sub__(self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if self.infinite or o.infinite:
            finite = o if self.infinite else self
            if finite.infinite or finite.value > 0:
                return Scalar.infinity(self.mode)
            raise ArithmeticError("infinity times a non-positive scalar")
        return Scalar(self.value * o.value, self.mode)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.infinite:
            raise ArithmeticError("division by +infinity is not supported")
        if self.infinite:
            if o.value > 0:
                return Scalar.infinity(self.mode)
            raise ArithmeticError("infinity divided by a non-positive scalar")
        return Scalar(self.value / o.value, self.mode)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o.__truediv__(self)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            raise ScalarModeError("scalar powers take integer exponents")
        if self.infinite:
            if exponent > 0:
                return Scalar.infinity(self.mode)
            raise ArithmeticError("non-positive power of infinity")
        if self.mode == EXACT:
            return Scalar(self.value ** exponent, EXACT)
        return Scalar(self.value ** exponent, FLOAT)

    def __neg__(self):
        if self.infinite:
            raise ArithmeticError("negative infinity is not supported")
        return Scalar(-self.value, self.mode)

    def __abs__(self):
        if self.infinite:
            return Scalar.infinity(self.mode)
        return Scalar(abs(self.value), self.mode)

    # -- comparisons -------------------------------------------------------

    def _cmp_value(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            raise ScalarModeError(f"cannot compare scalar with {type(other)!r}")
        return o

    def __eq__(self, other):
        if not isinstance(other, (Scalar, int)) or isinstance(other, bool):
            return NotImplemented
        o = self._cmp_value(other)
        if self.infinite or o.infinite:
            return self.infinite and o.infinite
        return self.value == o.value

    def __ne__(self, other):
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq

    def __lt__(self, other):
        o = self._cmp_value(other)
        if self.infinite:
            return False
        if o.infinite:
            return True
        return self.value < o.value

    def __le__(self, other):
        o = self._cmp_value(other)
        if o.infinite:
            return True
        if self.infinite:
            return False
        return self.value <= o.value

    def __gt__(self, other):
        o = self._cmp_value(other)
        return o.__lt__(self) if isinstance(other, Scalar) else not self.__le__(other)

    def __ge__(self, other):
        o = self._cmp_value(other)
        return o.__le__(self) if isinstance(other, Scalar) else not self.__lt__(other)

    def __hash__(self):
        if self.infinite:
            return hash((self.mode, "inf"))
        return hash(self.value)

    def __repr__(self):
        if self.infinite:
            return f"Scalar.infinity({self.mode!r})"
        if self.mode == EXACT:
            return f"Scalar.exact('{self.value}')"
        return f"Scalar.approx({self.value!r})"

    # -- serialization -----------------------------------------------------

    def to_json(self):
        """Tagged form: exact scalars as "num/den" strings, floats as numbers."""
        if self.infinite:
            return {"mode": self.mode, "value": "inf"}
        if self.mode == EXACT:
            f = self.value
            text = str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"
            return {"mode": EXACT, "value": text}
        return {"mode": FLOAT, "value": self.value}

    @staticmethod
    def from_json(obj) -> "Scalar":
        mode = obj["mode"]
        value = obj["value"]
        if value == "inf":
            return Scalar.infinity(mode)
        if mode == EXACT:
            return Scalar.exact(Fraction(value))
        return Scalar.approx(float(value))


def p_power(p: int, exponent: int, mode: str) -> Scalar:
    """p^exponent as a Scalar; exact mode keeps it a rational."""
    if mode == EXACT:
        if exponent >= 0:
            return Scalar.exact(Fraction(p ** exponent))
        return Scalar.exact(Fraction(1, p ** (-exponent)))
    return Scalar.approx(float(p) ** exponent)


def tree_sum(values, zero):
    """Deterministic pairwise (binary-tree) reduction.

    For float inputs this fixes the rounding pattern independently of chunking
    or worker count, so parallel and serial evaluations agree bit for bit.
    Works for any addable values (Fraction, float, Scalar).
    """
    items = list(values)
    if not items:
        return zero
    while len(items) > 1:
        nxt = []
        for i in range(0, len(items) - 1, 2):
            nxt.append(items[i] + items[i + 1])
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]
