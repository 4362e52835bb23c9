"""Finite-precision points of Q_p^d, hierarchical lattice cells, seeded sampling.

A coordinate is the window p^-K * m with mantissa m known modulo p^(K+M):
digits cover the exponent range [-K, M).  The norm of a nonzero coordinate is
p^(K - v) with v the p-adic valuation of m.  A zero mantissa means the value
is below the working resolution p^-M; it reports a marker rather than norm 0,
because finite precision can never certify exact equality of points.

Cells of the hierarchical lattice G_l are the cosets of p^l Z_p^d inside the
ball B_L^d; there are exactly p^((L+l)d) of them.  Enumeration order is
deterministic: coordinate mantissas ascend, first coordinate slowest.

All values are immutable after construction and safe for concurrent use.
Sampling is deterministic per (seed, stream); parallel samplers must use
distinct streams, never share one.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CapacityError, DomainError, ParameterError, PrecisionError
from .scalar import EXACT, Scalar

DEFAULT_CELL_CAP = 1 << 20

# mantissa moduli up to this fit comfortably in int64 for vectorized paths
_INT64_SAFE_MODULUS = 1 << 61


class _BelowResolution:
    """Marker returned by norm() when every mantissa is zero."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BELOW_RESOLUTION"

    def __bool__(self):
        return False


BELOW_RESOLUTION = _BelowResolution()


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def _validate_prime(p: int) -> None:
    if not isinstance(p, int) or isinstance(p, bool) or not is_prime(p):
        raise ParameterError(f"p must be a prime integer >= 2, got {p!r}")


def _valuation(m: int, p: int) -> Optional[int]:
    """p-adic valuation of the mantissa; None encodes 'all digits zero'."""
    if m == 0:
        return None
    v = 0
    while m % p == 0:
        v += 1
        m //= p
    return v


@dataclass(frozen=True)
class PadicCoordinate:
    """One coordinate: the value p^-K * m known modulo p^M.

    Invariant: 0 <= m < p^(K+M).  K+M is the digit count; K+M = 0 is allowed
    only as the degenerate representation of a whole ball (zero digits).
    """

    p: int
    K: int
    M: int
    m: int

    def __post_init__(self):
        _validate_prime(self.p)
        if self.M < -self.K:
            raise ParameterError("precision M must satisfy M >= -K")
        modulus = self.p ** (self.K + self.M)
        if not 0 <= self.m < max(modulus, 1):
            raise ParameterError(f"mantissa {self.m} outside [0, p^(K+M))")

    def valuation(self) -> Optional[int]:
        if self.K + self.M == 0:
            return None
        return _valuation(self.m, self.p)

    def norm_exponent(self) -> Optional[int]:
        """e with |x|_p = p^e, or None when below resolution p^-M."""
        v = self.valuation()
        if v is None:
            return None
        return self.K - v

    def norm(self) -> Union[Scalar, _BelowResolution]:
        e = self.norm_exponent()
        if e is None:
            return BELOW_RESOLUTION
        return Scalar.exact(Fraction(self.p) ** e)


@dataclass(frozen=True)
class PadicPoint:
    """A point of Q_p^d with d coordinates sharing (p, K, M).

    ||x||_p = max over coordinate norms, so ||x||_p <= p^K always.
    """

    p: int
    d: int
    K: int
    M: int
    mantissas: Tuple[int, ...]

    def __post_init__(self):
        _validate_prime(self.p)
        if self.d < 1 or len(self.mantissas) != self.d:
            raise ParameterError("mantissa tuple must have length d >= 1")
        if self.M < -self.K:
            raise ParameterError("precision M must satisfy M >= -K")
        modulus = self.p ** (self.K + self.M)
        for m in self.mantissas:
            if not 0 <= m < max(modulus, 1):
                raise ParameterError(f"mantissa {m} outside [0, p^(K+M))")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_values(p: int, values: Sequence[Union[int, Fraction]], K: int = 0,
                    M: int = 12) -> "PadicPoint":
        """Encode rational coordinates whose denominators divide p^K."""
        mantissas = []
        modulus = p ** (K + M)
        for v in values:
            f = Fraction(v) * Fraction(p) ** K
            if f.denominator != 1:
                raise DomainError(f"value {v} is not representable at scale K={K}")
            mantissas.append(int(f) % modulus)
        return PadicPoint(p, len(mantissas), K, M, tuple(mantissas))

    @staticmethod
    def zero(p: int, d: int, K: int = 0, M: int = 12) -> "PadicPoint":
        return PadicPoint(p, d, K, M, (0,) * d)

    def coordinate(self, i: int) -> PadicCoordinate:
        return PadicCoordinate(self.p, self.K, self.M, self.mantissas[i])

    # -- norms -------------------------------------------------------------

    def norm_exponent(self) -> Optional[int]:
        best: Optional[int] = None
        for m in self.mantissas:
            v = _valuation(m, self.p) if self.K + self.M > 0 else None
            if v is not None:
                e = self.K - v
                if best is None or e > best:
                    best = e
        return best

    def norm(self) -> Union[Scalar, _BelowResolution]:
        e = self.norm_exponent()
        if e is None:
            return BELOW_RESOLUTION
        return Scalar.exact(Fraction(self.p) ** e)

    def in_ball(self, L: int) -> bool:
        e = self.norm_exponent()
        return e is None or e <= L

    # -- arithmetic --------------------------------------------------------

    def _check_compatible(self, other: "PadicPoint") -> None:
        if (self.p, self.d, self.K, self.M) != (other.p, other.d, other.K, other.M):
            raise ParameterError("points must share (p, d, K, M)")

    def __sub__(self, other: "PadicPoint") -> "PadicPoint":
        self._check_compatible(other)
        modulus = self.p ** (self.K + self.M)
        mantissas = tuple((a - b) % modulus
                          for a, b in zip(self.mantissas, other.mantissas))
        return PadicPoint(self.p, self.d, self.K, self.M, mantissas)

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {"p": self.p, "d": self.d, "K": self.K, "M": self.M,
                "mantissas": [str(m) for m in self.mantissas]}

    @staticmethod
    def from_json(obj: dict) -> "PadicPoint":
        return PadicPoint(obj["p"], obj["d"], obj["K"], obj["M"],
                          tuple(int(m) for m in obj["mantissas"]))


def subtract(x: PadicPoint, y: PadicPoint) -> PadicPoint:
    """Coordinate-wise difference, exact at the shared precision."""
    return x - y


@dataclass(frozen=True)
class LatticeCell:
    """One coset of p^l Z_p^d inside the ball B_L^d.

    The center is canonical: mantissas lie in [0, p^(L+l)).  Two cells are
    equal iff their canonical centers coincide.
    """

    p: int
    d: int
    L: int
    l: int
    center_mantissas: Tuple[int, ...]

    def __post_init__(self):
        _validate_prime(self.p)
        if self.l < -self.L:
            raise ParameterError("cell depth l must satisfy l >= -L")
        if len(self.center_mantissas) != self.d:
            raise ParameterError("center mantissa tuple must have length d")
        modulus = self.p ** (self.L + self.l)
        for c in self.center_mantissas:
            if not 0 <= c < max(modulus, 1):
                raise ParameterError("cell center mantissa out of range")

    def center(self) -> PadicPoint:
        return PadicPoint(self.p, self.d, self.L, self.l, self.center_mantissas)

    @property
    def volume_exponent(self) -> int:
        """Haar volume of the cell is p^(-l*d)."""
        return -self.l * self.d

    def _check_lattice(self, other: "LatticeCell") -> None:
        if (self.p, self.d, self.L, self.l) != (other.p, other.d, other.L, other.l):
            raise ParameterError("cells must share (p, d, L, l)")

    def distance_exponent(self, other: "LatticeCell") -> Optional[int]:
        """e with ||c_a - c_b||_p = p^e for distinct cells; None for equal cells."""
        self._check_lattice(other)
        modulus = self.p ** (self.L + self.l)
        best: Optional[int] = None
        for a, b in zip(self.center_mantissas, other.center_mantissas):
            v = _valuation((a - b) % modulus, self.p)
            if v is not None:
                e = self.L - v
                if best is None or e > best:
                    best = e
        return best

    def contains(self, x: PadicPoint) -> bool:
        if x.p != self.p or x.d != self.d:
            raise ParameterError("point and cell must share p and d")
        try:
            cell = reduce_to_cell(x, self.l, L=self.L)
        except DomainError:
            return False
        return cell == self

    def subcell_centers(self, depth: int) -> List[PadicPoint]:
        """Centers of the depth-`depth` subcells, in lexicographic order."""
        if depth < self.l:
            raise ParameterError("subcell depth must be >= the cell depth")
        p, d = self.p, self.d
        base = self.p ** (self.L + self.l)
        span = p ** (depth - self.l)
        out = []
        for t in _tuple_counter(span, d):
            mant = tuple(c + base * ti for c, ti in zip(self.center_mantissas, t))
            out.append(PadicPoint(p, d, self.L, depth, mant))
        return out

    def to_json(self) -> dict:
        return {"p": self.p, "d": self.d, "L": self.L, "l": self.l,
                "center_mantissas": [str(c) for c in self.center_mantissas]}

    @staticmethod
    def from_json(obj: dict) -> "LatticeCell":
        return LatticeCell(obj["p"], obj["d"], obj["L"], obj["l"],
                           tuple(int(c) for c in obj["center_mantissas"]))


def _tuple_counter(span: int, d: int):
    """All d-tuples over range(span), first coordinate slowest."""
    tup = [0] * d
    while True:
        yield tuple(tup)
        i = d - 1
        while i >= 0:
            tup[i] += 1
            if tup[i] < span:
                break
            tup[i] = 0
            i -= 1
        if i < 0:
            return


def cell_count(p: int, d: int, L: int, l: int) -> int:
    if l < -L:
        raise ParameterError("cell depth l must satisfy l >= -L")
    return p ** ((L + l) * d)


def enumerate_cells(p: int, d: int, L: int, l: int,
                    cap: int = DEFAULT_CELL_CAP) -> List[LatticeCell]:
    """All p^((L+l)d) cells of G_l inside B_L^d, in deterministic order."""
    _validate_prime(p)
    count = cell_count(p, d, L, l)
    if count > cap:
        raise CapacityError(f"{count} cells exceeds cap {cap}")
    span = p ** (L + l)
    return [LatticeCell(p, d, L, l, t) for t in _tuple_counter(span, d)]


def cell_index(cell: LatticeCell) -> int:
    """Rank of the cell in enumerate_cells order."""
    span = cell.p ** (cell.L + cell.l)
    idx = 0
    for c in cell.center_mantissas:
        idx = idx * span + c
    return idx


def reduce_to_cell(x: PadicPoint, l: int, L: Optional[int] = None) -> LatticeCell:
    """The unique cell of G_l (inside B_L^d) containing x."""
    if L is None:
        L = x.K
    if l > x.M:
        raise PrecisionError(f"cell depth {l} exceeds point precision M={x.M}")
    if not x.in_ball(L):
        raise DomainError("point lies outside the ball B_L")
    modulus = x.p ** (L + l)
    shift = L - x.K
    mantissas = []
    for m in x.mantissas:
        if shift >= 0:
            c = (m * x.p ** shift) % max(modulus, 1)
        else:
            q = x.p ** (-shift)
            if m % q:
                raise DomainError("point lies outside the ball B_L")
            c = (m // q) % max(modulus, 1)
        mantissas.append(c)
    return LatticeCell(x.p, x.d, L, l, tuple(mantissas))


class SeededRng:
    """Counter-based generator: identical (seed, stream) pairs reproduce
    identical draws no matter what other streams were consumed elsewhere."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & (2 ** 64 - 1)
        self.stream = int(stream) & (2 ** 64 - 1)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def spawn(self, stream: int) -> "SeededRng":
        return SeededRng(self.seed, stream)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high=high, size=size)

    def random(self, size=None):
        return self.generator.random(size=size)

    def randint_big(self, high: int) -> int:
        """Uniform draw in [0, high) for arbitrarily large high."""
        if high <= 0:
            raise ParameterError("high must be positive")
        if high <= 2 ** 62:
            return int(self.generator.integers(0, high))
        out = 0
        span = 1
        while span < high:
            out = (out << 32) | int(self.generator.integers(0, 1 << 32))
            span <<= 32
        return out % high

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, stream={self.stream})"


def sample_uniform(cell: LatticeCell, M: int, rng: SeededRng) -> PadicPoint:
    """Haar-uniform point of the cell at precision M: all p^((M-l)d) depth-M
    subcells are equally likely."""
    if M <= cell.l:
        raise DomainError("sampling precision M must exceed the cell depth")
    p = cell.p
    base = p ** (cell.L + cell.l)
    span = p ** (M - cell.l)
    mantissas = tuple(c + base * rng.randint_big(span)
                      for c in cell.center_mantissas)
    return PadicPoint(p, cell.d, cell.L, M, mantissas)


# -- bulk pair geometry -----------------------------------------------------


def _shared_params(points: Sequence[PadicPoint]) -> Tuple[int, int, int, int]:
    first = points[0]
    for x in points[1:]:
        first._check_compatible(x)
    return first.p, first.d, first.K, first.M


def _valuation_array(diff: np.ndarray, p: int, digits: int) -> np.ndarray:
    """Vectorized valuation; entries equal to `digits` encode a zero residue."""
    val = np.where(diff == 0, digits, 0).astype(np.int64)
    work = diff.copy()
    for _ in range(digits):
        mask = (work != 0) & (work % p == 0)
        if not mask.any():
            break
        val[mask] += 1
        work[mask] //= p
    return val


def pair_exponent_counts(points: Sequence[PadicPoint]) -> Counter:
    """Histogram {norm exponent e: number of unordered pairs at distance p^e}.

    Raises PrecisionError if any pair is below resolution (all residues zero).
    """
    n = len(points)
    out: Counter = Counter()
    if n < 2:
        return out
    p, d, K, M = _shared_params(points)
    digits = K + M
    modulus = p ** digits
    if modulus <= _INT64_SAFE_MODULUS:
        mm = np.array([pt.mantissas for pt in points], dtype=np.int64)
        diff = (mm[:, None, :] - mm[None, :, :]) % modulus
        val = _valuation_array(diff, p, digits).min(axis=2)
        iu = np.triu_indices(n, k=1)
        vals = val[iu]
        if (vals >= digits).any():
            raise PrecisionError("a pair of points is below resolution p^-M")
        exps = K - vals
        uniq, counts = np.unique(exps, return_counts=True)
        for e, c in zip(uniq.tolist(), counts.tolist()):
            out[int(e)] += int(c)
        return out
    for i in range(n):
        mi = points[i].mantissas
        for j in range(i + 1, n):
            mj = points[j].mantissas
            best = None
            for a, b in zip(mi, mj):
                v = _valuation((a - b) % modulus, p)
                if v is not None and (best is None or v < best):
                    best = v
            if best is None:
                raise PrecisionError("a pair of points is below resolution p^-M")
            out[K - best] += 1
    return out


def min_pair_exponent(points: Sequence[PadicPoint]) -> Optional[int]:
    """Smallest pairwise norm exponent, or None for fewer than two points."""
    counts = pair_exponent_counts(points)
    if not counts:
        return None
    return min(counts)
