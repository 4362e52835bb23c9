"""Exact closed forms for radial integrals of the kernel g(x) = ||x||_p^(alpha-d).

Everything here reduces to rational functions of u = p^-alpha and v = p^-d,
evaluated over geometric shell sums: the sphere of radius p^j has Haar volume
p^(jd)(1 - p^-d), and summing kernel values over shells j <= r gives

    int_{B_r} ||z||^(alpha-d) dz = (1 - p^-d) p^(r alpha) / (1 - p^-alpha).

With integer alpha these are bit-exact Fractions; float mode covers the rest.
This module is the independent oracle the energy, spin-glass and minimizer
modules are tested against.  All functions are pure and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

from .errors import DomainError, ParameterError
from .padic import (LatticeCell, PadicPoint, cell_count, cell_index,
                    enumerate_cells, is_prime, reduce_to_cell)
from .scalar import EXACT, FLOAT, Scalar, p_power


@dataclass(frozen=True)
class KernelParams:
    """Kernel data (p, d, alpha) with 0 < alpha < d, plus the arithmetic mode.

    Exact mode requires integer alpha so that p^-alpha is rational.
    """

    p: int
    d: int
    alpha: Union[int, float]
    mode: str = EXACT

    def __post_init__(self):
        if not is_prime(self.p):
            raise ParameterError(f"p must be prime, got {self.p!r}")
        if not isinstance(self.d, int) or self.d < 1:
            raise ParameterError("dimension d must be an integer >= 1")
        if not 0 < self.alpha < self.d:
            raise DomainError(f"alpha must satisfy 0 < alpha < d, "
                              f"got alpha={self.alpha}, d={self.d}")
        if self.mode == EXACT and not (
                isinstance(self.alpha, int) and not isinstance(self.alpha, bool)):
            raise ParameterError("exact mode requires an integer alpha")
        if self.mode not in (EXACT, FLOAT):
            raise ParameterError(f"unknown mode {self.mode!r}")

    # p^(k*alpha), p^(k*d), p^k as scalars in the right mode
    def pow_alpha(self, k: int) -> Scalar:
        if self.mode == EXACT:
            return p_power(self.p, k * self.alpha, EXACT)
        return Scalar.approx(float(self.p) ** (k * self.alpha))

    def pow_d(self, k: int) -> Scalar:
        return p_power(self.p, k * self.d, self.mode)

    def pow_one(self, k: int) -> Scalar:
        return p_power(self.p, k, self.mode)

    def kernel(self, e: int) -> Scalar:
        """g at norm p^e: p^(e(alpha-d))."""
        if self.mode == EXACT:
            return p_power(self.p, e * (self.alpha - self.d), EXACT)
        return Scalar.approx(float(self.p) ** (e * (self.alpha - self.d)))

    def scalar(self, value) -> Scalar:
        return Scalar.of(value, self.mode)

    def one(self) -> Scalar:
        return Scalar.one(self.mode)

    def zero(self) -> Scalar:
        return Scalar.zero(self.mode)


def gamma_factor(params: KernelParams) -> Scalar:
    """The p-adic gamma factor (1 - p^(alpha-d)) / (1 - p^-alpha) normalizing
    the Riesz kernel."""
    one = params.one()
    return (one - params.pow_alpha(1) / params.pow_d(1)) / (one - params.pow_alpha(-1))


def green_constant(params: KernelParams) -> Scalar:
    """C with D^alpha g = -C * delta: (p^(alpha-d) - 1) / (1 - p^-alpha).

    Negative for 0 < alpha < d.
    """
    one = params.one()
    return (params.pow_alpha(1) / params.pow_d(1) - one) / (one - params.pow_alpha(-1))


def ball_volume(params: KernelParams, r: int) -> Scalar:
    """Haar volume p^(rd) of the ball B_r^d (unit ball normalized to 1)."""
    return params.pow_d(r)

def sphere_volume(params: KernelParams, r: int) -> Scalar:
    """Haar volume p^(rd)(1 - p^-d) of the sphere S_r^d."""
    return params.pow_d(r) * (params.one() - params.pow_d(-1))


def shell_integral(params: KernelParams, r: int) -> Scalar:
    """int_{B_r} ||z||^(alpha-d) dz = (1 - p^-d) p^(r alpha) / (1 - p^-alpha)."""
    one = params.one()
    return (one - params.pow_d(-1)) * params.pow_alpha(r) / (one - params.pow_alpha(-1))


def shell_integral_truncated(params: KernelParams, r: int, T: int) -> Scalar:
    """Shell sum over spheres S_j, r - T <= j <= r; approaches the closed form
    from below with remainder (1 - p^-d) p^(r alpha) p^(-(T+1)alpha)/(1-p^-alpha)."""
    total = params.zero()
    for j in range(r - T, r + 1):
        total = total + sphere_volume(params, j) * params.kernel(j)
    return total


def uniform_ball_potential(params: KernelParams, r: int,
                           s_exp: Optional[int] = None) -> Scalar:
    """int_{B_r} ||x - y||^(alpha-d) dy for ||x||_p = p^s_exp (None = inside).

    Inside (s_exp <= r) this is shell_integral(r); outside it equals
    p^(rd) ||x||^(alpha-d).  The two branches genuinely jump at the boundary.
    """
    if s_exp is None or s_exp <= r:
        return shell_integral(params, r)
    return params.pow_d(r) * params.kernel(s_exp)


def pair_cell_interaction(params: KernelParams, cell_a: LatticeCell,
                          cell_b: LatticeCell) -> Scalar:
    """Exact double integral of the kernel over cell_a x cell_b.

    Distinct cells: p^(-2ld) ||c_a - c_b||^(alpha-d).  Same cell:
    p^(-l(d+alpha)) (1 - p^-d)/(1 - p^-alpha), the diagonal self-interaction.
    """
    cell_a._check_lattice(cell_b)
    if (cell_a.p, cell_a.d) != (params.p, params.d):
        raise ParameterError("cells do not match kernel parameters")
    l = cell_a.l
    e = cell_a.distance_exponent(cell_b)
    if e is None:
        one = params.one()
        return (params.pow_d(-l) * params.pow_alpha(-l)
                * (one - params.pow_d(-1)) / (one - params.pow_alpha(-1)))
    return params.pow_d(-2 * l) * params.kernel(e)


def ball_overlap_closed(params: KernelParams, s_exp: Optional[int]) -> Scalar:
    """The scale-superposition identity: integrating products of ball
    indicators over all scales reproduces the kernel up to the constant
    (1 - p^-1)/(1 - p^(alpha-d)):

        value = (1 - p^-1)/(1 - p^(alpha-d)) * s^(alpha-d),  s = p^s_exp.
    """
    if s_exp is None:
        raise DomainError("separation below resolution")
    one = params.one()
    coef = (one - params.pow_one(-1)) / (one - params.pow_alpha(1) / params.pow_d(1))
    return coef * params.kernel(s_exp)


def ball_overlap_truncated(params: KernelParams, s_exp: Optional[int],
                           T: int) -> Scalar:
    """Partial sum of the reduced one-dimensional shell integral
    int_{Z_p \\ {0}} |t|^(d-alpha-1) dt over shells |t| = p^-j, 0 <= j <= T,
    times s^(alpha-d).  Increases monotonically to the closed form."""
    if s_exp is None:
        raise DomainError("separation below resolution")
    one = params.one()
    total = params.zero()
    unit = one - params.pow_one(-1)
    for j in range(T + 1):
        # shell volume p^-j (1 - 1/p) times |t|^(d-alpha-1) = p^(-j(d-alpha-1))
        term = params.pow_one(-j) * unit * params.pow_d(-j) * params.pow_alpha(j) \
            * params.pow_one(j)
        total = total + term
    return total * params.kernel(s_exp)


def ball_overlap_tail(params: KernelParams, s_exp: Optional[int], T: int) -> Scalar:
    """Exact geometric remainder: closed == truncated(T) + tail(T)."""
    if s_exp is None:
        raise DomainError("separation below resolution")
    one = params.one()
    ratio = params.pow_alpha(1) / params.pow_d(1)          # p^(alpha - d)
    coef = (one - params.pow_one(-1)) * ratio ** (T + 1) / (one - ratio)
    return coef * params.kernel(s_exp)


def fundamental_solution(params: KernelParams, s_exp: Optional[int]) -> Scalar:
    """Green function of the Taibleson operator at norm p^s_exp:
    (1 - p^-alpha)/(1 - p^(alpha-d)) * s^(alpha-d)."""
    if s_exp is None:
        raise DomainError("separation below resolution")
    one = params.one()
    coef = (one - params.pow_alpha(-1)) / (one - params.pow_alpha(1) / params.pow_d(1))
    return coef * params.kernel(s_exp)


def capacity_ball(params: KernelParams, r: int) -> Scalar:
    """1 / E(u_r, u_r) for u_r uniform probability on B_r:
    p^(r(d-alpha)) (1 - p^-alpha)/(1 - p^-d)."""
    one = params.one()
    return (params.pow_d(r) / params.pow_alpha(r)
            * (one - params.pow_alpha(-1)) / (one - params.pow_d(-1)))


# -- Taibleson operator on radial-step functions with declared tails ---------


@dataclass(frozen=True)
class RadialTailFunction:
    """Locally constant function: a cell table at depth l inside B_R plus a
    declared tail  f(x) = tail_power * ||x||^(alpha-d) + tail_constant  for
    ||x||_p > p^R.

    The tail class is exactly what convolutions of the kernel with compactly
    supported measures produce, and it is absolutely integrable against
    ||y||^(-alpha-d) at infinity, which the operator below requires.
    """

    params: KernelParams
    R: int
    l: int
    values: Tuple[Scalar, ...]
    tail_power: Optional[Scalar] = None
    tail_constant: Optional[Scalar] = None

    def __post_init__(self):
        expected = cell_count(self.params.p, self.params.d, self.R, self.l)
        if len(self.values) != expected:
            raise ParameterError(
                f"cell table needs {expected} values, got {len(self.values)}")

    @staticmethod
    def constant(params: KernelParams, R: int, l: int, value: Scalar
                 ) -> "RadialTailFunction":
        n = cell_count(params.p, params.d, R, l)
        return RadialTailFunction(params, R, l, (value,) * n,
                                  tail_power=params.zero(), tail_constant=value)

    def has_tail(self) -> bool:
        return self.tail_power is not None and self.tail_constant is not None

    def cells(self) -> List[LatticeCell]:
        return enumerate_cells(self.params.p, self.params.d, self.R, self.l)

    def value_at(self, x: PadicPoint) -> Scalar:
        e = x.norm_exponent()
        if e is not None and e > self.R:
            if not self.has_tail():
                raise DomainError("function has no tail model beyond B_R")
            return self.tail_power * self.params.kernel(e) + self.tail_constant
        cell = reduce_to_cell(x, self.l, L=self.R)
        return self.values[cell_index(cell)]

    def combine(self, a: Scalar, other: "RadialTailFunction", b: Scalar
                ) -> "RadialTailFunction":
        """a*self + b*other on a shared lattice."""
        if (self.R, self.l) != (other.R, other.l) or self.params != other.params:
            raise ParameterError("functions must share params, R and l")
        values = tuple(a * u + b * v for u, v in zip(self.values, other.values))
        tp = tc = None
        if self.has_tail() and other.has_tail():
            tp = a * self.tail_power + b * other.tail_power
            tc = a * self.tail_constant + b * other.tail_constant
        return RadialTailFunction(self.params, self.R, self.l, values, tp, tc)


def _cell_exponent_rows(p: int, d: int, R: int, l: int) -> List[List[Optional[int]]]:
    cells = enumerate_cells(p, d, R, l)
    n = len(cells)
    rows: List[List[Optional[int]]] = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            e = cells[i].distance_exponent(cells[j])
            rows[i][j] = e
            rows[j][i] = e
    return rows


_EXPONENT_CACHE: dict = {}


def _exponent_rows_cached(p: int, d: int, R: int, l: int):
    key = (p, d, R, l)
    if key not in _EXPONENT_CACHE:
        if len(_EXPONENT_CACHE) > 16:
            _EXPONENT_CACHE.clear()
        _EXPONENT_CACHE[key] = _cell_exponent_rows(p, d, R, l)
    return _EXPONENT_CACHE[key]


def taibleson_apply(f: RadialTailFunction, params: KernelParams,
                    x: PadicPoint) -> Scalar:
    """Evaluate D^alpha f at x inside the table region, exactly.

    D^alpha f(x) = (1 - p^alpha)/(1 - p^(-alpha-d))
                   * int ||y||^(-alpha-d) (f(x - y) - f(x)) dy.

    The integral splits into the finite cell table (the kernel is constant on
    every cell not containing x, and the integrand vanishes on the cell of x
    by local constancy) plus closed-form geometric tails beyond B_R.
    """
    if params != f.params:
        raise ParameterError("kernel parameters do not match the function")
    if not f.has_tail():
        raise DomainError("function has no tail model beyond B_R")
    if not x.in_ball(f.R):
        raise DomainError("evaluation point outside the table region")
    one = params.one()
    coef = (one - params.pow_alpha(1)) / (one - params.pow_alpha(-1) * params.pow_d(-1))

    x_cell = reduce_to_cell(x, f.l, L=f.R)
    xi = cell_index(x_cell)
    fx = f.values[xi]
    rows = _exponent_rows_cached(params.p, params.d, f.R, f.l)[xi]

    # table region: group (f(C') - f(x)) by the distance exponent to x's cell
    by_exp: dict = {}
    for j, e in enumerate(rows):
        if j == xi:
            continue
        by_exp.setdefault(e, []).append(f.values[j])
    acc = params.zero()
    vol = params.pow_d(-f.l)
    for e, vals in sorted(by_exp.items()):
        s = params.zero()
        for v in vals:
            s = s + v
        s = s - fx * len(vals)
        # ||x - c'||^(-alpha-d) = p^(-e(alpha+d))
        acc = acc + s * vol / (params.pow_alpha(e) * params.pow_d(e))

    # tail region ||z|| > p^R (here ||x - z|| = ||z|| since x is inside B_R):
    #   power part integrates to tail_power * p^(-(R+1)d),
    #   constant offset to (tail_constant - f(x)) (1-p^-d) p^(-(R+1)alpha)/(1-p^-alpha)
    acc = acc + f.tail_power * params.pow_d(-(f.R + 1))
    tail_gap = f.tail_constant - fx
    acc = acc + tail_gap * (one - params.pow_d(-1)) \
        * params.pow_alpha(-(f.R + 1)) / (one - params.pow_alpha(-1))
    return coef * acc
