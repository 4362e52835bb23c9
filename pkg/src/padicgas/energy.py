"""Coulomb energies of discrete and cell-density measures, Hamiltonians,
mean-field functionals, electrostatic potentials, and the Frostman
equilibrium checker.

Diagonal policy: discrete measures exclude self-pairs (the Hamiltonian
convention Sum_{i != j}); cell densities include the exact same-cell double
integral.  Both routes are exposed explicitly and never mixed implicitly.

Float summations use a fixed-order pairwise tree reduction so results are
identical across serial and parallel runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import (CapacityError, DomainError, InfiniteEnergyError,
                     ParameterError, PrecisionError)
from .padic import (LatticeCell, PadicPoint, SeededRng, _tuple_counter,
                    cell_count, cell_index, enumerate_cells,
                    pair_exponent_counts, reduce_to_cell)
from .radial import KernelParams, pair_cell_interaction, shell_integral
from .scalar import EXACT, FLOAT, Scalar, tree_sum


# ---------------------------------------------------------------------------
# measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted atoms (signed weights permitted); atoms share (p, d, K, M)."""

    atoms: Tuple[Tuple[PadicPoint, Scalar], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ParameterError("a discrete measure needs at least one atom")
        x0, w0 = self.atoms[0]
        for x, w in self.atoms[1:]:
            x0._check_compatible(x)
            if w.mode != w0.mode:
                raise ParameterError("atom weights must share one mode")

    @staticmethod
    def empirical(points: Sequence[PadicPoint], mode: str = EXACT) -> "DiscreteMeasure":
        n = len(points)
        w = (Scalar.exact(Fraction(1, n)) if mode == EXACT
             else Scalar.approx(1.0 / n))
        return DiscreteMeasure(tuple((x, w) for x in points))

    @property
    def mode(self) -> str:
        return self.atoms[0][1].mode

    def points(self) -> List[PadicPoint]:
        return [x for x, _ in self.atoms]

    def mass(self) -> Scalar:
        return tree_sum([w for _, w in self.atoms], Scalar.zero(self.mode))

    def is_probability(self, tol: float = 1e-12) -> bool:
        if any(w < 0 for _, w in self.atoms):
            return False
        total = self.mass()
        if self.mode == EXACT:
            return total == Scalar.exact(1)
        return abs(float(total) - 1.0) <= tol

    def to_json(self) -> dict:
        return {"kind": "atoms",
                "atoms": [{"point": x.to_json(), "weight": w.to_json()}
                          for x, w in self.atoms]}

    @staticmethod
    def from_json(obj: dict) -> "DiscreteMeasure":
        atoms = tuple((PadicPoint.from_json(a["point"]), Scalar.from_json(a["weight"]))
                      for a in obj["atoms"])
        return DiscreteMeasure(atoms)


@dataclass(frozen=True)
class CellDensity:
    """Piecewise-constant density on G_l inside B_L^d.

    values follow enumerate_cells order; the mass of cell a is
    values[a] * p^(-l d).
    """

    p: int
    d: int
    L: int
    l: int
    values: Tuple[Scalar, ...]

    def __post_init__(self):
        expected = cell_count(self.p, self.d, self.L, self.l)
        if len(self.values) != expected:
            raise ParameterError(
                f"density table needs {expected} values, got {len(self.values)}")
        mode = self.values[0].mode
        for v in self.values[1:]:
            if v.mode != mode:
                raise ParameterError("density values must share one mode")

    @property
    def mode(self) -> str:
        return self.values[0].mode

    def cells(self) -> List[LatticeCell]:
        return enumerate_cells(self.p, self.d, self.L, self.l)

    def cell_volume(self) -> Scalar:
        from .scalar import p_power
        return p_power(self.p, -self.l * self.d, self.mode)

    def mass(self) -> Scalar:
        vol = self.cell_volume()
        return tree_sum([v * vol for v in self.values], Scalar.zero(self.mode))

    def is_probability(self, tol: float = 1e-12) -> bool:
        if any(v < 0 for v in self.values):
            return False
        total = self.mass()
        if self.mode == EXACT:
            return total == Scalar.exact(1)
        return abs(float(total) - 1.0) <= tol

    def is_zero(self) -> bool:
        zero = Scalar.zero(self.mode)
        return all(v == zero for v in self.values)

    @staticmethod
    def uniform_probability(p: int, d: int, L: int, l: int,
                            mode: str = EXACT) -> "CellDensity":
        """Haar-uniform probability on B_L^d: constant density p^(-Ld)."""
        from .scalar import p_power
        value = p_power(p, -L * d, mode)
        return CellDensity(p, d, L, l, (value,) * cell_count(p, d, L, l))

    @staticmethod
    def from_function(fn, p: int, d: int, L: int, l: int) -> "CellDensity":
        values = tuple(fn(cell.center()) for cell in enumerate_cells(p, d, L, l))
        return CellDensity(p, d, L, l, values)

    def value_at(self, x: PadicPoint) -> Scalar:
        cell = reduce_to_cell(x, self.l, L=self.L)
        return self.values[cell_index(cell)]

    def refine(self, l_new: int) -> "CellDensity":
        """The same measure on a deeper lattice (values copied to children)."""
        if l_new < self.l:
            raise ParameterError("refine only deepens the lattice")
        if l_new == self.l:
            return self
        span_old = self.p ** (self.L + self.l)
        values = []
        for t in _tuple_counter(self.p ** (self.L + l_new), self.d):
            key = tuple(c % span_old for c in t)
            idx = 0
            for c in key:
                idx = idx * span_old + c
            values.append(self.values[idx])
        return CellDensity(self.p, self.d, self.L, l_new, tuple(values))

    def _check_lattice(self, other: "CellDensity") -> None:
        if (self.p, self.d, self.L, self.l) != (other.p, other.d, other.L, other.l):
            raise ParameterError("densities must share (p, d, L, l)")

    def __add__(self, other: "CellDensity") -> "CellDensity":
        self._check_lattice(other)
        return CellDensity(self.p, self.d, self.L, self.l,
                           tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other: "CellDensity") -> "CellDensity":
        self._check_lattice(other)
        return CellDensity(self.p, self.d, self.L, self.l,
                           tuple(a - b for a, b in zip(self.values, other.values)))

    def scale(self, c: Scalar) -> "CellDensity":
        return CellDensity(self.p, self.d, self.L, self.l,
                           tuple(c * v for v in self.values))

    def to_json(self) -> dict:
        return {"kind": "cells", "p": self.p, "d": self.d, "L": self.L,
                "l": self.l, "values": [v.to_json() for v in self.values]}

    @staticmethod
    def from_json(obj: dict) -> "CellDensity":
        return CellDensity(obj["p"], obj["d"], obj["L"], obj["l"],
                           tuple(Scalar.from_json(v) for v in obj["values"]))


Measure = Union[DiscreteMeasure, CellDensity]


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """Lower-bounded potential on B_L^d, finite or +infinity outside.

    kind "radial": constant core_value for ||x|| <= p^core_exponent plus one
    value per sphere exponent in (core_exponent, L].  kind "cells": a cell
    table at depth table_l inside B_L.
    """

    kind: str
    L: int
    outside: Scalar
    core_exponent: int = 0
    core_value: Optional[Scalar] = None
    sphere_values: Tuple[Tuple[int, Scalar], ...] = ()
    table_p: int = 0
    table_d: int = 0
    table_l: int = 0
    table_values: Tuple[Scalar, ...] = ()

    def __post_init__(self):
        if self.kind == "radial":
            if self.core_value is None:
                raise ParameterError("radial potential needs a core value")
            have = {e for e, _ in self.sphere_values}
            need = set(range(self.core_exponent + 1, self.L + 1))
            if have != need:
                raise ParameterError(
                    "sphere values must cover every exponent in (core, L]")
        elif self.kind == "cells":
            expected = cell_count(self.table_p, self.table_d, self.L, self.table_l)
            if len(self.table_values) != expected:
                raise ParameterError("cell-table potential has wrong size")
        else:
            raise ParameterError(f"unknown potential kind {self.kind!r}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def confining(v0: Scalar, L: int = 0) -> "Potential":
        """Constant v0 on B_L, +infinity outside (the confined-gas potential)."""
        return Potential("radial", L, Scalar.infinity(v0.mode),
                         core_exponent=L, core_value=v0)

    @staticmethod
    def radial(L: int, core_value: Scalar, core_exponent: int,
               sphere_values: Sequence[Tuple[int, Scalar]],
               outside: Optional[Scalar] = None) -> "Potential":
        out = outside if outside is not None else Scalar.infinity(core_value.mode)
        return Potential("radial", L, out, core_exponent=core_exponent,
                         core_value=core_value,
                         sphere_values=tuple(sorted(sphere_values)))

    @staticmethod
    def from_cells(density_like: CellDensity,
                   outside: Optional[Scalar] = None) -> "Potential":
        out = outside if outside is not None else Scalar.infinity(density_like.mode)
        return Potential("cells", density_like.L, out,
                         table_p=density_like.p, table_d=density_like.d,
                         table_l=density_like.l, table_values=density_like.values)

    @property
    def mode(self) -> str:
        if self.kind == "radial":
            return self.core_value.mode
        return self.table_values[0].mode

    def uniform_inside_value(self) -> Optional[Scalar]:
        """The constant value when the potential is flat on all of B_L."""
        if self.kind == "radial" and self.core_exponent >= self.L:
            return self.core_value
        if self.kind == "cells":
            first = self.table_values[0]
            if all(v == first for v in self.table_values):
                return first
        return None

    # -- evaluation ----------------------------------------------------------

    def value_at_point(self, x: PadicPoint) -> Scalar:
        e = x.norm_exponent()
        if self.kind == "radial":
            if e is None:
                if -x.M <= self.core_exponent:
                    return self.core_value
                raise PrecisionError("point norm unresolved below the core scale")
            if e > self.L:
                return self.outside
            if e <= self.core_exponent:
                return self.core_value
            return dict(self.sphere_values)[e]
        if e is not None and e > self.L:
            return self.outside
        cell = reduce_to_cell(x, self.table_l, L=self.L)
        return self.table_values[cell_index(cell)]

    def value_at_cell(self, cell: LatticeCell) -> Scalar:
        """Value on a cell where the potential is constant; DomainError if the
        cell is too coarse for the potential to be constant on it."""
        e = cell.center().norm_exponent()
        if e is not None and e > self.L:
            return self.outside
        if self.kind == "radial":
            if e is None:
                if -cell.l <= self.core_exponent:
                    return self.core_value
                raise DomainError("radial potential varies inside this cell")
            if e <= self.core_exponent:
                return self.core_value
            return dict(self.sphere_values)[e]
        if cell.l < self.table_l:
            raise DomainError("cell is coarser than the potential table")
        if (cell.p, cell.d) != (self.table_p, self.table_d):
            raise ParameterError("cell does not match the potential table")
        sub = reduce_to_cell(cell.center(), self.table_l, L=self.L)
        return self.table_values[cell_index(sub)]

    def to_json(self) -> dict:
        if self.kind == "radial":
            return {"kind": "radial", "L": self.L,
                    "core_exponent": self.core_exponent,
                    "core_value": self.core_value.to_json(),
                    "sphere_values": [[e, v.to_json()] for e, v in self.sphere_values],
                    "outside": self.outside.to_json()}
        return {"kind": "cells", "L": self.L, "p": self.table_p,
                "d": self.table_d, "l": self.table_l,
                "values": [v.to_json() for v in self.table_values],
                "outside": self.outside.to_json()}


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


def _discrete_mutual(mu: DiscreteMeasure, nu: DiscreteMeasure,
                     params: KernelParams) -> Scalar:
    same = mu is nu
    terms: List[Scalar] = []
    for i, (x, wx) in enumerate(mu.atoms):
        for j, (y, wy) in enumerate(nu.atoms):
            if same and i == j:
                continue
            e = (x - y).norm_exponent()
            if e is None:
                if same:
                    raise PrecisionError(
                        "two distinct atoms of one measure are below resolution")
                raise InfiniteEnergyError(
                    "coincident atoms across distinct measures")
            terms.append(wx * wy * params.kernel(e))
    return tree_sum(terms, Scalar.zero(params.mode))


def _raw_kernel(params: KernelParams, e: int):
    if params.mode == EXACT:
        return Fraction(params.p) ** (e * (params.alpha - params.d))
    return float(params.p) ** (e * (params.alpha - params.d))


def _cell_mutual_tree(mu: CellDensity, nu: CellDensity, params: KernelParams,
                      include_diagonal: bool) -> Scalar:
    """Level-aggregated evaluation of the double integral.

    Pairs of depth-l cells at distance p^-j (same depth-j ball, different
    depth-(j+1) balls) all carry the kernel value p^(-j(alpha-d)); grouping
    the pair-interaction double sum by that splitting level turns O(n^2)
    work into O(n * levels).  Exactly equal to the pair_cell_interaction sum.
    """
    p, d, L, l = mu.p, mu.d, mu.L, mu.l
    exact = params.mode == EXACT
    zero = Fraction(0) if exact else 0.0
    vol = (Fraction(p) ** (-l * d)) if exact else float(p) ** (-l * d)

    def raw(v: Scalar):
        return v.as_fraction() if exact else float(v)

    mu_masses = [raw(v) * vol for v in mu.values]
    nu_masses = mu_masses if nu is mu else [raw(v) * vol for v in nu.values]

    keys = list(_tuple_counter(p ** (L + l), d))
    cur_mu = dict(zip(keys, mu_masses))
    cur_nu = cur_mu if nu is mu else dict(zip(keys, nu_masses))

    # T[j] = sum over depth-j balls of S_mu(ball) * S_nu(ball)
    T: Dict[int, object] = {}
    depth = l
    while True:
        T[depth] = tree_sum([cur_mu[k] * cur_nu[k] for k in cur_mu], zero)
        if depth == -L:
            break
        mod = p ** (L + depth - 1)
        nxt_mu: Dict[tuple, object] = {}
        nxt_nu: Dict[tuple, object] = {}
        for k, v in cur_mu.items():
            pk = tuple(c % mod for c in k)
            nxt_mu[pk] = nxt_mu.get(pk, zero) + v
        if nu is mu:
            nxt_nu = nxt_mu
        else:
            for k, v in cur_nu.items():
                pk = tuple(c % mod for c in k)
                nxt_nu[pk] = nxt_nu.get(pk, zero) + v
        cur_mu, cur_nu = nxt_mu, nxt_nu
        depth -= 1

    total = zero
    for j in range(-L, l):
        total = total + (T[j] - T[j + 1]) * _raw_kernel(params, -j)
    if include_diagonal:
        # same-cell pair integral in mass form: m_a m_b p^(l(d-alpha)) (1-v)/(1-u)
        if exact:
            coeff = (Fraction(p) ** (l * (d - params.alpha))
                     * (1 - Fraction(p) ** (-d)) / (1 - Fraction(p) ** (-params.alpha)))
        else:
            coeff = (float(p) ** (l * (d - params.alpha))
                     * (1.0 - float(p) ** (-d)) / (1.0 - float(p) ** (-params.alpha)))
        total = total + T[l] * coeff
    return Scalar.of(total, params.mode)


def mutual_energy_pairsum(mu: CellDensity, nu: CellDensity, params: KernelParams,
                          include_diagonal: bool = True) -> Scalar:
    """Literal double sum over cell pairs via pair_cell_interaction; the
    independent oracle route for _cell_mutual_tree."""
    mu._check_lattice(nu)
    cells = mu.cells()
    terms: List[Scalar] = []
    for i, a in enumerate(cells):
        for j, b in enumerate(cells):
            if not include_diagonal and i == j:
                continue
            w = mu.values[i] * nu.values[j]
            terms.append(w * pair_cell_interaction(params, a, b))
    return tree_sum(terms, Scalar.zero(params.mode))


def mutual_energy(mu: Measure, nu: Measure, params: KernelParams,
                  include_diagonal: bool = True, method: str = "tree") -> Scalar:
    """E(mu, nu) = double integral of the kernel against mu x nu.

    Discrete x discrete: atom pair sum; the diagonal i == j is excluded only
    when mu and nu are the same object.  Cell x cell: exact double integral,
    including the same-cell term unless include_diagonal is False.
    """
    if isinstance(mu, DiscreteMeasure) and isinstance(nu, DiscreteMeasure):
        return _discrete_mutual(mu, nu, params)
    if isinstance(mu, CellDensity) and isinstance(nu, CellDensity):
        mu._check_lattice(nu)
        if (mu.p, mu.d) != (params.p, params.d):
            raise ParameterError("density does not match kernel parameters")
        if method == "tree":
            return _cell_mutual_tree(mu, nu, params, include_diagonal)
        if method == "pairsum":
            return mutual_energy_pairsum(mu, nu, params, include_diagonal)
        raise ParameterError(f"unknown method {method!r}")
    raise ParameterError("mutual_energy takes two measures of the same kind")


def hamiltonian(points: Sequence[PadicPoint], V: Potential,
                params: KernelParams) -> Scalar:
    """H_n = Sum_{i != j} g(x_i - x_j) + n Sum_i V(x_i), ordered pairs counted
    twice.  Below-resolution pairs raise PrecisionError; V = +infinity at any
    point yields a flagged +infinity result (a legal, infinitely bad state).
    """
    n = len(points)
    if n == 0:
        return Scalar.zero(params.mode)
    counts = pair_exponent_counts(points)
    pair_terms = [2 * c * params.kernel(e) for e, c in sorted(counts.items())]
    pair_part = tree_sum(pair_terms, Scalar.zero(params.mode))
    v_vals = [V.value_at_point(x) for x in points]
    if any(v.is_infinite for v in v_vals):
        return Scalar.infinity(params.mode)
    v_part = tree_sum(v_vals, Scalar.zero(params.mode))
    return pair_part + n * v_part


def potential_integral(mu: Measure, V: Potential, params: KernelParams) -> Scalar:
    """int V dmu; +infinity (flagged) when V is infinite on positive mass."""
    zero = Scalar.zero(params.mode)
    if isinstance(mu, DiscreteMeasure):
        terms = []
        for x, w in mu.atoms:
            if w == zero:
                continue
            v = V.value_at_point(x)
            if v.is_infinite:
                return Scalar.infinity(params.mode)
            terms.append(w * v)
        return tree_sum(terms, zero)
    vol = mu.cell_volume()
    terms = []
    for cell, rho in zip(mu.cells(), mu.values):
        if rho == zero:
            continue
        v = V.value_at_cell(cell)
        if v.is_infinite:
            return Scalar.infinity(params.mode)
        terms.append(rho * vol * v)
    return tree_sum(terms, zero)


def mean_field_energy(mu: Measure, V: Potential, params: KernelParams) -> Scalar:
    """I(mu) = E(mu, mu) + int V dmu for a probability measure mu.

    Cell densities use the full double integral (diagonal included); discrete
    probability measures use the off-diagonal sum, matching the (1/n^2) H_n
    normalization of empirical measures.
    """
    if not mu.is_probability():
        raise ParameterError("mean-field energy is defined for probabilities")
    e = mutual_energy(mu, mu, params)
    return e + potential_integral(mu, V, params)


def electrostatic_potential(mu: Measure, x: PadicPoint,
                            params: KernelParams) -> Scalar:
    """h(x) = int g(x - y) dmu(y); exact per cell for densities."""
    if isinstance(mu, DiscreteMeasure):
        terms = []
        for y, w in mu.atoms:
            e = (x - y).norm_exponent()
            if e is None:
                raise InfiniteEnergyError("evaluation point coincides with an atom")
            terms.append(w * params.kernel(e))
        return tree_sum(terms, Scalar.zero(params.mode))
    p, d, L, l = mu.p, mu.d, mu.L, mu.l
    inside = x.in_ball(L)
    x_cell = reduce_to_cell(x, l, L=L) if inside else None
    e_x = x.norm_exponent()
    inside_value = shell_integral(params, -l)
    vol = mu.cell_volume()
    terms = []
    for cell, rho in zip(mu.cells(), mu.values):
        if cell == x_cell:
            terms.append(rho * inside_value)
            continue
        e = x_cell.distance_exponent(cell) if inside else e_x
        terms.append(rho * vol * params.kernel(e))
    return tree_sum(terms, Scalar.zero(params.mode))


# ---------------------------------------------------------------------------
# Frostman checker
# ---------------------------------------------------------------------------


@dataclass
class FrostmanReport:
    """Equilibrium verdict: h + V/2 must be flat (= C) on the support and
    >= C off the support, with C = I(mu) - (1/2) int V dmu."""

    constant: Scalar
    tolerance: Scalar
    support_min: Optional[Scalar]
    support_max: Optional[Scalar]
    off_support_min: Optional[Scalar]
    violations: List[dict] = field(default_factory=list)
    passed: bool = False

    def to_json(self) -> dict:
        def opt(s):
            return None if s is None else s.to_json()
        return {"constant": self.constant.to_json(),
                "tolerance": self.tolerance.to_json(),
                "support_min": opt(self.support_min),
                "support_max": opt(self.support_max),
                "off_support_min": opt(self.off_support_min),
                "violations": self.violations,
                "passed": self.passed}


def _cell_on_support(mu: Measure, cell: LatticeCell) -> bool:
    if isinstance(mu, CellDensity):
        if cell.l < mu.l:
            raise DomainError("sample cells must be at least as deep as mu")
        if not cell.center().in_ball(mu.L):
            return False
        parent = reduce_to_cell(cell.center(), mu.l, L=mu.L)
        return mu.values[cell_index(parent)] > 0
    for x, w in mu.atoms:
        if w > 0 and cell.contains(x):
            return True
    return False


def frostman_check(mu: Measure, V: Potential, params: KernelParams,
                   sample_cells: Sequence[LatticeCell],
                   tol: Optional[Scalar] = None) -> FrostmanReport:
    """Evaluate h + V/2 at every sample cell center and test the equilibrium
    conditions.  Exact mode defaults to zero tolerance; float mode to 1e-9."""
    if not mu.is_probability():
        raise ParameterError("Frostman conditions apply to probabilities")
    if tol is None:
        tol = (Scalar.exact(0) if params.mode == EXACT
               else Scalar.approx(1e-9))
    intV = potential_integral(mu, V, params)
    I = mutual_energy(mu, mu, params) + intV
    C = I - intV / 2

    support_vals: List[Scalar] = []
    off_vals: List[Scalar] = []
    violations: List[dict] = []
    for cell in sample_cells:
        x = cell.center()
        try:
            h = electrostatic_potential(mu, x, params)
        except InfiniteEnergyError:
            h = Scalar.infinity(params.mode)
        val = h + V.value_at_point(x) / 2
        if _cell_on_support(mu, cell):
            support_vals.append(val)
            deviates = val.is_infinite or abs(val - C) > tol
            if deviates:
                deficit = val - C if not val.is_infinite else Scalar.infinity(params.mode)
                violations.append({"cell": cell.to_json(), "kind": "support",
                                   "value": val.to_json(),
                                   "deficit": deficit.to_json()})
        else:
            off_vals.append(val)
            if not val.is_infinite and val < C - tol:
                violations.append({"cell": cell.to_json(), "kind": "off_support",
                                   "value": val.to_json(),
                                   "deficit": (C - val).to_json()})

    def finite_min(vals):
        return min(vals) if vals else None

    support_min = finite_min(support_vals)
    support_max = max(support_vals) if support_vals else None
    off_min = finite_min(off_vals)
    passed = True
    if support_vals:
        if support_max.is_infinite or support_max - support_min > tol:
            passed = False
        if any(v.is_infinite or abs(v - C) > tol for v in support_vals):
            passed = False
    if off_vals:
        finite_off = [v for v in off_vals if not v.is_infinite]
        if finite_off and min(finite_off) < C - tol:
            passed = False
    return FrostmanReport(constant=C, tolerance=tol, support_min=support_min,
                          support_max=support_max, off_support_min=off_min,
                          violations=violations, passed=passed)


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def mollify(mu: DiscreteMeasure, depth: int, L: Optional[int] = None) -> CellDensity:
    """Convolve a nonnegative discrete measure with the uniform kernel on
    B_-depth: the depth-`depth` cell density with value p^(depth*d) times the
    measure's mass in each cell.  Mass is preserved exactly."""
    if any(w < 0 for _, w in mu.atoms):
        raise ParameterError("mollify requires a nonnegative measure")
    x0 = mu.atoms[0][0]
    p, d = x0.p, x0.d
    if L is None:
        L = x0.K
    mode = mu.mode
    from .scalar import p_power
    scale = p_power(p, depth * d, mode)
    masses: Dict[int, Scalar] = {}
    for x, w in mu.atoms:
        cell = reduce_to_cell(x, depth, L=L)
        idx = cell_index(cell)
        masses[idx] = masses.get(idx, Scalar.zero(mode)) + w
    values = [Scalar.zero(mode)] * cell_count(p, d, L, depth)
    for idx, m in masses.items():
        values[idx] = m * scale
    return CellDensity(p, d, L, depth, tuple(values))


# ---------------------------------------------------------------------------
# positivity / convexity property suite
# ---------------------------------------------------------------------------


@dataclass
class PositivityReport:
    trials: int
    checks: int
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"trials": self.trials, "checks": self.checks,
                "violations": self.violations, "passed": self.passed}


def _random_signed_density(p: int, d: int, L: int, l: int,
                           rng: SeededRng) -> CellDensity:
    n = cell_count(p, d, L, l)
    nums = rng.integers(-9, 10, size=n)
    dens = rng.integers(1, 5, size=n)
    values = tuple(Scalar.exact(Fraction(int(a), int(b)))
                   for a, b in zip(nums, dens))
    return CellDensity(p, d, L, l, values)


def positivity_suite(params: KernelParams, depth: int, trials: int,
                     rng: SeededRng, L: int = 0) -> PositivityReport:
    """Randomized exact checks of the quadratic form E:

    - E(mu, mu) >= 0 with equality iff mu = 0,
    - the Cauchy-Schwarz inequality E(mu,nu)^2 <= E(mu,mu) E(nu,nu),
    - the strict-convexity identity
      lambda E(mu,mu) + (1-lambda) E(nu,nu) - E(lam mu + (1-lam) nu) =
      lambda (1-lambda) E(mu - nu, mu - nu), exactly.
    """
    if params.mode != EXACT:
        raise ParameterError("the positivity suite runs in exact mode")
    report = PositivityReport(trials=trials, checks=0)
    zero_energy = mutual_energy(
        CellDensity(params.p, params.d, L, 1,
                    (Scalar.exact(0),) * cell_count(params.p, params.d, L, 1)),
        CellDensity(params.p, params.d, L, 1,
                    (Scalar.exact(0),) * cell_count(params.p, params.d, L, 1)),
        params)
    report.checks += 1
    if zero_energy != Scalar.exact(0):
        report.violations.append("E(0, 0) != 0")

    for t in range(trials):
        l = 1 + int(rng.integers(0, depth))
        mu = _random_signed_density(params.p, params.d, L, l, rng)
        nu = _random_signed_density(params.p, params.d, L, l, rng)
        e_mm = mutual_energy(mu, mu, params)
        e_nn = mutual_energy(nu, nu, params)
        e_mn = mutual_energy(mu, nu, params)
        report.checks += 3
        if e_mm < 0 or e_nn < 0:
            report.violations.append(f"trial {t}: negative self-energy")
        if (e_mm == 0) != mu.is_zero() or (e_nn == 0) != nu.is_zero():
            report.violations.append(f"trial {t}: zero energy without zero density")
        if e_mn * e_mn > e_mm * e_nn:
            report.violations.append(f"trial {t}: Cauchy-Schwarz violated")
        lam = Scalar.exact(Fraction(int(rng.integers(1, 10)), 10))
        one = Scalar.exact(1)
        mix = mu.scale(lam) + nu.scale(one - lam)
        e_mix = mutual_energy(mix, mix, params)
        diff = mu - nu
        e_diff = mutual_energy(diff, diff, params)
        lhs = lam * e_mm + (one - lam) * e_nn - e_mix
        if lhs != lam * (one - lam) * e_diff:
            report.violations.append(f"trial {t}: convexity identity violated")
        if not diff.is_zero() and lhs <= Scalar.exact(0):
            report.violations.append(f"trial {t}: convexity not strict")
    return report
