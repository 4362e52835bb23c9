"""Hierarchical spin-glass Hamiltonian on the lattice G_l and its continuum
limit.

The coupling J between distinct cells is the kernel value at their center
distance; on the diagonal it is chosen so that p^(-2ld) * J equals the exact
same-cell double integral p^(-l(d+alpha)) (1 - p^-d)/(1 - p^-alpha).  With
that convention the quadratic form

    I_L(rho_l dx) = Sum_{a,b} p^(-2ld) J_ab rho(a) rho(b)
                    + Sum_a p^(-ld) rho(a) V0(a)

is exactly the continuum Coulomb energy of the piecewise-constant density
rho_l plus its potential term, for every depth l, and -I_L is the spin-glass
Hamiltonian.  Refining a step function below its own scale leaves the energy
unchanged exactly, which turns the continuum-limit statement into a finite
identity for step data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .energy import CellDensity, Potential, mean_field_energy
from .errors import CapacityError, DomainError, ParameterError
from .padic import LatticeCell, PadicPoint, cell_count, enumerate_cells
from .radial import KernelParams, pair_cell_interaction
from .scalar import EXACT, Scalar, tree_sum

COUPLING_MATERIALIZE_CAP = 4096


def coupling(params: KernelParams, L: int, l: int, cell_a: LatticeCell,
             cell_b: LatticeCell) -> Scalar:
    """The spin-glass coupling J between two cells of G_l."""
    if (cell_a.L, cell_a.l) != (L, l) or (cell_b.L, cell_b.l) != (L, l):
        raise ParameterError("cells do not belong to the requested lattice")
    cell_a._check_lattice(cell_b)
    e = cell_a.distance_exponent(cell_b)
    if e is None:
        one = params.one()
        return (params.pow_d(l) / params.pow_alpha(l)
                * (one - params.pow_d(-1)) / (one - params.pow_alpha(-1)))
    return params.kernel(e)


class CouplingMatrix:
    """Symmetric coupling table over G_l x G_l.

    Lattices up to COUPLING_MATERIALIZE_CAP cells materialize the pairwise
    distance exponents once (diagonal marked separately); larger lattices
    compute entries on demand.
    """

    def __init__(self, params: KernelParams, L: int, l: int,
                 materialize_cap: int = COUPLING_MATERIALIZE_CAP):
        self.params = params
        self.L = L
        self.l = l
        self.cells = enumerate_cells(params.p, params.d, L, l)
        self.size = len(self.cells)
        self._diag = coupling(params, L, l, self.cells[0], self.cells[0])
        self._exponents: Optional[List[List[Optional[int]]]] = None
        if self.size <= materialize_cap:
            self._exponents = [[None] * self.size for _ in range(self.size)]
            for i in range(self.size):
                row = self._exponents[i]
                for j in range(i + 1, self.size):
                    e = self.cells[i].distance_exponent(self.cells[j])
                    row[j] = e
                    self._exponents[j][i] = e

    def value(self, i: int, j: int) -> Scalar:
        if i == j:
            return self._diag
        if self._exponents is not None:
            e = self._exponents[i][j]
        else:
            e = self.cells[i].distance_exponent(self.cells[j])
        return self.params.kernel(e)


@dataclass(frozen=True)
class SpinGlassInstance:
    """Field values on G_l: occupation density rho and on-site potential v0,
    both in enumerate_cells order."""

    L: int
    l: int
    rho: Tuple[Scalar, ...]
    v0: Tuple[Scalar, ...]

    def __post_init__(self):
        if len(self.rho) != len(self.v0):
            raise ParameterError("rho and v0 tables must have equal size")
        for value in (*self.rho, *self.v0):
            if value.is_infinite:
                raise ParameterError("instance fields must be finite")

    def to_json(self) -> dict:
        return {"L": self.L, "l": self.l,
                "rho": [v.to_json() for v in self.rho],
                "v0": [v.to_json() for v in self.v0]}

    @staticmethod
    def from_json(obj: dict) -> "SpinGlassInstance":
        return SpinGlassInstance(
            obj["L"], obj["l"],
            tuple(Scalar.from_json(v) for v in obj["rho"]),
            tuple(Scalar.from_json(v) for v in obj["v0"]))


def discrete_energy(instance: SpinGlassInstance, params: KernelParams) -> Scalar:
    """I_L at depth l: the J-weighted quadratic form plus the linear V0 term.

    Evaluated as the literal double sum over cell pairs, so it serves as an
    independent route against mean_field_energy on the matching cell density.
    """
    L, l = instance.L, instance.l
    expected = cell_count(params.p, params.d, L, l)
    if len(instance.rho) != expected:
        raise ParameterError("instance size does not match the lattice")
    matrix = CouplingMatrix(params, L, l)
    n = matrix.size
    w2 = params.pow_d(-2 * l)          # p^(-2ld)
    w1 = params.pow_d(-l)              # p^(-ld)
    terms: List[Scalar] = []
    for i in range(n):
        ri = instance.rho[i]
        for j in range(n):
            terms.append(w2 * matrix.value(i, j) * ri * instance.rho[j])
    quad = tree_sum(terms, Scalar.zero(params.mode))
    lin = tree_sum([w1 * r * v for r, v in zip(instance.rho, instance.v0)],
                   Scalar.zero(params.mode))
    return quad + lin


def hamiltonian_view(instance: SpinGlassInstance, params: KernelParams) -> Scalar:
    """The spin-glass Hamiltonian H_{L,l} = -I_L."""
    return -discrete_energy(instance, params)


FieldLike = Union[CellDensity, Callable[[PadicPoint], Scalar]]


def approximate_on_lattice(f: FieldLike, p: int, d: int, L: int, l: int) -> CellDensity:
    """Sample a field at the depth-l cell centers: the step approximation
    f_l = Sum_a f(center_a) 1_{cell_a}.  A function already locally constant
    at depth l0 <= l is reproduced exactly."""
    if isinstance(f, CellDensity):
        if (f.p, f.d, f.L) != (p, d, L):
            raise ParameterError("field lattice does not match the request")
        if l >= f.l:
            return f.refine(l)
        fn = f.value_at
    else:
        fn = f
    return CellDensity.from_function(fn, p, d, L, l)


@dataclass
class StudyRow:
    l: int
    energy: Scalar
    gap: Scalar


def continuum_limit_study(rho: CellDensity, v0: CellDensity,
                          params: KernelParams,
                          l_range: Sequence[int]) -> List[StudyRow]:
    """Rows (l, I_L(rho_l dx), gap to I_L(rho dx)).

    rho and v0 are step functions at some depth l0 (the exact surrogate for
    continuous data): the gap vanishes identically once l >= l0.
    """
    rho._check_lattice(v0)
    p, d, L = rho.p, rho.d, rho.L
    reference = _field_energy(rho, v0, params)
    rows = []
    for l in l_range:
        rho_l = approximate_on_lattice(rho, p, d, L, l)
        v0_l = approximate_on_lattice(v0, p, d, L, l)
        instance = SpinGlassInstance(L, l, rho_l.values, v0_l.values)
        energy = discrete_energy(instance, params)
        rows.append(StudyRow(l=l, energy=energy, gap=energy - reference))
    return rows


def _field_energy(rho: CellDensity, v0: CellDensity,
                  params: KernelParams) -> Scalar:
    """Continuum energy of rho dx with on-site potential v0 (no probability
    normalization): E(rho, rho) + int v0 rho dx."""
    from .energy import mutual_energy
    quad = mutual_energy(rho, rho, params)
    vol = rho.cell_volume()
    lin = tree_sum([r * vol * v for r, v in zip(rho.values, v0.values)],
                   Scalar.zero(params.mode))
    return quad + lin


def refine_instance(instance: SpinGlassInstance, p: int, d: int) -> SpinGlassInstance:
    """Deepen every cell one level, copying values to the children.  The
    represented fields are unchanged, and so is discrete_energy, exactly."""
    rho = CellDensity(p, d, instance.L, instance.l, instance.rho).refine(instance.l + 1)
    v0 = CellDensity(p, d, instance.L, instance.l, instance.v0).refine(instance.l + 1)
    return SpinGlassInstance(instance.L, instance.l + 1, rho.values, v0.values)
