"""Point placement, stochastic minimization of H_n, and the mean-field
convergence experiment driver.

Annealing proposals live on the depth-l lattice centers, where distances and
hence H_n are exact; the Metropolis walk itself runs in float64 for speed and
the returned configuration is re-priced exactly.  Optimality certificates
come from two independent exact routes: brute-force enumeration over cell
subsets, and a profile dynamic program over the occupancy tree (the energy of
a configuration depends only on how many points each ball carries, and every
capacity-respecting profile is realizable, so the profile minimum equals the
configuration minimum).
"""

from __future__ import annotations

import itertools
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    from numba import njit
except ImportError:          # pragma: no cover - numba is an optional speedup
    njit = None

from .energy import CellDensity, DiscreteMeasure, Potential, hamiltonian
from .errors import (CapacityError, CheckError, DomainError, ParameterError)
from .padic import (LatticeCell, PadicPoint, SeededRng, _valuation_array,
                    cell_count, cell_index, enumerate_cells, min_pair_exponent,
                    reduce_to_cell)
from .radial import KernelParams
from .scalar import EXACT, FLOAT, Scalar, tree_sum


# ---------------------------------------------------------------------------
# recovery-sequence placement
# ---------------------------------------------------------------------------


@dataclass
class PlacementPlan:
    """Proportional placement record: ball k receives floor(target_k) + eps_k
    points with eps chosen by largest fractional remainder, so the total is
    exactly p^(2Md)."""

    M: int
    K: int
    L: int
    floors: Tuple[int, ...]
    eps: Tuple[int, ...]

    @property
    def counts(self) -> Tuple[int, ...]:
        return tuple(f + e for f, e in zip(self.floors, self.eps))

    def total(self) -> int:
        return sum(self.counts)

    def to_json(self) -> dict:
        return {"M": self.M, "K": self.K, "L": self.L,
                "floors": list(self.floors), "eps": list(self.eps),
                "counts": list(self.counts)}


def recovery_place(mu: CellDensity, K: int
                   ) -> Tuple[PlacementPlan, List[PadicPoint]]:
    """Distribute p^(2Md) points proportionally to a depth-M probability
    density with values in (0, p^(Kd) - 1].

    Each depth-M ball receives floor(p^(2Md) mu(B_k)) or one more point
    (largest-remainder rounding, ties broken by enumeration order), placed on
    the lexicographically first free depth-(2M+K) subcell centers.  Distinct
    subcells force a minimum pairwise distance p^(-2M-K+1).
    """
    if not mu.is_probability():
        raise ParameterError("recovery placement needs a probability density")
    p, d, L, M = mu.p, mu.d, mu.L, mu.l
    bound = Scalar.of(p ** (K * d) - 1, mu.mode)
    for v in mu.values:
        if v <= 0:
            raise DomainError("density must be bounded below by some eps > 0")
        if v > bound:
            raise DomainError("density exceeds p^(Kd) - 1; placement could overflow")
    total = p ** (2 * M * d)
    vol = mu.cell_volume()
    targets = [v * vol * total for v in mu.values]

    def _floor(s: Scalar) -> int:
        return math.floor(s.as_fraction() if s.is_exact else float(s))

    floors = [_floor(t) for t in targets]
    remainders = [t - f for t, f in zip(targets, floors)]
    deficit = total - sum(floors)
    # largest remainder first, enumeration index breaking ties
    order = sorted(range(len(floors)),
                   key=lambda k: (-float(remainders[k]), k))
    eps = [0] * len(floors)
    for k in order[:deficit]:
        eps[k] = 1
    plan = PlacementPlan(M=M, K=K, L=L, floors=tuple(floors), eps=tuple(eps))

    capacity = p ** ((M + K) * d)
    sub_depth = 2 * M + K
    points: List[PadicPoint] = []
    for cell, count in zip(mu.cells(), plan.counts):
        if count > capacity:
            raise DomainError("per-ball count exceeds the subcell capacity")
        if count == 0:
            continue
        centers = cell.subcell_centers(sub_depth)
        points.extend(centers[:count])
    return plan, points


def weak_gap(mu_M: DiscreteMeasure, mu: CellDensity, phi: CellDensity
             ) -> Tuple[Scalar, Scalar]:
    """|int phi d(mu_M) - int phi d(mu)| for a test function phi locally
    constant at depth <= M, together with the rounding bound
    p^((M+L)d) p^(-2Md) max|phi|.  Raises CheckError if the bound fails."""
    if phi.l > mu.l:
        raise DomainError("test function is deeper than the density lattice")
    if (phi.p, phi.d, phi.L) != (mu.p, mu.d, mu.L):
        raise ParameterError("test function and density lattices disagree")
    mode = mu.mode
    zero = Scalar.zero(mode)
    emp = tree_sum([w * phi.value_at(x) for x, w in mu_M.atoms], zero)
    vol = mu.cell_volume()
    tru = tree_sum([rho * vol * phi.value_at(cell.center())
                    for cell, rho in zip(mu.cells(), mu.values)], zero)
    gap = abs(emp - tru)
    p, d, L, M = mu.p, mu.d, mu.L, mu.l
    max_phi = zero
    for v in phi.values:
        if abs(v) > max_phi:
            max_phi = abs(v)
    bound = Scalar.of(p ** ((M + L) * d), mode) \
        / Scalar.of(p ** (2 * M * d), mode) * max_phi
    if gap > bound:
        raise CheckError(f"weak-convergence gap {gap!r} exceeds bound {bound!r}")
    return gap, bound


# ---------------------------------------------------------------------------
# annealing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling: sweeps stages at temperatures t0 * decay^s, with
    steps_per_temp proposals per stage (default 200 * n)."""

    t0: float = 1.0
    decay: float = 0.95
    steps_per_temp: Optional[int] = None
    sweeps: int = 60
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ParameterError("decay must lie in (0, 1)")
        if self.t0 <= 0 or self.sweeps < 1:
            raise ParameterError("schedule needs t0 > 0 and sweeps >= 1")


@dataclass
class AnnealResult:
    points: List[PadicPoint]
    energy: Scalar
    best_float: float
    trace: List[Tuple[int, float, float, float]]
    proposals: int
    accepted: int
    stopped_early: bool


def _anneal_stage_py(G, v, cells, occ, state, best_cells, idx, cand, u, T,
                     n, target, tol, use_target):
    """One temperature stage; numpy fallback for environments without numba."""
    accepted = 0
    e_pair, e_v, best = state[0], state[1], state[2]
    stopped = False
    for t in range(idx.shape[0]):
        i = idx[t]
        c_new = cand[t]
        c_old = cells[i]
        if c_new == c_old or occ[c_new]:
            continue
        if not np.isfinite(v[c_new]):
            continue
        s_new = float(G[c_new].take(cells).sum()) - float(G[c_new, c_old])
        s_old = float(G[c_old].take(cells).sum())
        d_pair = 2.0 * (s_new - s_old)
        d_v = n * (v[c_new] - v[c_old])
        d_e = d_pair + d_v
        if d_e <= 0.0 or u[t] < math.exp(-d_e / T):
            occ[c_old] = False
            occ[c_new] = True
            cells[i] = c_new
            e_pair += d_pair
            e_v += d_v
            accepted += 1
            e = e_pair + e_v
            if e < best:
                best = e
                best_cells[:] = cells
                if use_target and best <= target + tol:
                    stopped = True
                    break
    state[0], state[1], state[2] = e_pair, e_v, best
    return accepted, stopped


if njit is not None:
    @njit(cache=False)
    def _anneal_stage_nb(G, v, cells, occ, state, best_cells, idx, cand, u, T,
                         n, target, tol, use_target):   # pragma: no cover
        accepted = 0
        e_pair = state[0]
        e_v = state[1]
        best = state[2]
        stopped = False
        for t in range(idx.shape[0]):
            i = idx[t]
            c_new = cand[t]
            c_old = cells[i]
            if c_new == c_old or occ[c_new]:
                continue
            if not np.isfinite(v[c_new]):
                continue
            s_new = 0.0
            s_old = 0.0
            for k in range(n):
                ck = cells[k]
                s_new += G[c_new, ck]
                s_old += G[c_old, ck]
            s_new -= G[c_new, c_old]
            d_pair = 2.0 * (s_new - s_old)
            d_v = n * (v[c_new] - v[c_old])
            d_e = d_pair + d_v
            if d_e <= 0.0 or u[t] < math.exp(-d_e / T):
                occ[c_old] = False
                occ[c_new] = True
                cells[i] = c_new
                e_pair += d_pair
                e_v += d_v
                accepted += 1
                e = e_pair + e_v
                if e < best:
                    best = e
                    for k in range(best_cells.shape[0]):
                        best_cells[k] = cells[k]
                    if use_target and best <= target + tol:
                        stopped = True
                        break
        state[0] = e_pair
        state[1] = e_v
        state[2] = best
        return accepted, stopped
else:
    _anneal_stage_nb = None


def _lattice_geometry(params: KernelParams, L: int, l: int,
                      cap: int = 4096) -> Tuple[List[LatticeCell], np.ndarray]:
    """Cells of G_l plus the float64 kernel matrix between their centers
    (diagonal zeroed; proposals to an occupied cell are rejected anyway)."""
    cells = enumerate_cells(params.p, params.d, L, l)
    m = len(cells)
    if m > cap:
        raise CapacityError(f"annealing lattice of {m} cells exceeds cap {cap}")
    digits = L + l
    modulus = params.p ** digits
    mm = np.array([c.center_mantissas for c in cells], dtype=np.int64)
    diff = (mm[:, None, :] - mm[None, :, :]) % modulus
    val = _valuation_array(diff, params.p, digits).min(axis=2)
    exps = L - val
    G = np.float64(params.p) ** (exps * (params.alpha - params.d))
    np.fill_diagonal(G, 0.0)
    return cells, np.ascontiguousarray(G)


def anneal_minimize(n: int, V: Potential, params: KernelParams, L: int, l: int,
                    schedule: AnnealSchedule = AnnealSchedule(),
                    stream: int = 0, target: Optional[float] = None,
                    target_tol: float = 1e-9) -> AnnealResult:
    """Metropolis minimization of H_n over n distinct depth-l cell centers.

    One proposal relocates one point to a uniformly random cell (occupied
    cells and infinite-potential cells reject).  Deterministic per
    (schedule.seed, stream); the best configuration ever seen is returned and
    re-priced exactly through hamiltonian().  An optional known lower bound
    `target` stops the walk once reached.
    """
    if n < 1:
        raise DomainError("need at least one point")
    cells, G = _lattice_geometry(params, L, l)
    m = len(cells)
    if n > m:
        raise DomainError("more points than lattice cells in hard-core mode")
    v = np.array([float(V.value_at_cell(c)) for c in cells], dtype=np.float64)
    feasible = np.flatnonzero(np.isfinite(v))
    if n > feasible.size:
        raise DomainError("not enough finite-potential cells for n points")

    rng = SeededRng(schedule.seed, stream)
    occupied = np.zeros(m, dtype=np.bool_)
    state_cells = rng.generator.choice(feasible, size=n, replace=False).astype(np.int64)
    occupied[state_cells] = True
    e_pair = float(G[np.ix_(state_cells, state_cells)].sum())
    e_v = float(n * v[state_cells].sum())
    state = np.array([e_pair, e_v, e_pair + e_v], dtype=np.float64)
    best_cells = state_cells.copy()

    stage_fn = _anneal_stage_nb if _anneal_stage_nb is not None else _anneal_stage_py
    steps = schedule.steps_per_temp or 200 * n
    use_target = target is not None
    tgt = float(target) if use_target else 0.0
    trace: List[Tuple[int, float, float, float]] = []
    proposals = 0
    accepted = 0
    stopped = False
    for s in range(schedule.sweeps):
        T = schedule.t0 * schedule.decay ** s
        idx = rng.generator.integers(0, n, size=steps).astype(np.int64)
        cand = rng.generator.integers(0, m, size=steps).astype(np.int64)
        u = rng.generator.random(size=steps)
        acc, stop = stage_fn(G, v, state_cells, occupied, state, best_cells,
                             idx, cand, u, T, n, tgt, target_tol, use_target)
        proposals += steps
        accepted += int(acc)
        trace.append((s, T, float(state[0] + state[1]), float(state[2])))
        if stop:
            stopped = True
            break

    points = [cells[int(i)].center() for i in best_cells]
    energy = hamiltonian(points, V, params)
    return AnnealResult(points=points, energy=energy, best_float=float(state[2]),
                        trace=trace, proposals=proposals, accepted=accepted,
                        stopped_early=stopped)


# ---------------------------------------------------------------------------
# exact optimality certificates
# ---------------------------------------------------------------------------


def exhaustive_minimum(n: int, V: Potential, params: KernelParams, L: int,
                       l: int, cap: int = 3_000_000
                       ) -> Tuple[Scalar, List[Tuple[int, ...]], int]:
    """Exact minimum of H_n by enumerating every n-subset of lattice cells.

    Returns (minimum, argmin index tuples, subsets checked).  Guarded by a
    combination-count cap; use lattice_optimum_profile beyond it.
    """
    cells = enumerate_cells(params.p, params.d, L, l)
    m = len(cells)
    exact_v = [V.value_at_cell(c) for c in cells]
    feas = [i for i in range(m) if not exact_v[i].is_infinite]
    total = math.comb(len(feas), n)
    if total > cap:
        raise CapacityError(f"{total} subsets exceed cap {cap}")
    kern: Dict[int, Scalar] = {}

    def kernel_at(i: int, j: int) -> Scalar:
        e = cells[i].distance_exponent(cells[j])
        if e not in kern:
            kern[e] = params.kernel(e)
        return kern[e]

    best: Optional[Scalar] = None
    argmins: List[Tuple[int, ...]] = []
    checked = 0
    for combo in itertools.combinations(feas, n):
        checked += 1
        h = Scalar.zero(params.mode)
        for a in range(n):
            for b in range(a + 1, n):
                h = h + 2 * kernel_at(combo[a], combo[b])
        for i in combo:
            h = h + n * exact_v[i]
        if best is None or h < best:
            best = h
            argmins = [combo]
        elif h == best:
            argmins.append(combo)
    return best, argmins, checked


def lattice_optimum_profile(n: int, params: KernelParams, L: int, l: int,
                            v0: Scalar) -> Scalar:
    """Exact minimum of H_n over n distinct depth-l cell centers in B_L when
    the potential is the constant v0 on all of B_L.

    The pair energy of a configuration depends only on its occupancy profile
    (how many points sit in each ball at each level), pairs split at ball
    depth j contribute the kernel value at distance p^-j, and every profile
    respecting the per-ball capacities p^((l-j)d) is realizable.  Minimizing
    over profiles by dynamic programming therefore certifies the global
    configuration minimum.  The potential adds the constant n^2 v0.
    """
    if n < 1:
        raise DomainError("need at least one point")
    if n > cell_count(params.p, params.d, L, l):
        raise DomainError("more points than lattice cells")
    p, d = params.p, params.d
    branching = p ** d
    exact = params.mode == EXACT
    zero = Fraction(0) if exact else 0.0

    def kernel_raw(e: int):
        if exact:
            return Fraction(p) ** (e * (params.alpha - d))
        return float(p) ** (e * (params.alpha - d))

    cap: Dict[int, int] = {j: p ** ((l - j) * d) for j in range(-L, l + 1)}
    f_memo: Dict[Tuple[int, int], object] = {}
    g_memo: Dict[Tuple[int, int, int], object] = {}

    def F(j: int, k: int):
        if k <= 1:
            return zero
        key = (j, k)
        if key not in f_memo:
            f_memo[key] = G(j, 0, k)
        return f_memo[key]

    def G(j: int, t: int, r: int):
        # children t..branching-1 of a depth-j ball holding r points in total;
        # includes their internal energies and all pairs split at depth j
        if r == 0:
            return zero
        key = (j, t, r)
        if key in g_memo:
            return g_memo[key]
        child_cap = cap[j + 1]
        remaining_slots = (branching - 1 - t) * child_cap
        lo = max(0, r - remaining_slots)
        hi = min(r, child_cap)
        if lo > hi:
            raise DomainError("profile capacity exhausted")
        gj = kernel_raw(-j)
        best = None
        for k in range(lo, hi + 1):
            val = F(j + 1, k) + 2 * k * (r - k) * gj + G(j, t + 1, r - k)
            if best is None or val < best:
                best = val
        g_memo[key] = best
        return best

    pair_min = F(-L, n)
    result = Scalar.of(pair_min, params.mode)
    return result + n * n * v0


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def sphere_support_histogram(points: Sequence[PadicPoint],
                             params: KernelParams) -> Dict[Optional[int], int]:
    """Counts of points per sphere: {norm exponent j: #points with norm p^j};
    the None key collects points below resolution."""
    out: Dict[Optional[int], int] = {}
    for x in points:
        if (x.p, x.d) != (params.p, params.d):
            raise ParameterError("point does not match kernel parameters")
        e = x.norm_exponent()
        out[e] = out.get(e, 0) + 1
    return out


@dataclass
class GammaRow:
    """One experiment row: gap = achieved - reference (negative when the
    finite-n optimum undershoots the mean-field value by the missing
    self-energy)."""

    n: int
    achieved: Scalar
    reference: Scalar
    gap: Scalar
    wall_time: float
    lattice_depth: int
    count_deviation: Dict[int, float] = field(default_factory=dict)
    certified: bool = False

    def to_json(self) -> dict:
        return {"n": self.n, "achieved": self.achieved.to_json(),
                "reference": self.reference.to_json(),
                "gap": self.gap.to_json(), "wall_time": self.wall_time,
                "lattice_depth": self.lattice_depth,
                "count_deviation": {str(k): v for k, v in self.count_deviation.items()},
                "certified": self.certified}


def _default_depth(n: int, p: int, d: int, L: int) -> int:
    l = -L
    while cell_count(p, d, L, l) < n:
        l += 1
    return l + 1


def _count_deviations(points: Sequence[PadicPoint], n: int, p: int, d: int,
                      L: int, max_depth: int) -> Dict[int, float]:
    out: Dict[int, float] = {}
    for j in range(0, max_depth + 1):
        counts = Counter(cell_index(reduce_to_cell(x, j, L=L)) for x in points)
        target = Fraction(n, p ** ((L + j) * d))
        worst = Fraction(0)
        for idx in range(cell_count(p, d, L, j)):
            dev = abs(Fraction(counts.get(idx, 0)) - target)
            if dev > worst:
                worst = dev
        out[j] = float(worst)
    return out


def gamma_experiment(V: Potential, params: KernelParams,
                     n_sequence: Sequence[int], schedule: AnnealSchedule,
                     reference: Scalar, L: int = 0,
                     lattice_depths: Optional[Sequence[int]] = None
                     ) -> List[GammaRow]:
    """Anneal each n in n_sequence, record (1/n^2) H_n against the mean-field
    reference, and the per-depth deviations of the empirical measure from
    uniform occupancy.

    When V is constant on B_L the profile dynamic program supplies a
    certified lattice optimum, used both as the annealing stop target and to
    flag rows whose achieved value is exactly optimal.
    """
    rows: List[GammaRow] = []
    v0 = V.uniform_inside_value()
    for pos, n in enumerate(n_sequence):
        depth = (lattice_depths[pos] if lattice_depths is not None
                 else _default_depth(n, params.p, params.d, L))
        t0 = time.perf_counter()
        target = None
        optimum = None
        if v0 is not None:
            optimum = lattice_optimum_profile(n, params, L, depth, v0)
            target = float(optimum)
        result = anneal_minimize(n, V, params, L, depth, schedule=schedule,
                                 stream=pos, target=target)
        achieved = result.energy / (n * n)
        certified = optimum is not None and result.energy == optimum
        # compare occupancy down to the scale that n points can fill uniformly
        l_star = 0
        while cell_count(params.p, params.d, L, l_star + 1) <= n:
            l_star += 1
        deviations = _count_deviations(result.points, n, params.p, params.d,
                                       L, l_star)
        rows.append(GammaRow(n=n, achieved=achieved, reference=reference,
                             gap=achieved - reference,
                             wall_time=time.perf_counter() - t0,
                             lattice_depth=depth,
                             count_deviation=deviations,
                             certified=certified))
    return rows
