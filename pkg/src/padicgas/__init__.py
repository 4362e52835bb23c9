"""padicgas: ultrametric Coulomb gases over Q_p^d.

Exact evaluation of radial kernel integrals, Coulomb energies of discrete
and cell-density measures, Frostman equilibrium verification, hierarchical
spin-glass Hamiltonians with their continuum limit, and minimization of the
n-point Hamiltonian over hierarchical lattices.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (CapacityError, CheckError, DomainError,
                     InfiniteEnergyError, PadicGasError, ParameterError,
                     PrecisionError, ScalarModeError)
from .scalar import EXACT, FLOAT, Scalar, p_power, tree_sum
from .padic import (BELOW_RESOLUTION, DEFAULT_CELL_CAP, LatticeCell,
                    PadicCoordinate, PadicPoint, SeededRng, cell_count,
                    cell_index, enumerate_cells, is_prime, min_pair_exponent,
                    pair_exponent_counts, reduce_to_cell, sample_uniform,
                    subtract)
from .radial import (KernelParams, RadialTailFunction, ball_overlap_closed,
                     ball_overlap_tail, ball_overlap_truncated, ball_volume,
                     capacity_ball, fundamental_solution, gamma_factor,
                     green_constant, pair_cell_interaction, shell_integral,
                     shell_integral_truncated, sphere_volume, taibleson_apply,
                     uniform_ball_potential)
from .energy import (CellDensity, DiscreteMeasure, FrostmanReport,
                     PositivityReport, Potential, electrostatic_potential,
                     frostman_check, hamiltonian, mean_field_energy, mollify,
                     mutual_energy, mutual_energy_pairsum, positivity_suite,
                     potential_integral)
from .spinglass import (CouplingMatrix, SpinGlassInstance,
                        approximate_on_lattice, continuum_limit_study,
                        coupling, discrete_energy, hamiltonian_view,
                        refine_instance)
from .minimize import (AnnealResult, AnnealSchedule, GammaRow, PlacementPlan,
                       anneal_minimize, exhaustive_minimum, gamma_experiment,
                       lattice_optimum_profile, recovery_place,
                       sphere_support_histogram, weak_gap)

__all__ = [name for name in dir() if not name.startswith("_")]
