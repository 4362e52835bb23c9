"""Exception hierarchy shared by every padicgas module.

The CLI maps these onto process exit codes: validation problems
(ParameterError, DomainError, ScalarModeError) exit 1, failed invariant or
acceptance checks (CheckError) exit 2, and resource caps (CapacityError)
exit 3.
"""

from __future__ import annotations


class PadicGasError(Exception):
    """Base class for all library errors."""


class ParameterError(PadicGasError):
    """Structurally incompatible inputs (mismatched p, d, precision, lattice)."""


class DomainError(PadicGasError):
    """Mathematically invalid request (bad exponent range, point outside ball,
    missing tail model, infeasible configuration size)."""


class PrecisionError(PadicGasError):
    """Data below the working resolution p^-M where an operation needs a
    resolved value (e.g. a kernel evaluation between coincident-looking points).
    Distinct from an infinite-energy condition."""


class InfiniteEnergyError(PadicGasError):
    """A genuinely infinite quantity was requested, e.g. the mutual energy of
    two distinct measures sharing an atom."""


class CapacityError(PadicGasError):
    """A configured resource cap (cell count, enumeration size) was exceeded."""


class ScalarModeError(PadicGasError, TypeError):
    """Exact and float scalars were mixed in a single arithmetic expression."""


class CheckError(PadicGasError):
    """A verification step (weak-convergence bound, suite invariant) failed."""
