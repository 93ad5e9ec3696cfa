"""Driven collective-spin simulator.

Dense Dicke-basis quantum dynamics for a harmonically driven Josephson-type
spin system, with Fisher-information metrology, classical mean-field chaos
diagnostics, and sweep orchestration on top.
"""

__version__ = "0.1.0"

from .spin_core import (
    NumericalError,
    SpinSystem,
    SpinOperators,
    BasisTransform,
    build_spin_system,
    coherent_state,
    measurement_basis,
    expectation,
)
from .propagation import (
    ModelParams,
    PeriodPropagator,
    period_propagator,
    stroboscopic_evolve,
    evolve_family,
    derivative_state,
    floquet_hamiltonian,
)

__all__ = [
    "NumericalError",
    "SpinSystem",
    "SpinOperators",
    "BasisTransform",
    "build_spin_system",
    "coherent_state",
    "measurement_basis",
    "expectation",
    "ModelParams",
    "PeriodPropagator",
    "period_propagator",
    "stroboscopic_evolve",
    "evolve_family",
    "derivative_state",
    "floquet_hamiltonian",
    "__version__",
]
