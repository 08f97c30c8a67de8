"""Birkhoff normal forms, Fermi coordinates and inverse problems."""

from .fermi import (
    FermiError, LoopFrame, SchrodingerFrame, WilliamsonData, fermi_general, fermi_periodic,
    fermi_schrodinger, invariants_from, reconstruct_symplectic, williamson,
)
from .inversion import (
    AmbiguityError, InversionError, RankDeficiencyError, RecoveredTaylor, ResidualError,
    invert_general, invert_schrodinger, recover_frequencies, unmix_trace_coefficients,
)
from .normalform import (
    HamiltonianSpec, NormalFormResult, SmallDivisorError, birkhoff, birkhoff_classical,
    birkhoff_quantum, realize_angle_shift, solve_homological,
)
from .observables import (
    Observable, average_classical, forward_averages, g_jks, make_observable, make_tau_observable,
    matrix_elements_quantum, observable_family, trace_kernel_u,
)
from .phasepoly import ActionPoly, FockState, PhasePoly, lie_transform, moyal_bracket, poisson_bracket

__version__ = "0.1.0"

__all__ = [
    "ActionPoly", "AmbiguityError", "FermiError", "FockState", "HamiltonianSpec", "InversionError",
    "LoopFrame", "NormalFormResult", "Observable", "PhasePoly", "RankDeficiencyError",
    "RecoveredTaylor", "ResidualError", "SchrodingerFrame", "SmallDivisorError", "WilliamsonData",
    "average_classical", "birkhoff", "birkhoff_classical", "birkhoff_quantum", "fermi_general",
    "fermi_periodic", "fermi_schrodinger", "forward_averages", "g_jks", "invariants_from",
    "invert_general", "invert_schrodinger", "lie_transform", "make_observable",
    "make_tau_observable", "matrix_elements_quantum", "moyal_bracket", "observable_family",
    "poisson_bracket", "realize_angle_shift", "recover_frequencies", "reconstruct_symplectic",
    "solve_homological", "trace_kernel_u", "unmix_trace_coefficients", "williamson",
]
