"""Exact dense simulation of the quantum constructions at small scale."""
from .boltzmann import (
    PauliHamiltonian,
    clamp,
    clamped_state,
    dbm_free_energy,
    dbm_free_energy_expanded,
    dbm_gradient,
    gibbs_state,
    hamiltonian_matrix,
    is_density_matrix,
    projected_free_energy,
    qbm_free_energy,
    qbm_free_energy_logtrace,
    qbm_gradient,
    sampled_gradient,
    variational_free_energy,
)
from .states import (
    annealing_overlaps,
    coherent_encoding,
    geometric_schedule,
    partial_trace_second,
    purified_gibbs,
)
from .walks import WalkOperator, build_walk_operator, phase_gap

__all__ = [
    "PauliHamiltonian",
    "WalkOperator",
    "annealing_overlaps",
    "build_walk_operator",
    "clamp",
    "clamped_state",
    "coherent_encoding",
    "dbm_free_energy",
    "dbm_free_energy_expanded",
    "dbm_gradient",
    "geometric_schedule",
    "gibbs_state",
    "hamiltonian_matrix",
    "is_density_matrix",
    "partial_trace_second",
    "phase_gap",
    "projected_free_energy",
    "purified_gibbs",
    "qbm_free_energy",
    "qbm_free_energy_logtrace",
    "qbm_gradient",
    "sampled_gradient",
    "variational_free_energy",
]
