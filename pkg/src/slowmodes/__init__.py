"""Integrals of motion of spin chains as slow modes of dissipative Lindbladians."""

from .pauli import OperatorVector, PauliString, commutator, commutes, inner, multiply
from .models import (
    HamiltonianSpec,
    IomCatalogue,
    NoiseChannelSpec,
    build_hamiltonian,
    build_noise,
    iom_catalogue,
    modulated_energy,
)
from .superop import (
    SectorBasis,
    SparseSuperoperator,
    apply_lindbladian,
    assemble,
    brute_force_superoperator,
    build_sector_basis,
)
from .spectra import SpectrumResult, dense_spectrum, slow_modes, validate_spectrum
from .analysis import OverlapReport, chaoticity, overlap_report, phase_diagram
from .evolve import EvolutionTrace, decay_profile, fit_butterfly_velocity, propagate
from .pert import decompose, delta_gamma, gamma_v, n_integral, perturbation_report

__version__ = "0.1.0"

__all__ = [
    "OperatorVector",
    "PauliString",
    "commutator",
    "commutes",
    "inner",
    "multiply",
    "HamiltonianSpec",
    "IomCatalogue",
    "NoiseChannelSpec",
    "build_hamiltonian",
    "build_noise",
    "iom_catalogue",
    "modulated_energy",
    "SectorBasis",
    "SparseSuperoperator",
    "apply_lindbladian",
    "assemble",
    "brute_force_superoperator",
    "build_sector_basis",
    "SpectrumResult",
    "dense_spectrum",
    "slow_modes",
    "validate_spectrum",
    "OverlapReport",
    "chaoticity",
    "overlap_report",
    "phase_diagram",
    "EvolutionTrace",
    "decay_profile",
    "fit_butterfly_velocity",
    "propagate",
    "decompose",
    "delta_gamma",
    "gamma_v",
    "n_integral",
    "perturbation_report",
]
