"""Confined-kink (meson) wave packets in 1D Ising chains: preparation,
propagation, and scattering at exact-diagonalization scale."""

__version__ = "0.1.0"

from .hilbert import (
    SectorBasis,
    SectorTable,
    StateVector,
    all_up_state,
    basis_state,
    expectation_sigma_x,
    fidelity,
    flip_count,
    kink_count,
    sector_project,
    sigma_x_profile,
)
from .model import (
    ChainConfig,
    CouplingSpec,
    DivergentTailError,
    apply_hamiltonian,
    coupling_matrix,
    diagonal_energies,
    pseudo_infinite_field,
    single_flip_gap,
)
from .wavepacket import WavePacketSpec, gaussian_profile, meson_wavepacket_state, two_packet_state

__all__ = [
    "ChainConfig",
    "CouplingSpec",
    "DivergentTailError",
    "SectorBasis",
    "SectorTable",
    "StateVector",
    "WavePacketSpec",
    "all_up_state",
    "apply_hamiltonian",
    "basis_state",
    "coupling_matrix",
    "diagonal_energies",
    "expectation_sigma_x",
    "fidelity",
    "flip_count",
    "gaussian_profile",
    "kink_count",
    "meson_wavepacket_state",
    "pseudo_infinite_field",
    "sector_project",
    "sigma_x_profile",
    "single_flip_gap",
    "two_packet_state",
]
