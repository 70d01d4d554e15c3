"""Gaussian profiles and bare single-flip (1-meson) wave-packet states.

Positions are measured in lattice units with x_i = i (1-based sites), so
momenta live in radians per site with the Brillouin zone (-pi, pi].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hilbert import StateVector


@dataclass(frozen=True)
class WavePacketSpec:
    """Gaussian packet: center x0, momentum k0, width dx, and the 1-based
    inclusive site range it is restricted to (then renormalized)."""

    x0: float
    k0: float
    dx: float
    support: tuple[int, int]

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        lo, hi = self.support
        if lo < 1 or hi < lo:
            raise ValueError(f"bad support range {self.support}")

    @property
    def sites(self) -> np.ndarray:
        lo, hi = self.support
        return np.arange(lo, hi + 1)


def gaussian_profile(spec: WavePacketSpec) -> np.ndarray:
    """Normalized complex amplitudes over the support sites."""
    x = spec.sites.astype(float)
    psi = np.exp(-((x - spec.x0) ** 2) / (2.0 * spec.dx**2) + 1j * spec.k0 * x)
    return psi / np.linalg.norm(psi)


def meson_wavepacket_state(spec: WavePacketSpec, n: int) -> StateVector:
    """Superposition of single-flip states weighted by the Gaussian profile."""
    lo, hi = spec.support
    if hi > n:
        raise ValueError(f"support {spec.support} exceeds chain of {n} sites")
    psi = gaussian_profile(spec)
    amp = np.zeros(1 << n, dtype=np.complex128)
    for site, a in zip(spec.sites, psi):
        amp[1 << (site - 1)] = a
    return StateVector(n, amp)


def two_packet_state(left: WavePacketSpec, right: WavePacketSpec, n: int) -> StateVector:
    """Both packet creations applied to the all-up state: every basis
    component carries exactly one flip per packet support."""
    if left.support[1] >= right.support[0]:
        raise ValueError("packet supports overlap")
    if right.support[1] > n:
        raise ValueError(f"support {right.support} exceeds chain of {n} sites")
    psi_l = gaussian_profile(left)
    psi_r = gaussian_profile(right)
    amp = np.zeros(1 << n, dtype=np.complex128)
    for sl, al in zip(left.sites, psi_l):
        base = 1 << (sl - 1)
        for sr, ar in zip(right.sites, psi_r):
            amp[base | (1 << (sr - 1))] = al * ar
    return StateVector(n, amp)


def half_chain_supports(n: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Default disjoint supports: left packet on 1..n//2, right on the rest."""
    nl = n // 2
    return (1, nl), (nl + 1, n)
