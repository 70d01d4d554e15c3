"""Bitstring basis, sector bookkeeping, and state-vector algebra.

Spin configurations of an N-site chain are encoded in the sigma^x product
basis as integers: bit (i-1) is set iff the spin at site i points down
along x. Sites are 1-based in every public signature; bit positions are
0-based internally. All reductions use numpy's pairwise summation, so
results are deterministic for a fixed platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

FROZEN_UP = "frozen-up"
OPEN = "open"

_NORM_TOL = 1e-9


def _index_dtype(n: int) -> type:
    return np.uint32 if n <= 31 else np.uint64


def all_indices(n: int) -> np.ndarray:
    """All 2**n configuration words, in index order."""
    return np.arange(1 << n, dtype=_index_dtype(n))


def flip_count(bits: int) -> int:
    """Number of down spins (popcount)."""
    return int(bits).bit_count()


def kink_count(bits: int, n: int, boundary: str = FROZEN_UP) -> int:
    """Number of anti-aligned neighboring pairs.

    With ``frozen-up`` boundaries, virtual up spins flank sites 1 and N,
    so the count includes the two edge bonds and is always even. With
    ``open`` boundaries only the N-1 interior bonds are counted.
    """
    if boundary == FROZEN_UP:
        return int(bits ^ (bits << 1)).bit_count()
    if boundary == OPEN:
        mask = (1 << (n - 1)) - 1
        return int((bits ^ (bits >> 1)) & mask).bit_count()
    raise ValueError(f"unknown boundary {boundary!r}")


def flip_counts(n: int) -> np.ndarray:
    """Vectorized flip_count over all 2**n configurations (uint8)."""
    return np.bitwise_count(all_indices(n)).astype(np.uint8)


def kink_counts(n: int, boundary: str = FROZEN_UP) -> np.ndarray:
    """Vectorized kink_count over all 2**n configurations (uint8)."""
    idx = all_indices(n).astype(np.uint64)
    if boundary == FROZEN_UP:
        word = idx ^ (idx << np.uint64(1))
    elif boundary == OPEN:
        word = (idx ^ (idx >> np.uint64(1))) & np.uint64((1 << (n - 1)) - 1)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    return np.bitwise_count(word).astype(np.uint8)


@dataclass
class StateVector:
    """Complex amplitude vector over the full 2**n_sites configuration basis."""

    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_sites,):
            raise ValueError(
                f"amplitude vector has length {self.amplitudes.size}, "
                f"expected 2**{self.n_sites}"
            )

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.n_sites, self.amplitudes / self.norm())

    def copy(self) -> "StateVector":
        return StateVector(self.n_sites, self.amplitudes.copy())


def basis_state(n: int, down_sites: tuple[int, ...] = ()) -> StateVector:
    """Product state with the listed sites down and all others up."""
    bits = 0
    for i in down_sites:
        if not 1 <= i <= n:
            raise ValueError(f"site {i} outside 1..{n}")
        bits |= 1 << (i - 1)
    amp = np.zeros(1 << n, dtype=np.complex128)
    amp[bits] = 1.0
    return StateVector(n, amp)


def all_up_state(n: int) -> StateVector:
    return basis_state(n)


@dataclass
class SectorTable:
    """Probabilities grouped by (kink count K, flip count Q)."""

    entries: dict[tuple[int, int], float]

    def probability(self, k: int, q: int) -> float:
        return self.entries.get((k, q), 0.0)

    def total(self) -> float:
        return float(sum(self.entries.values()))

    def items(self):
        return sorted(self.entries.items())


def sector_project(state: StateVector, boundary: str = FROZEN_UP) -> SectorTable:
    """Group the state's probability weight by (K, Q) sector."""
    probs = np.abs(state.amplitudes) ** 2
    kk = kink_counts(state.n_sites, boundary).astype(np.int64)
    qq = flip_counts(state.n_sites).astype(np.int64)
    key = kk * (state.n_sites + 2) + qq
    sums = np.bincount(key, weights=probs)
    entries = {}
    for flat in np.nonzero(sums)[0]:
        k, q = divmod(int(flat), state.n_sites + 2)
        entries[(k, q)] = float(sums[flat])
    return SectorTable(entries)


def expectation_sigma_x(state: StateVector, site: int) -> float:
    """<sigma^x_site> = P(up) - P(down) at the given 1-based site."""
    n = state.n_sites
    if not 1 <= site <= n:
        raise ValueError(f"site {site} outside 1..{n}")
    b = site - 1
    view = state.amplitudes.reshape(1 << (n - 1 - b), 2, 1 << b)
    p_down = float(np.sum(np.abs(view[:, 1, :]) ** 2))
    p_up = float(np.sum(np.abs(view[:, 0, :]) ** 2))
    return p_up - p_down


def sigma_x_profile(state: StateVector) -> np.ndarray:
    """<sigma^x_i> for every site, as one length-n array."""
    n = state.n_sites
    probs = np.abs(state.amplitudes) ** 2
    out = np.empty(n)
    for b in range(n):
        view = probs.reshape(1 << (n - 1 - b), 2, 1 << b)
        out[b] = view[:, 0, :].sum() - view[:, 1, :].sum()
    return out


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2 for normalized states of equal dimension."""
    if a.n_sites != b.n_sites:
        raise ValueError("state dimensions differ")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


class SectorBasis:
    """Index map for the truncated space of at most q_max down spins.

    Used by the driven state-preparation simulations, where the dynamics
    only explore low flip-count sectors. Basis words are stored sorted,
    so positions are found by binary search.
    """

    def __init__(self, n: int, q_max: int):
        if q_max < 0:
            raise ValueError("q_max must be non-negative")
        self.n = n
        self.q_max = min(q_max, n)
        counts = np.bitwise_count(np.arange(1 << n, dtype=_index_dtype(n)))
        self.states = np.nonzero(counts <= self.q_max)[0].astype(np.int64)
        self.q_of_state = counts[self.states].astype(np.int64)

    @property
    def size(self) -> int:
        return self.states.size

    def index_of(self, bits: int) -> int:
        pos = int(np.searchsorted(self.states, bits))
        if pos == self.size or self.states[pos] != bits:
            raise KeyError(f"configuration {bits:#x} not in sector")
        return pos

    def flip_maps(self) -> np.ndarray:
        """(n, size) array: row i maps each basis index to the index of the
        configuration with site i+1 flipped, or to ``size`` (a padding slot)
        when the flip leaves the truncated sector."""
        maps = np.full((self.n, self.size), self.size, dtype=np.int64)
        for b in range(self.n):
            flipped = self.states ^ (1 << b)
            pos = np.searchsorted(self.states, flipped)
            pos_clipped = np.minimum(pos, self.size - 1)
            ok = self.states[pos_clipped] == flipped
            maps[b, ok] = pos_clipped[ok]
        return maps

    def embed(self, coeffs: np.ndarray) -> StateVector:
        """Lift a sector coefficient vector into the full 2**n space."""
        amp = np.zeros(1 << self.n, dtype=np.complex128)
        amp[self.states] = coeffs
        return StateVector(self.n, amp)

    def project(self, state: StateVector) -> np.ndarray:
        return state.amplitudes[self.states].copy()

    def q_weights(self, coeffs: np.ndarray) -> np.ndarray:
        """Probability in each flip sector q = 0..q_max."""
        probs = np.abs(coeffs) ** 2
        return np.bincount(self.q_of_state, weights=probs, minlength=self.q_max + 1)


def sector_dimension(n: int, q_max: int) -> int:
    return sum(comb(n, q) for q in range(min(q_max, n) + 1))
