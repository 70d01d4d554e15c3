"""Confinement potential, bare mass, Bloch bands, and kinematics.

Band structures are computed on periodic rings by block-diagonalizing in
the symmetry sectors of a translation-like permutation. Meson bands use
plain translation (plus the global spin flip when hx = 0); kink bands
use a twisted ring, where every coupling whose minimum-image path
crosses one cut has its sign reversed. Odd domain-wall sectors, absent
on an untwisted ring, appear there as the low-lying states. The twisted
translation (shift, then flip site 1) has order 2*n_ring, so kink
momenta come on a grid of spacing pi/n_ring; a rigid offset of the kink
momentum labels relative to other conventions cannot be excluded, which
does not affect pair kinematics at fixed total momentum.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .model import CouplingSpec, tail_sum, weighted_tail_sum

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Analytic spectrum pieces

def bare_mass(spec: CouplingSpec, hx: float = 0.0) -> float:
    """Energy of one flipped spin on the infinite chain:
    2 hx + 4 sum_{r>=1} J(r)."""
    return 2.0 * hx + 4.0 * tail_sum(spec, 1)


def kink_potential(spec: CouplingSpec, hx: float, ell: int) -> float:
    """Energy of a domain of ell flipped spins (a kink pair at distance
    ell) on the infinite chain:

        V(ell) = 4 [ ell * sum_{r>=ell} J(r) + sum_{r<ell} r J(r) ] + 2 ell hx
    """
    if ell < 1:
        raise ValueError("ell must be >= 1")
    rs = np.arange(1, ell)
    finite = float(np.sum(rs * spec.coupling(rs))) if ell > 1 else 0.0
    return 4.0 * (ell * tail_sum(spec, ell) + finite) + 2.0 * ell * hx


def kink_potential_double_sum(spec: CouplingSpec, hx: float, ell: int) -> float:
    """V(ell) in the unrearranged form ell*m0 - 4 sum_i sum_r J(r);
    kept as an independent consistency route for the single-sum form."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    attract = sum(
        spec.coupling(r) for i in range(1, ell) for r in range(1, ell - i + 1)
    )
    return ell * bare_mass(spec, hx) - 4.0 * attract


def kink_potential_limit(spec: CouplingSpec) -> float:
    """V(ell -> inf) at hx = 0: 4 sum_{r>=1} r J(r). Raises when the
    couplings decay too slowly for kinks to unbind."""
    return 4.0 * weighted_tail_sum(spec, 1)


# ---------------------------------------------------------------------------
# Symmetry-sector machinery
#
# Sectors of an abelian permutation group acting on basis words. For a
# group {U_g} with character chi and representative word a with
# stabilizer S_a, the symmetrized state sum_g chi*(g) U_g |a> has norm
# sqrt(|G| |S_a|) and exists iff chi is trivial on S_a. If H|a> =
# sum_t h_t |c_t> and |c_t> = U_{g_t} |b_t> with b_t the representative
# of c_t, then <b;chi| H |a;chi> = sqrt(|S_b|/|S_a|) sum_t h_t chi(g_t).


def _rotate_left(words: np.ndarray, n: int) -> np.ndarray:
    mask = np.uint64((1 << n) - 1)
    w = words.astype(np.uint64)
    return (((w << np.uint64(1)) | (w >> np.uint64(n - 1))) & mask).astype(np.int64)


@dataclass
class _SymmetryGroup:
    order: int
    momenta: np.ndarray      # physical momentum per sector index
    characters: np.ndarray   # (n_sectors, |G|) table chi_m(g)
    rep: np.ndarray          # representative word per word
    g_of: np.ndarray         # element index g with U_g |rep> = |word>
    stab_size: np.ndarray    # |Stab| per word
    reps: np.ndarray         # sorted unique representative words
    fixed_mask: np.ndarray   # (|G|, n_reps) bool: element fixes the rep


@functools.lru_cache(maxsize=16)
def _build_group(n: int, kind: str, all_parities: bool = False) -> _SymmetryGroup:
    """kind 'translation' (order n), 'translation+flip' (order 2n, only
    flip-even characters unless all_parities), or 'twisted' (cyclic of
    order 2n generated by shift-then-flip-site-1)."""
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    if kind == "twisted":
        gen = _rotate_left(idx, n) ^ 1
        elems = [idx.copy()]
        for _ in range(2 * n - 1):
            elems.append(gen[elems[-1]])
        inv = np.array([(-r) % (2 * n) for r in range(2 * n)])
        ms = np.arange(2 * n)
        momenta = TWO_PI * ms / (2 * n)
        chars = np.exp(-1j * np.outer(momenta, np.arange(2 * n)))
    elif kind in ("translation", "translation+flip"):
        shifts = [idx.copy()]
        for _ in range(n - 1):
            shifts.append(_rotate_left(shifts[-1], n))
        elems = shifts
        inv = np.array([(-r) % n for r in range(n)])
        ms = np.arange(n)
        momenta = TWO_PI * ms / n
        chars = np.exp(-1j * np.outer(momenta, np.arange(n)))
        if kind == "translation+flip":
            flip = idx ^ (dim - 1)
            elems = elems + [flip[e] for e in elems]
            inv = np.concatenate([inv, inv + n])
            even = np.concatenate([chars, chars], axis=1)
            if all_parities:
                odd = np.concatenate([chars, -chars], axis=1)
                chars = np.concatenate([even, odd], axis=0)
                momenta = np.concatenate([momenta, momenta])
            else:
                chars = even
    else:
        raise ValueError(f"unknown symmetry kind {kind!r}")

    table = np.stack(elems)                          # table[g, c] = U_g(c)
    rep = table.min(axis=0)
    g_star = np.argmax(table == rep[None, :], axis=0)  # U_{g*} |c> = |rep>
    g_of = inv[g_star]                                 # U_{g_of} |rep> = |c>
    stab_size = (table == idx[None, :]).sum(axis=0).astype(np.int64)
    reps = np.nonzero(rep == idx)[0]
    fixed_mask = table[:, reps] == reps[None, :]
    return _SymmetryGroup(
        len(elems), momenta, chars, rep, g_of, stab_size, reps, fixed_mask
    )


def _sector_reps(group: _SymmetryGroup, sector: int) -> np.ndarray:
    """Representative words whose orbit supports the sector's character."""
    chi = group.characters[sector]
    sums = chi @ group.fixed_mask
    sizes = group.fixed_mask.sum(axis=0)
    return group.reps[np.abs(sums - sizes) < 1e-9]


def _sector_hamiltonian(
    diag: np.ndarray,
    hz: float,
    n: int,
    group: _SymmetryGroup,
    sector: int,
    reps: np.ndarray,
) -> sparse.csr_matrix:
    dim_sec = reps.size
    col_of = -np.ones(diag.size, dtype=np.int64)
    col_of[reps] = np.arange(dim_sec)
    chi = group.characters[sector]
    sqrt_stab = np.sqrt(group.stab_size.astype(float))

    rows = [np.arange(dim_sec)]
    cols = [np.arange(dim_sec)]
    vals = [diag[reps].astype(complex)]
    if hz != 0.0:
        all_cols = np.arange(dim_sec)
        for b in range(n):
            targets = reps ^ (1 << b)
            t_rep = group.rep[targets]
            t_row = col_of[t_rep]
            ok = t_row >= 0
            if not np.any(ok):
                continue
            phase = chi[group.g_of[targets[ok]]]
            weight = -hz * phase * sqrt_stab[t_rep[ok]] / sqrt_stab[reps[ok]]
            rows.append(t_row[ok])
            cols.append(all_cols[ok])
            vals.append(weight)
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim_sec, dim_sec),
    ).tocsr()


def _lowest_eigs(mat: sparse.csr_matrix, k: int) -> np.ndarray:
    dim = mat.shape[0]
    if dim == 0:
        return np.array([])
    if dim <= max(6 * k, 192):
        return np.linalg.eigvalsh(mat.toarray())[:k]
    vals = spla.eigsh(mat, k=min(k, dim - 2), which="SA", return_eigenvectors=False)
    return np.sort(vals)


@functools.lru_cache(maxsize=16)
def _ring_diag_cached(
    spec: CouplingSpec, n: int, hx: float, twisted: bool
) -> np.ndarray:
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    spins = 1.0 - 2.0 * ((idx[:, None] >> np.arange(n)[None, :]) & 1)
    energies = -hx * spins.sum(axis=1) if hx else np.zeros(dim)
    for i in range(n):
        for j in range(i + 1, n):
            d = j - i
            wrap = n - d
            if twisted and d == wrap:
                continue
            r = min(d, wrap)
            sign = -1.0 if (twisted and d > wrap) else 1.0
            energies -= sign * spec.coupling(r) * spins[:, i] * spins[:, j]
    energies.setflags(write=False)
    return energies


def ring_diagonal_energies(
    spec: CouplingSpec, n: int, hx: float = 0.0, twisted: bool = False
) -> np.ndarray:
    """Diagonal energies of every word on the periodic ring with
    minimum-image couplings J(min(d, n-d)).

    On the twisted ring, couplings whose shorter path wraps through the
    cut between sites n and 1 change sign. For even n, pairs at the tie
    distance n/2 have no shorter path and are dropped from the twisted
    ring only: no sign assignment at the tie distance is compatible with
    twisted translation, and the perturbation decays with ring size.
    """
    return _ring_diag_cached(spec, n, hx, twisted)


@dataclass
class Band:
    label: str
    momenta: np.ndarray
    energies: np.ndarray

    def energy_at(self, k: float) -> float:
        """Periodic linear interpolation of the dispersion."""
        ks = np.mod(self.momenta, TWO_PI)
        order = np.argsort(ks)
        ks, es = ks[order], self.energies[order]
        ks = np.concatenate([ks, [ks[0] + TWO_PI]])
        es = np.concatenate([es, [es[0]]])
        return float(np.interp(np.mod(k, TWO_PI), ks, es))

    def bandwidth(self) -> float:
        return float(self.energies.max() - self.energies.min())


@dataclass
class BandSet:
    """Dispersions E(k) relative to the ring ground-state energy."""

    n_ring: int
    hz: float
    bands: list[Band]
    ground_energy: float = 0.0

    def band(self, label: str) -> Band:
        for b in self.bands:
            if b.label == label:
                return b
        raise KeyError(f"no band labeled {label!r}")

    def labels(self) -> list[str]:
        return [b.label for b in self.bands]

    def merged(self, other: "BandSet") -> "BandSet":
        return BandSet(
            self.n_ring, self.hz, self.bands + other.bands, self.ground_energy
        )


def ground_energy(spec: CouplingSpec, hz: float, n_ring: int, hx: float = 0.0) -> float:
    """Ground-state energy of the periodic ring at the given field."""
    kind = "translation+flip" if hx == 0.0 else "translation"
    group = _build_group(n_ring, kind)
    diag = ring_diagonal_energies(spec, n_ring, hx=hx)
    reps = _sector_reps(group, 0)
    mat = _sector_hamiltonian(diag, hz, n_ring, group, 0, reps)
    return float(_lowest_eigs(mat, 1)[0])


def meson_bands(
    spec: CouplingSpec,
    hz: float,
    n_ring: int,
    n_bands: int = 2,
    hx: float = 0.0,
) -> BandSet:
    """Lowest translation-invariant excitation bands of the periodic ring,
    labeled M1, M2, ... by energy order at each momentum.

    At hx = 0 the ring has an exact global-spin-flip symmetry and the
    ferromagnetic vacuum is doubly degenerate; diagonalizing in the
    flip-even sector keeps exactly one vacuum and one copy of each band.
    """
    kind = "translation+flip" if hx == 0.0 else "translation"
    group = _build_group(n_ring, kind)
    diag = ring_diagonal_energies(spec, n_ring, hx=hx)
    per_sector = []
    e_g = None
    for m in range(n_ring):
        reps = _sector_reps(group, m)
        mat = _sector_hamiltonian(diag, hz, n_ring, group, m, reps)
        want = n_bands + (1 if m == 0 else 0)
        vals = _lowest_eigs(mat, want)
        if m == 0:
            e_g = float(vals[0])
            vals = vals[1:]
        if vals.size < n_bands:
            raise ValueError(f"sector {m} holds fewer than {n_bands} bands")
        per_sector.append(vals)
    momenta = TWO_PI * np.arange(n_ring) / n_ring
    bands = [
        Band(f"M{j + 1}", momenta, np.array([v[j] - e_g for v in per_sector]))
        for j in range(n_bands)
    ]
    return BandSet(n_ring, hz, bands, ground_energy=e_g)


def kink_bands(spec: CouplingSpec, hz: float, n_ring: int, n_bands: int = 2) -> BandSet:
    """Lowest bands of the twisted ring (odd domain-wall sector), labeled
    K1, K2, ... and referenced to the untwisted ground-state energy."""
    e_g = ground_energy(spec, hz, n_ring, hx=0.0)
    group = _build_group(n_ring, "twisted")
    diag = ring_diagonal_energies(spec, n_ring, twisted=True)
    per_sector = []
    for m in range(2 * n_ring):
        reps = _sector_reps(group, m)
        mat = _sector_hamiltonian(diag, hz, n_ring, group, m, reps)
        vals = _lowest_eigs(mat, n_bands)
        if vals.size < n_bands:
            raise ValueError(f"twisted sector {m} holds fewer than {n_bands} bands")
        per_sector.append(vals)
    momenta = TWO_PI * np.arange(2 * n_ring) / (2 * n_ring)
    bands = [
        Band(f"K{j + 1}", momenta, np.array([v[j] - e_g for v in per_sector]))
        for j in range(n_bands)
    ]
    return BandSet(n_ring, hz, bands, ground_energy=e_g)


def ring_spectrum_full(
    spec: CouplingSpec,
    hz: float,
    n_ring: int,
    hx: float = 0.0,
    twisted: bool = False,
) -> np.ndarray:
    """Complete ring spectrum assembled from all symmetry sectors.

    Validation helper: must equal the dense spectrum as a multiset.
    """
    if twisted:
        group = _build_group(n_ring, "twisted")
    elif hx == 0.0:
        group = _build_group(n_ring, "translation+flip", all_parities=True)
    else:
        group = _build_group(n_ring, "translation")
    diag = ring_diagonal_energies(spec, n_ring, hx=hx, twisted=twisted)
    out = []
    for m in range(group.characters.shape[0]):
        reps = _sector_reps(group, m)
        if reps.size == 0:
            continue
        mat = _sector_hamiltonian(diag, hz, n_ring, group, m, reps)
        out.append(np.linalg.eigvalsh(mat.toarray()))
    return np.sort(np.concatenate(out))


def dense_ring_hamiltonian(
    spec: CouplingSpec,
    hz: float,
    n_ring: int,
    hx: float = 0.0,
    twisted: bool = False,
) -> np.ndarray:
    """Explicit 2^n x 2^n ring Hamiltonian (oracle for small rings)."""
    dim = 1 << n_ring
    h = np.diag(
        ring_diagonal_energies(spec, n_ring, hx=hx, twisted=twisted)
    ).astype(complex)
    cols = np.arange(dim)
    for b in range(n_ring):
        h[cols ^ (1 << b), cols] += -hz
    return h


# ---------------------------------------------------------------------------
# Kinematics

@dataclass
class ChannelSolution:
    """Outgoing two-particle pair conserving total momentum exactly and
    total energy up to ``residual``."""

    band_a: str
    k_a: float
    band_b: str
    k_b: float
    residual: float


def _family(label: str) -> str:
    return label[0]


def kinematic_channels(
    bands: BandSet,
    incoming: tuple[tuple[str, float], tuple[str, float]],
    tol: float = 0.02,
    refine: int = 8,
) -> list[ChannelSolution]:
    """All outgoing two-particle pairs that conserve total momentum exactly
    and total energy within ``tol``.

    Pairs mix only within a particle family (meson with meson, kink with
    kink): domain-wall parity forbids odd kink numbers. Candidate momenta
    run over a refined grid and energy matches are found by linear
    interpolation, so exact crossings carry zero residual; a pair whose
    best mismatch is below ``tol`` without crossing is reported with that
    mismatch as residual.
    """
    (la, k1), (lb, k2) = incoming
    e_tot = bands.band(la).energy_at(k1) + bands.band(lb).energy_at(k2)
    k_tot = np.mod(k1 + k2, TWO_PI)
    solutions: list[ChannelSolution] = []
    for ia, band_a in enumerate(bands.bands):
        for band_b in bands.bands[ia:]:
            if _family(band_a.label) != _family(band_b.label):
                continue
            step = TWO_PI / (bands.n_ring * refine * 2)
            ks = np.arange(0.0, TWO_PI, step)
            ea = np.array([band_a.energy_at(k) for k in ks])
            eb = np.array([band_b.energy_at(np.mod(k_tot - k, TWO_PI)) for k in ks])
            f = ea + eb - e_tot
            fw = np.append(f, f[0])
            seen: list[tuple[float, float]] = []

            def _is_dup(pair):
                return any(
                    min(abs(pair[0] - p0), TWO_PI - abs(pair[0] - p0)) < step
                    and min(abs(pair[1] - p1), TWO_PI - abs(pair[1] - p1)) < step
                    for p0, p1 in seen
                )

            for i in range(ks.size):
                f0, f1 = fw[i], fw[i + 1]
                root = None
                if f0 == 0.0:
                    root = ks[i]
                elif f0 * f1 < 0.0:
                    root = ks[i] + step * f0 / (f0 - f1)
                if root is None:
                    continue
                ka = float(np.mod(root, TWO_PI))
                kb = float(np.mod(k_tot - ka, TWO_PI))
                pair = (ka, kb)
                if band_a.label == band_b.label and ka > kb:
                    pair = (kb, ka)
                if _is_dup(pair):
                    continue
                seen.append(pair)
                solutions.append(
                    ChannelSolution(band_a.label, pair[0], band_b.label, pair[1], 0.0)
                )
            if not seen:
                i_min = int(np.argmin(np.abs(f)))
                if abs(f[i_min]) < tol:
                    ka = float(ks[i_min])
                    kb = float(np.mod(k_tot - ka, TWO_PI))
                    solutions.append(
                        ChannelSolution(
                            band_a.label, ka, band_b.label, kb, float(f[i_min])
                        )
                    )
    return solutions


def channel_closure_margin(
    meson: BandSet,
    kink: BandSet,
    incoming_momenta: tuple[float, float],
    out_band: str = "K1",
) -> float:
    """Signed distance of the incoming M1-pair energy from the outgoing
    two-particle continuum at the conserved total momentum.

    The continuum at total momentum K spans [min, max] over pairs
    E(k) + E(K - k); the channel is kinematically open iff the incoming
    energy lies inside. Positive margin = closed (energy outside the
    band), negative = open.
    """
    k1, k2 = incoming_momenta
    m1 = meson.band("M1")
    e_tot = m1.energy_at(k1) + m1.energy_at(k2)
    k_tot = np.mod(k1 + k2, TWO_PI)
    band = kink.band(out_band)
    ks = np.arange(0.0, TWO_PI, TWO_PI / (kink.n_ring * 16))
    pair = np.array(
        [band.energy_at(k) + band.energy_at(np.mod(k_tot - k, TWO_PI)) for k in ks]
    )
    return float(max(pair.min() - e_tot, e_tot - pair.max()))


class ChannelNeverOpensError(RuntimeError):
    pass


def unbinding_threshold(
    spec: CouplingSpec,
    incoming_momenta: tuple[float, float],
    hz_low: float,
    hz_high: float,
    n_ring: int = 16,
    tol_hz: float = 0.005,
    out_band: str = "K1",
) -> float:
    """Bisect on hz for the opening of the unbound-kink-pair channel,
    recomputing meson and kink bands at every step."""

    def margin(hz: float) -> float:
        mb = meson_bands(spec, hz, n_ring, n_bands=1)
        kb = kink_bands(spec, hz, n_ring, n_bands=1)
        return channel_closure_margin(mb, kb, incoming_momenta, out_band)

    lo, hi = hz_low, hz_high
    if margin(lo) <= 0.0:
        raise ValueError(f"channel already open at hz={lo}")
    if margin(hi) > 0.0:
        raise ChannelNeverOpensError(
            f"{out_band} pair channel stays closed on [{hz_low}, {hz_high}]"
        )
    while hi - lo > tol_hz:
        mid = 0.5 * (lo + hi)
        if margin(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def export_bands_csv(bands: BandSet, path, header_comment: str | None = None) -> None:
    """Write rows of k,label,energy (one per band point)."""
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("k,label,energy\n")
        for band in bands.bands:
            for k, e in zip(band.momenta, band.energies):
                fh.write(f"{k:.17g},{band.label},{e:.17g}\n")


def load_bands_csv(path) -> BandSet:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("k,"):
                continue
            k, label, e = line.split(",")
            rows.append((float(k), label, float(e)))
    if not rows:
        raise ValueError(f"no band rows in {path}")
    bands = []
    for label in sorted({r[1] for r in rows}):
        pts = [(r[0], r[2]) for r in rows if r[1] == label]
        bands.append(
            Band(label, np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        )
    n_ring = max(b.momenta.size for b in bands)
    return BandSet(n_ring, float("nan"), bands)
