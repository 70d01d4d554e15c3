"""Spin-chain couplings, boundary potential, and matrix-free Hamiltonian.

Energies are measured in units of the nearest-neighbor coupling J0 and
times in 1/J0. The chain Hamiltonian is

    H = -sum_{i<j} J_ij sx_i sx_j - sum_i g_i sx_i - hz sum_i sz_i,

with g_i = hx plus, optionally, the pseudo-infinite boundary field that
mimics frozen up spins beyond both chain ends. In the sigma^x product
basis the first two terms are diagonal and sz_i flips bit i-1, which is
what makes an O(n 2^n) matrix-free apply possible.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import zeta

from .hilbert import StateVector

try:
    from ._kernels import apply_diag_plus_flips as _fast_apply
except ImportError:  # pragma: no cover - numba missing
    _fast_apply = None


class DivergentTailError(ValueError):
    """Raised when an infinite coupling sum does not converge."""


@dataclass(frozen=True)
class CouplingSpec:
    """Distance profile J(r) = j0 * exp(-beta (r-1)) / r**alpha.

    alpha=0 gives the pure exponential model, beta=0 the pure power law,
    and large alpha or beta the nearest-neighbor limit.
    """

    j0: float = 1.0
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if self.j0 <= 0:
            raise ValueError("j0 must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")

    def coupling(self, r):
        """J(r) for integer distance r >= 1 (scalar or array)."""
        r = np.asarray(r, dtype=float)
        out = self.j0 * np.exp(-self.beta * (r - 1.0)) / r**self.alpha
        return float(out) if out.ndim == 0 else out

    def converges(self) -> bool:
        return self.beta > 0 or self.alpha > 1


def tail_sum(spec: CouplingSpec, r0: int, rel_tol: float = 1e-12) -> float:
    """sum_{r >= r0} J(r), with truncation error below rel_tol relatively.

    Pure exponential tails use the closed geometric form and pure
    power-law tails the Hurwitz zeta function. Mixed profiles are summed
    directly; the remainder after radius R is bounded by
    J(R+1) / (1 - e^-beta) since r^-alpha is decreasing.
    """
    if r0 < 1:
        raise ValueError("r0 must be >= 1")
    if spec.beta == 0:
        if spec.alpha <= 1:
            raise DivergentTailError(
                f"sum of J(r) diverges for alpha={spec.alpha}, beta=0"
            )
        return spec.j0 * float(zeta(spec.alpha, r0))
    if spec.alpha == 0:
        x = np.exp(-spec.beta)
        return spec.j0 * x ** (r0 - 1) / (1.0 - x)
    geom = 1.0 / (1.0 - np.exp(-spec.beta))
    acc = 0.0
    r = r0
    while True:
        acc += spec.coupling(r)
        r += 1
        if spec.coupling(r) * geom <= rel_tol * acc:
            return acc


def weighted_tail_sum(spec: CouplingSpec, r0: int = 1, rel_tol: float = 1e-12) -> float:
    """sum_{r >= r0} r * J(r); converges for beta > 0 or alpha > 2."""
    if r0 < 1:
        raise ValueError("r0 must be >= 1")
    if spec.beta == 0:
        if spec.alpha <= 2:
            raise DivergentTailError(
                f"sum of r*J(r) diverges for alpha={spec.alpha}, beta=0"
            )
        return spec.j0 * float(zeta(spec.alpha - 1.0, r0))
    if spec.alpha == 0:
        x = np.exp(-spec.beta)
        return spec.j0 * x ** (r0 - 1) * (r0 - (r0 - 1) * x) / (1.0 - x) ** 2
    geom = 1.0 / (1.0 - np.exp(-spec.beta))
    acc = 0.0
    r = r0
    while True:
        acc += r * spec.coupling(r)
        r += 1
        # remainder <= J(r) * [r/(1-x) + x/(1-x)^2] with x = e^-beta
        x = np.exp(-spec.beta)
        bound = spec.coupling(r) * (r * geom + x * geom**2)
        if bound <= rel_tol * acc:
            return acc


def coupling_matrix(spec: CouplingSpec, n: int) -> np.ndarray:
    """Symmetric J_ij = J(|i-j|) with zero diagonal."""
    if n < 2:
        raise ValueError("need at least two sites")
    idx = np.arange(n)
    r = np.abs(idx[:, None] - idx[None, :]).astype(float)
    np.fill_diagonal(r, 1.0)  # placeholder distance, zeroed below
    jmat = spec.coupling(r)
    np.fill_diagonal(jmat, 0.0)
    return jmat


def pseudo_infinite_field(spec: CouplingSpec, n: int) -> np.ndarray:
    """Boundary field h_i = sum of couplings to frozen up spins beyond
    both chain ends, for i = 1..n (returned 0-indexed)."""
    left = np.array([tail_sum(spec, i) for i in range(1, n + 1)])
    return left + left[::-1]


def fit_coupling_spec(jmat: np.ndarray, j0_fixed: bool = False) -> CouplingSpec:
    """Least-squares (alpha, beta) fit of the product profile to a measured
    coupling matrix, averaging over equal-distance pairs."""
    n = jmat.shape[0]
    rs = np.arange(1, n)
    jbar = np.array([np.mean(np.diagonal(jmat, off)) for off in rs])
    if np.any(jbar <= 0):
        raise ValueError("coupling matrix must be positive off-diagonal")
    y = np.log(jbar)
    cols = [-(rs - 1.0), -np.log(rs)]
    if not j0_fixed:
        cols.append(np.ones_like(y))
    a = np.column_stack(cols)
    sol, *_ = np.linalg.lstsq(a, y, rcond=None)
    beta, alpha = max(sol[0], 0.0), max(sol[1], 0.0)
    j0 = float(np.exp(sol[2])) if not j0_fixed else 1.0
    return CouplingSpec(j0=j0, alpha=float(alpha), beta=float(beta))


def load_coupling_matrix(path) -> np.ndarray:
    """Read an explicit J_ij matrix from CSV (row i = J_i1..J_iN)."""
    jmat = np.loadtxt(path, delimiter=",", ndmin=2)
    if jmat.shape[0] != jmat.shape[1]:
        raise ValueError(f"coupling matrix must be square, got {jmat.shape}")
    if not np.allclose(jmat, jmat.T, atol=1e-12):
        raise ValueError("coupling matrix must be symmetric")
    return jmat


@dataclass(frozen=True)
class ChainConfig:
    """Finite chain: size, fields, boundary treatment, coupling profile."""

    n: int
    coupling: CouplingSpec
    hx: float = 0.0
    hz: float = 0.0
    pseudo_infinite: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    def with_hz(self, hz: float) -> "ChainConfig":
        return replace(self, hz=hz)

    def field_vector(self) -> np.ndarray:
        """Effective longitudinal field g_i at each site."""
        g = np.full(self.n, self.hx)
        if self.pseudo_infinite:
            g = g + pseudo_infinite_field(self.coupling, self.n)
        return g


def _spin_signs(m: int) -> np.ndarray:
    """(2**m, m) matrix of sx eigenvalues: +1 for up (bit clear), -1 down."""
    idx = np.arange(1 << m, dtype=np.int64)
    return 1.0 - 2.0 * ((idx[:, None] >> np.arange(m)[None, :]) & 1)


@functools.lru_cache(maxsize=8)
def _diagonal_energies_cached(cfg: ChainConfig) -> np.ndarray:
    n = cfg.n
    jmat = coupling_matrix(cfg.coupling, n) if n >= 2 else np.zeros((1, 1))
    g = cfg.field_vector()
    # Split the register into low/high halves; the cross term is a single
    # dense matmul, keeping the whole construction at O(n 2^n) flops.
    m = n // 2 if n > 1 else 1
    mh = n - m
    s_lo = _spin_signs(m)
    s_hi = _spin_signs(mh) if mh else np.zeros((1, 0))
    j_ll = jmat[:m, :m]
    j_hh = jmat[m:, m:]
    j_hl = jmat[m:, :m]
    e_lo = -0.5 * np.einsum("ai,ij,aj->a", s_lo, j_ll, s_lo) - s_lo @ g[:m]
    if mh:
        e_hi = -0.5 * np.einsum("bi,ij,bj->b", s_hi, j_hh, s_hi) - s_hi @ g[m:]
        cross = -(s_hi @ j_hl) @ s_lo.T
        energies = (e_hi[:, None] + e_lo[None, :] + cross).ravel()
    else:
        energies = e_lo
    energies.setflags(write=False)
    return energies


def diagonal_energies(cfg: ChainConfig) -> np.ndarray:
    """Energy of every configuration under the diagonal part of H
    (couplings plus longitudinal fields), indexed by configuration word."""
    return _diagonal_energies_cached(cfg)


def single_flip_gap(cfg: ChainConfig, site: int) -> float:
    """Excitation energy of the single flip at the given site over the
    all-up state: 2 g_i + 2 sum_j J_ij. Site-independent (equal to the
    bare single-flip mass) when the pseudo-infinite field is on."""
    if not 1 <= site <= cfg.n:
        raise ValueError(f"site {site} outside 1..{cfg.n}")
    g = cfg.field_vector()
    i = site - 1
    if cfg.n >= 2:
        jrow = coupling_matrix(cfg.coupling, cfg.n)[i]
        return float(2.0 * g[i] + 2.0 * jrow.sum())
    return float(2.0 * g[i])


def _apply_numpy(diag: np.ndarray, hz: float, n: int, amp: np.ndarray) -> np.ndarray:
    out = diag * amp
    if hz != 0.0:
        for b in range(n):
            view = amp.reshape(1 << (n - 1 - b), 2, 1 << b)
            dst = out.reshape(1 << (n - 1 - b), 2, 1 << b)
            dst[:, 0, :] -= hz * view[:, 1, :]
            dst[:, 1, :] -= hz * view[:, 0, :]
    return out


def apply_hamiltonian(cfg: ChainConfig, state: StateVector) -> StateVector:
    """H |state>, matrix-free."""
    if state.n_sites != cfg.n:
        raise ValueError("state size does not match chain size")
    diag = diagonal_energies(cfg)
    out = hamiltonian_matvec(diag, cfg.hz, cfg.n)(state.amplitudes)
    return StateVector(cfg.n, out)


def hamiltonian_matvec(diag: np.ndarray, hz: float, n: int):
    """Closure computing H @ psi for the diagonal-plus-uniform-flip form."""
    if _fast_apply is not None and n >= 6:

        def matvec(amp: np.ndarray) -> np.ndarray:
            out = np.empty_like(amp)
            _fast_apply(diag, amp, float(hz), n, out)
            return out

        return matvec

    def matvec(amp: np.ndarray) -> np.ndarray:
        return _apply_numpy(diag, hz, n, amp)

    return matvec
