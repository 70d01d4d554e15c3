"""Numba kernels for the hot matrix-free operations."""

import numba
import numpy as np


@numba.njit(cache=True, fastmath=False)
def apply_diag_plus_flips(diag, amp, hz, n, out):
    """out[c] = diag[c]*amp[c] - hz * sum_b amp[c ^ (1 << b)]."""
    dim = amp.shape[0]
    if hz == 0.0:
        for c in range(dim):
            out[c] = diag[c] * amp[c]
        return
    for c in range(dim):
        acc = diag[c] * amp[c]
        for b in range(n):
            acc -= hz * amp[c ^ (1 << b)]
        out[c] = acc


@numba.njit(cache=True, fastmath=False)
def gather_weighted(amp, maps, coeffs, out):
    """out[j] -= sum_i coeffs[i] * amp[maps[i, j]] over a padded index map.

    ``amp`` must carry one trailing padding element equal to zero; rows of
    ``maps`` point there for transitions leaving the truncated sector.
    """
    n_ops, dim = maps.shape
    for j in range(dim):
        acc = out[j]
        for i in range(n_ops):
            acc -= coeffs[i] * amp[maps[i, j]]
        out[j] = acc
