"""Krylov time evolution, adiabatic field ramps, and scattering runs.

A scattering run chains four stages: ideal bare two-packet state, linear
ramp of the transverse field up to its target, free evolution under the
full Hamiltonian while the packets propagate and collide, and the
mirrored ramp back down, after which the final state is projected onto
(K, Q) sectors. Site magnetizations are recorded throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hilbert import SectorTable, StateVector, sector_project, sigma_x_profile
from .model import ChainConfig, diagonal_energies, hamiltonian_matvec
from .spectrum import meson_bands
from .wavepacket import WavePacketSpec, two_packet_state

HARD_SITE_CAP = 25


class NumericalGuardError(RuntimeError):
    """Non-finite amplitudes or an exhausted step subdivision."""


class MemoryGuardError(RuntimeError):
    pass


def check_memory_budget(n: int, krylov_dim: int, budget_bytes: int | None = None) -> None:
    """Refuse runs whose Krylov workspace cannot fit comfortably in RAM."""
    if n > HARD_SITE_CAP:
        raise MemoryGuardError(f"n={n} exceeds the hard cap of {HARD_SITE_CAP} sites")
    if budget_bytes is None:
        try:
            import psutil

            budget_bytes = int(0.6 * psutil.virtual_memory().available)
        except ImportError:  # pragma: no cover
            budget_bytes = 3 << 30
    need = (krylov_dim + 4) * 16 * (1 << n)
    if need > budget_bytes:
        raise MemoryGuardError(
            f"Krylov workspace needs {need / 1e9:.1f} GB, budget {budget_bytes / 1e9:.1f} GB"
        )


def krylov_expm_apply(
    matvec,
    vec: np.ndarray,
    dt: float,
    m: int = 20,
    tol: float = 1e-10,
    _depth: int = 0,
) -> np.ndarray:
    """exp(-i dt H) @ vec through a Lanczos subspace of dimension <= m.

    Vectors are kept orthogonal by full reorthogonalization against the
    whole basis (repeated once when cancellation is detected). The step
    is accepted when the standard subspace residual estimate
    beta_{j+1} * |last component of exp(-i dt T) e1| falls below tol;
    otherwise dt is halved recursively.
    """
    if _depth > 30:
        raise NumericalGuardError("time step subdivision did not converge")
    norm0 = np.linalg.norm(vec)
    if norm0 == 0.0:
        return vec.copy()
    basis = np.empty((m + 1, vec.size), dtype=np.complex128)
    basis[0] = vec / norm0
    alphas: list[float] = []
    betas: list[float] = []
    w = matvec(basis[0])
    if not np.isfinite(w[0]):  # cheap probe; full check below
        raise NumericalGuardError("non-finite amplitudes in Krylov step")
    result = None
    for j in range(m):
        alpha = float(np.real(np.vdot(basis[j], w)))
        alphas.append(alpha)
        w -= alpha * basis[j]
        if j > 0:
            w -= betas[-1] * basis[j - 1]
        # full reorthogonalization, one BLAS pass (repeated on cancellation)
        norm_before = np.linalg.norm(w)
        coeff = np.conj(basis[: j + 1] @ np.conj(w))
        w -= basis[: j + 1].T @ coeff
        beta = float(np.linalg.norm(w))
        if beta < 0.5 * norm_before:
            coeff = np.conj(basis[: j + 1] @ np.conj(w))
            w -= basis[: j + 1].T @ coeff
            beta = float(np.linalg.norm(w))
        phases, z = eigh_tridiagonal(np.array(alphas), np.array(betas))
        u_small = (z * np.exp(-1j * dt * phases)) @ z[0, :]
        err = abs(beta * u_small[-1])
        if beta < 1e-13 * max(1.0, abs(alpha)) or (err < tol and j >= 1):
            result = u_small
            break
        if j == m - 1:
            break
        betas.append(beta)
        basis[j + 1] = w / beta
        w = matvec(basis[j + 1])
    if result is None:
        half = krylov_expm_apply(matvec, vec, dt / 2, m, tol, _depth + 1)
        return krylov_expm_apply(matvec, half, dt / 2, m, tol, _depth + 1)
    out = (basis[: result.size].T @ result) * norm0
    if not np.all(np.isfinite(out)):
        raise NumericalGuardError("non-finite amplitudes in Krylov step")
    return out


def krylov_step(
    cfg: ChainConfig,
    state: StateVector,
    dt: float,
    m: int = 20,
    tol: float = 1e-10,
) -> StateVector:
    """Advance a state by exp(-i H dt) for the fixed-field chain."""
    mv = hamiltonian_matvec(diagonal_energies(cfg), cfg.hz, cfg.n)
    return StateVector(cfg.n, krylov_expm_apply(mv, state.amplitudes, dt, m, tol))


@dataclass(frozen=True)
class RampSchedule:
    """Linear transverse-field ramp h(t) = hz_target * t / t_ramp."""

    hz_target: float
    t_ramp: float | None = None

    @property
    def duration(self) -> float:
        if self.t_ramp is not None:
            return self.t_ramp
        if self.hz_target == 0.0:
            return 0.0
        return 10.0 / abs(self.hz_target)

    def hz_at(self, t: float, direction: str = "up") -> float:
        frac = min(max(t / self.duration, 0.0), 1.0) if self.duration else 1.0
        if direction == "down":
            frac = 1.0 - frac
        return self.hz_target * frac


def evolve_ramp(
    cfg: ChainConfig,
    state: StateVector,
    schedule: RampSchedule,
    direction: str = "up",
    dt: float = 0.05,
    m: int = 20,
    recorder=None,
    t_offset: float = 0.0,
) -> StateVector:
    """Exponential-midpoint stepping through the time-dependent ramp."""
    if direction not in ("up", "down"):
        raise ValueError("direction must be 'up' or 'down'")
    duration = schedule.duration
    n_steps = max(int(np.ceil(duration / dt)), 1) if duration > 0 else 0
    diag = diagonal_energies(cfg)
    amp = state.amplitudes.copy()
    h = duration / n_steps if n_steps else 0.0
    for step in range(n_steps):
        t_mid = (step + 0.5) * h
        hz_mid = schedule.hz_at(t_mid, direction)
        mv = hamiltonian_matvec(diag, hz_mid, cfg.n)
        amp = krylov_expm_apply(mv, amp, h, m)
        if recorder is not None:
            recorder(t_offset + (step + 1) * h, amp)
    return StateVector(cfg.n, amp)


def evolve_constant(
    cfg: ChainConfig,
    state: StateVector,
    duration: float,
    dt: float = 0.05,
    m: int = 20,
    recorder=None,
    t_offset: float = 0.0,
) -> StateVector:
    mv = hamiltonian_matvec(diagonal_energies(cfg), cfg.hz, cfg.n)
    n_steps = max(int(np.ceil(duration / dt)), 1) if duration > 0 else 0
    amp = state.amplitudes.copy()
    h = duration / n_steps if n_steps else 0.0
    for step in range(n_steps):
        amp = krylov_expm_apply(mv, amp, h, m)
        if recorder is not None:
            recorder(t_offset + (step + 1) * h, amp)
    return StateVector(cfg.n, amp)


def estimate_group_velocity(
    cfg: ChainConfig, k0: float, n_ring: int = 14, n_bands: int = 1
) -> float:
    """|dE/dk| of the lowest meson band at k0, by central difference on
    the ring momentum grid."""
    bands = meson_bands(cfg.coupling, cfg.hz, n_ring, n_bands=n_bands, hx=cfg.hx)
    band = bands.band("M1")
    dk = 2.0 * np.pi / n_ring
    e_plus = band.energy_at(k0 + dk)
    e_minus = band.energy_at(k0 - dk)
    return abs(e_plus - e_minus) / (2.0 * dk)


def default_t_evolve(
    cfg: ChainConfig,
    left: WavePacketSpec,
    right: WavePacketSpec,
    n_ring: int = 14,
) -> float:
    """Propagation window: chain length over the packet group velocity,
    extended if needed so the outgoing packets separate by at least four
    widths after the collision."""
    v_g = estimate_group_velocity(cfg, left.k0, n_ring)
    if v_g < 1e-6:
        raise ValueError("packet group velocity is zero; increase hz")
    t_cross = cfg.n / v_g
    t_collide = abs(right.x0 - left.x0) / (2.0 * v_g)
    dx_max = max(left.dx, right.dx)
    t_separate = t_collide + 2.0 * dx_max / v_g
    return max(t_cross, t_separate)


@dataclass
class ScatterResult:
    """Magnetization record and final channel decomposition of one run."""

    times: np.ndarray
    magnetization: np.ndarray           # (n_records, n_sites)
    final_table: SectorTable
    channels: dict[str, float]
    final_state: StateVector
    metadata: dict = field(default_factory=dict)

    def kq_rows(self) -> list[list]:
        return [[k, q, p] for (k, q), p in self.final_table.items()]

    def to_ndjson_line(self) -> str:
        payload = {
            "hz": self.metadata.get("hz"),
            "tr": self.metadata.get("t_ramp"),
            "t_evolve": self.metadata.get("t_evolve"),
            "channels": self.channels,
            "kq_table": self.kq_rows(),
        }
        return json.dumps(payload, sort_keys=True)


def group_channels(table: SectorTable) -> dict[str, float]:
    """elastic = (K=4, Q=2); kink_pair = every K=2 sector with Q >= 1
    (the growing flipped domain of an unbound pair); other = remainder."""
    elastic = table.probability(4, 2)
    kink_pair = sum(p for (k, q), p in table.entries.items() if k == 2 and q >= 1)
    other = max(table.total() - elastic - kink_pair, 0.0)
    return {"elastic": elastic, "kink_pair": kink_pair, "other": other}


def run_scattering(
    cfg: ChainConfig,
    left: WavePacketSpec,
    right: WavePacketSpec,
    schedule: RampSchedule | None = None,
    t_evolve: float | None = None,
    dt: float = 0.05,
    krylov_dim: int = 20,
    n_records: int = 200,
    memory_budget: int | None = None,
) -> ScatterResult:
    """Full pipeline: bare packets -> ramp up -> evolve -> ramp down ->
    sector projection, recording <sigma^x_i> along the way."""
    check_memory_budget(cfg.n, krylov_dim, memory_budget)
    if schedule is None:
        schedule = RampSchedule(cfg.hz)
    if schedule.hz_target != cfg.hz:
        raise ValueError("ramp target differs from chain hz")
    if t_evolve is None:
        t_evolve = default_t_evolve(cfg, left, right)

    state = two_packet_state(left, right, cfg.n)
    total_time = 2.0 * schedule.duration + t_evolve
    n_steps_total = max(int(np.ceil(total_time / dt)), 1)
    record_stride = max(total_time / min(n_records, n_steps_total), dt)

    times: list[float] = []
    mags: list[np.ndarray] = []

    def recorder(t: float, amp: np.ndarray):
        if not times or t - times[-1] >= record_stride - 1e-12:
            times.append(t)
            mags.append(sigma_x_profile(StateVector(cfg.n, amp)))

    recorder(0.0, state.amplitudes)
    state = evolve_ramp(cfg, state, schedule, "up", dt, krylov_dim, recorder, 0.0)
    state = evolve_constant(
        cfg, state, t_evolve, dt, krylov_dim, recorder, schedule.duration
    )
    state = evolve_ramp(
        cfg, state, schedule, "down", dt, krylov_dim, recorder,
        schedule.duration + t_evolve,
    )
    table = sector_project(state)
    return ScatterResult(
        times=np.asarray(times),
        magnetization=np.asarray(mags),
        final_table=table,
        channels=group_channels(table),
        final_state=state,
        metadata={
            "n": cfg.n,
            "hz": cfg.hz,
            "hx": cfg.hx,
            "alpha": cfg.coupling.alpha,
            "beta": cfg.coupling.beta,
            "t_ramp": schedule.duration,
            "t_evolve": t_evolve,
            "dt": dt,
            "krylov_dim": krylov_dim,
            "total_time": total_time,
        },
    )


def sweep_hz(
    cfg: ChainConfig,
    left: WavePacketSpec,
    right: WavePacketSpec,
    hz_values,
    t_evolve: float | None = None,
    dt: float = 0.05,
    krylov_dim: int = 20,
    n_records: int = 200,
    jobs: int = 1,
) -> list[ScatterResult]:
    """Independent scattering runs, one per transverse-field value, each
    with the default ramp time 10/hz."""
    hz_values = list(hz_values)
    args = [
        (cfg.with_hz(hz), left, right, RampSchedule(hz), t_evolve, dt, krylov_dim, n_records)
        for hz in hz_values
    ]
    if jobs > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, args))
    return [_sweep_one(a) for a in args]


def _sweep_one(packed) -> ScatterResult:
    cfg, left, right, schedule, t_evolve, dt, krylov_dim, n_records = packed
    return run_scattering(
        cfg, left, right, schedule, t_evolve, dt, krylov_dim, n_records
    )


def write_heatmap_csv(result: ScatterResult, path, header_comment: str | None = None):
    """First column t, then sx_1..sx_N."""
    n = result.magnetization.shape[1]
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("t," + ",".join(f"sx_{i}" for i in range(1, n + 1)) + "\n")
        for t, row in zip(result.times, result.magnetization):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
