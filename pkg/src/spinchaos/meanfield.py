"""Classical mean-field dynamics of the driven two-mode system.

State is the canonical pair (phi, z): relative phase and fractional
population imbalance. The equations of motion are

    dphi/dt = chi z - (z bx cos(omega t) / sqrt(1 - z^2)) cos(phi) - bz
    dz/dt   = bx cos(omega t) sqrt(1 - z^2) sin(phi)

integrated with fixed-step RK4 so stroboscopic sampling at t = n T is exact.
"""

import math
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit
from scipy.optimize import root

from .propagation import ModelParams

Z_GUARD = 1e-12
DEFAULT_RK4_DIVISOR = 1000
DEFAULT_SECTION_PERIODS = 500


class MeanFieldState(NamedTuple):
    phi: float
    z: float


class MfTrajectory(NamedTuple):
    times: np.ndarray
    phis: np.ndarray         # unwrapped
    zs: np.ndarray
    clamp_events: int


class PoincareSection(NamedTuple):
    phis: np.ndarray         # (n_initials, n_periods), wrapped to [0, 2 pi)
    zs: np.ndarray
    initials: np.ndarray     # (n_initials, 2) as (phi, z)
    params: ModelParams
    n_periods: int
    clamp_events: np.ndarray
    aborted: np.ndarray


def mf_rhs(state: MeanFieldState, t: float, params: ModelParams):
    """Right-hand sides (dphi/dt, dz/dt); z is guarded away from the poles."""
    z = min(max(state.z, -1.0 + Z_GUARD), 1.0 - Z_GUARD)
    phi = state.phi
    tilt = math.sqrt(1.0 - z * z)
    drive = params.bx * math.cos(params.omega * t)
    dphi = params.chi * z - (z * drive / tilt) * math.cos(phi) - params.bz
    dz = drive * tilt * math.sin(phi)
    return dphi, dz


def classical_energy(phi: float, z: float, t: float, params: ModelParams) -> float:
    """Hamiltonian generating mf_rhs; conserved once the drive is static."""
    z = min(max(z, -1.0 + Z_GUARD), 1.0 - Z_GUARD)
    drive = params.bx * math.cos(params.omega * t)
    return (
        params.chi / 2 * z * z
        - params.bz * z
        + drive * math.sqrt(1.0 - z * z) * math.cos(phi)
    )


# The jitted kernel mirrors mf_rhs exactly; keep the two in sync.
@njit(cache=True)
def _rk4_ensemble(phi0, z0, chi, bz, bx, omega, n_records, record_stride, k_steps, h):
    n = phi0.shape[0]
    phis = np.empty((n, n_records))
    zs = np.empty((n, n_records))
    clamps = np.zeros(n, dtype=np.int64)
    aborted = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        phi = phi0[i]
        z = z0[i]
        step = np.int64(0)
        for rec in range(n_records):
            for _ in range(record_stride):
                tau = (step % k_steps) * h
                # four stages of classical RK4, z guarded inside each stage
                k1p, k1z = _stage(phi, z, tau, chi, bz, bx, omega)
                k2p, k2z = _stage(phi + 0.5 * h * k1p, z + 0.5 * h * k1z, tau + 0.5 * h, chi, bz, bx, omega)
                k3p, k3z = _stage(phi + 0.5 * h * k2p, z + 0.5 * h * k2z, tau + 0.5 * h, chi, bz, bx, omega)
                k4p, k4z = _stage(phi + h * k3p, z + h * k3z, tau + h, chi, bz, bx, omega)
                phi = phi + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
                z = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
                if z > 1.0 - Z_GUARD:
                    z = 1.0 - Z_GUARD
                    clamps[i] += 1
                elif z < -1.0 + Z_GUARD:
                    z = -1.0 + Z_GUARD
                    clamps[i] += 1
                step += 1
            if not (np.isfinite(phi) and np.isfinite(z)):
                aborted[i] = True
                for r in range(rec, n_records):
                    phis[i, r] = np.nan
                    zs[i, r] = np.nan
                break
            phis[i, rec] = phi
            zs[i, rec] = z
    return phis, zs, clamps, aborted


@njit(cache=True, inline="always")
def _stage(phi, z, t, chi, bz, bx, omega):
    if z > 1.0 - Z_GUARD:
        z = 1.0 - Z_GUARD
    elif z < -1.0 + Z_GUARD:
        z = -1.0 + Z_GUARD
    tilt = np.sqrt(1.0 - z * z)
    drive = bx * np.cos(omega * t)
    dphi = chi * z - (z * drive / tilt) * np.cos(phi) - bz
    dz = drive * tilt * np.sin(phi)
    return dphi, dz


def _steps_per_period(params: ModelParams, h: float) -> int:
    ratio = params.period / h
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-6 * ratio:
        raise ValueError(f"step h={h!r} must divide the period T={params.period!r} exactly")
    return k


def integrate(
    initial: MeanFieldState, params: ModelParams, t_end: float, h: float | None = None
) -> MfTrajectory:
    """Single trajectory recorded at every step, phi left unwrapped."""
    if h is None:
        h = params.period / DEFAULT_RK4_DIVISOR
    k_steps = _steps_per_period(params, h)
    n_steps = round(t_end / h)
    if abs(t_end - n_steps * h) > 1e-9 * max(t_end, 1.0) or n_steps < 1:
        raise ValueError("t_end must be a positive integer multiple of h")
    phis, zs, clamps, aborted = _rk4_ensemble(
        np.array([initial.phi]), np.array([initial.z]),
        params.chi, params.bz, params.bx, params.omega,
        n_steps, 1, k_steps, h,
    )
    times = h * np.arange(n_steps + 1)
    return MfTrajectory(
        times,
        np.concatenate(([initial.phi], phis[0])),
        np.concatenate(([initial.z], zs[0])),
        int(clamps[0]),
    )


def poincare_section(
    initials: Sequence[MeanFieldState] | np.ndarray,
    params: ModelParams,
    n_periods: int = DEFAULT_SECTION_PERIODS,
    rk4_divisor: int = DEFAULT_RK4_DIVISOR,
) -> PoincareSection:
    """Stroboscopic map of an ensemble, one (phi, z) record per period."""
    arr = np.asarray([(s[0], s[1]) for s in initials], dtype=float)
    if arr.size == 0:
        raise ValueError("poincare_section needs at least one initial condition")
    h = params.period / rk4_divisor
    phis, zs, clamps, aborted = _rk4_ensemble(
        np.ascontiguousarray(arr[:, 0]), np.ascontiguousarray(arr[:, 1]),
        params.chi, params.bz, params.bx, params.omega,
        n_periods, rk4_divisor, rk4_divisor, h,
    )
    return PoincareSection(
        np.mod(phis, 2 * math.pi), zs, arr, params, n_periods, clamps, aborted
    )


def default_seed_grid(n_phi: int = 24, n_z: int = 24, z_lim: float = 0.98) -> np.ndarray:
    """Uniform (phi, z) seed grid used for the section sweeps."""
    phi = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    z = np.linspace(-z_lim, z_lim, n_z)
    pp, zz = np.meshgrid(phi, z)
    return np.column_stack([pp.ravel(), zz.ravel()])


def refine_period_fixed_point(
    params: ModelParams,
    guess: MeanFieldState,
    rk4_divisor: int = DEFAULT_RK4_DIVISOR,
    fd_step: float = 1e-7,
):
    """Root-find a fixed point of the one-period map near the guess.

    Returns (state, residual, stable) where stable means the linearized
    period map is elliptic (|trace| < 2 for the area-preserving map), i.e.
    the point is a rotation center rather than a saddle.
    """
    h = params.period / rk4_divisor

    def strobe(x):
        p, z, _, _ = _rk4_ensemble(
            np.array([x[0]]), np.array([x[1]]),
            params.chi, params.bz, params.bx, params.omega,
            1, rk4_divisor, rk4_divisor, h,
        )
        return np.array([p[0, 0], z[0, 0]])

    sol = root(lambda x: strobe(x) - x, np.array([guess.phi, guess.z]), tol=1e-12)
    fixed = sol.x
    residual = float(np.max(np.abs(strobe(fixed) - fixed)))
    jac = np.empty((2, 2))
    for col in range(2):
        bump = np.zeros(2)
        bump[col] = fd_step
        jac[:, col] = (strobe(fixed + bump) - strobe(fixed - bump)) / (2 * fd_step)
    stable = bool(abs(np.trace(jac)) < 2.0)
    return MeanFieldState(float(fixed[0]), float(fixed[1])), residual, stable
