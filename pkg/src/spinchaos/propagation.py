"""One-period propagators for the driven spin Hamiltonian and stroboscopic evolution.

The Hamiltonian is H(t) = (chi/N) Sz^2 + bz Sz + bx cos(omega t) Sx with
hbar = 1. All evolution happens at integer multiples of the drive period
T = 2 pi / omega, so the central object is the single-period unitary U(T; 0).
"""

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .spin_core import NumericalError, build_spin_system, measurement_basis, mz_values

DEFAULT_STEPS = 1000
DEFAULT_EPSILON = 1e-5
RICHARDSON_RTOL = 1e-3
UNITARITY_TOL = 1e-9
NORM_DRIFT_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Physical configuration; bz is the parameter being estimated."""

    chi: float
    bz: float
    bx: float
    n_atoms: int
    omega: float = 2 * math.pi

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be a positive integer")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega

    def with_bz(self, bz: float) -> "ModelParams":
        return replace(self, bz=bz)


class PeriodPropagator(NamedTuple):
    u: np.ndarray
    params: ModelParams
    steps: int
    method: str


class Trajectory(NamedTuple):
    periods: np.ndarray
    states: np.ndarray       # (len(periods), dim) or (len(periods), dim, ncols)
    max_norm_drift: float
    renormalizations: int


class DerivativeResult(NamedTuple):
    psi_f: np.ndarray
    dpsi: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    epsilon: float
    richardson_ok: Optional[bool]   # None when the check was skipped
    richardson_rel: Optional[float]


class FloquetResult(NamedTuple):
    matrix: np.ndarray
    quasienergies: np.ndarray
    branch_cut_hits: int


def _h1_diagonal(params: ModelParams) -> np.ndarray:
    m = mz_values(params.n_atoms)
    return params.chi / params.n_atoms * m * m + params.bz * m


@lru_cache(maxsize=8)
def _drive_cosines(steps: int) -> np.ndarray:
    # cos(omega t) at step midpoints; omega T = 2 pi makes this omega-free
    # and identical for every period.
    c = np.cos(2 * math.pi * (np.arange(steps) + 0.5) / steps)
    c.setflags(write=False)
    return c


def _check_unitarity(u: np.ndarray, steps: int) -> None:
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > UNITARITY_TOL:
        raise NumericalError(
            f"propagator lost unitarity ({err:.3e} > {UNITARITY_TOL}) at steps={steps}"
        )


def _build_split(params: ModelParams, steps: int) -> np.ndarray:
    """Strang-split product with the diagonal part on the outside.

    Each step is A V E_k V^H A with A = exp(-i H1 dt/2) diagonal and
    E_k the drive phases in the Sx eigenbasis. Adjacent A factors merge,
    so the whole product needs one dense multiply per step:
    U = (A V) E_{K-1} W E_{K-2} W ... E_0 (V^H A) with W = V^H A^2 V.
    """
    _, ops = build_spin_system(params.n_atoms)
    basis = measurement_basis(ops, "x")
    v = basis.vectors
    vh = v.conj().T
    dt = params.period / steps
    a = np.exp(-1j * _h1_diagonal(params) * (dt / 2))
    phases = np.exp(-1j * np.outer(_drive_cosines(steps), basis.eigenvalues) * (params.bx * dt))
    if steps == 1:
        core = vh * a[None, :]
        core = (phases[0][:, None] * core)
        return (a[:, None] * v) @ core
    w = (vh * (a * a)[None, :]) @ v
    acc = w * phases[0][None, :]
    for k in range(1, steps - 1):
        acc = (w * phases[k][None, :]) @ acc
    core = phases[-1][:, None] * acc
    return (a[:, None] * v) @ core @ (vh * a[None, :])


def _build_exact(params: ModelParams, steps: int) -> np.ndarray:
    """Reference path: exponentiate H(t_mid) per step by eigendecomposition."""
    _, ops = build_spin_system(params.n_atoms)
    h_static = np.diag(_h1_diagonal(params)).astype(complex)
    dt = params.period / steps
    cosines = _drive_cosines(steps)
    u = np.eye(h_static.shape[0], dtype=complex)
    for k in range(steps):
        h = h_static + (params.bx * cosines[k]) * ops.sx
        evals, evecs = np.linalg.eigh(h)
        u = (evecs * np.exp(-1j * evals * dt)[None, :]) @ evecs.conj().T @ u
    return u


@lru_cache(maxsize=64)
def period_propagator(
    params: ModelParams, steps: int = DEFAULT_STEPS, method: str = "split-step"
) -> PeriodPropagator:
    """One-period unitary U(T; 0), cached per (params, steps, method)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if method == "split-step":
        u = _build_split(params, steps)
    elif method == "exact-step":
        u = _build_exact(params, steps)
    else:
        raise ValueError(f"unknown method {method!r}")
    _check_unitarity(u, steps)
    u.setflags(write=False)
    return PeriodPropagator(u, params, steps, method)


def _normalize_record(record, n_periods: int) -> np.ndarray:
    if record is None:
        record = [n_periods]
    rec = np.asarray(record, dtype=np.int64)
    if rec.ndim != 1 or rec.size == 0:
        raise ValueError("record schedule must be a nonempty 1-d sequence")
    if np.any(rec < 0) or np.any(rec > n_periods):
        raise ValueError("record schedule entries must lie in [0, n_periods]")
    if np.any(np.diff(rec) <= 0):
        raise ValueError("record schedule must be strictly increasing")
    return rec


def _renormalize(psi: np.ndarray):
    """Column norms, renormalizing only when drift passes the tolerance."""
    norms = np.linalg.norm(psi, axis=0) if psi.ndim == 2 else np.linalg.norm(psi)
    drift = float(np.max(np.abs(norms - 1.0)))
    events = 0
    if drift > NORM_DRIFT_TOL:
        psi = psi / norms
        events = int(np.count_nonzero(np.abs(np.atleast_1d(norms) - 1.0) > NORM_DRIFT_TOL))
    return psi, drift, events


def stroboscopic_evolve(
    prop: PeriodPropagator,
    psi0: np.ndarray,
    n_periods: int,
    record: Optional[Sequence[int]] = None,
    mode: str = "auto",
) -> Trajectory:
    """Apply U n times, recording the state at the scheduled period counts.

    psi0 may be a single state (dim,) or a block (dim, ncols); all columns
    share the propagator. mode 'matvec' steps one period at a time;
    'squaring' precomputes U^(2^k) and reaches each scheduled entry by its
    binary expansion, which wins for long evolutions with sparse schedules.
    'auto' picks by operation count.
    """
    if n_periods < 0:
        raise ValueError("n_periods must be nonnegative")
    rec = _normalize_record(record, n_periods)
    dim = prop.u.shape[0]
    if psi0.shape[0] != dim:
        raise ValueError(f"state length {psi0.shape[0]} does not match propagator dim {dim}")
    if mode == "auto":
        bits = max(int(n_periods).bit_length(), 1)
        mode = "squaring" if n_periods > bits * dim else "matvec"
    states = np.empty((rec.size,) + psi0.shape, dtype=complex)
    max_drift = 0.0
    renorms = 0

    if mode == "matvec":
        psi = psi0.astype(complex)
        pos = 0
        out = 0
        while out < rec.size:
            target = rec[out]
            for _ in range(target - pos):
                psi = prop.u @ psi
            pos = target
            psi, drift, events = _renormalize(psi)
            max_drift = max(max_drift, drift)
            renorms += events
            states[out] = psi
            out += 1
    elif mode == "squaring":
        powers = [np.asarray(prop.u)]
        for _ in range(int(rec[-1]).bit_length() - 1):
            powers.append(powers[-1] @ powers[-1])
        for out, target in enumerate(rec):
            psi = psi0.astype(complex)
            n = int(target)
            bit = 0
            while n:
                if n & 1:
                    psi = powers[bit] @ psi
                n >>= 1
                bit += 1
            psi, drift, events = _renormalize(psi)
            max_drift = max(max_drift, drift)
            renorms += events
            states[out] = psi
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Trajectory(rec, states, max_drift, renorms)


def evolve_family(
    params: ModelParams,
    psi0: np.ndarray,
    n_periods: int,
    bz_values=None,
    chi_values=None,
    steps: int = DEFAULT_STEPS,
) -> np.ndarray:
    """Split-step evolution of one state under many (chi, bz) values at once.

    chi and bz enter the step only through the diagonal half-step factor, so
    all columns share the Sx-basis rotations; cost grows with the column
    count only in thin matrix products. bz_values and chi_values broadcast
    against each other; omitted ones fall back to params. Returns final
    states as columns. Beats building full propagators whenever n_periods
    is small against the Hilbert dimension.
    """
    if bz_values is None and chi_values is None:
        raise ValueError("provide bz_values, chi_values, or both")
    bz_col = np.atleast_1d(np.asarray(params.bz if bz_values is None else bz_values, dtype=float))
    chi_col = np.atleast_1d(np.asarray(params.chi if chi_values is None else chi_values, dtype=float))
    bz_col, chi_col = np.broadcast_arrays(bz_col, chi_col)
    _, ops = build_spin_system(params.n_atoms)
    basis = measurement_basis(ops, "x")
    v = basis.vectors
    vh = v.conj().T
    m = mz_values(params.n_atoms)
    dt = params.period / steps
    half = np.exp(
        -1j * (np.outer(m * m, chi_col) / params.n_atoms + np.outer(m, bz_col)) * (dt / 2)
    )
    phases = np.exp(-1j * np.outer(_drive_cosines(steps), basis.eigenvalues) * (params.bx * dt))
    psi = np.broadcast_to(psi0[:, None], (psi0.shape[0], bz_col.size)).astype(complex)
    for _ in range(n_periods):
        for k in range(steps):
            psi = half * psi
            psi = vh @ psi
            psi = phases[k][:, None] * psi
            psi = v @ psi
            psi = half * psi
        psi, _, _ = _renormalize(psi)
    return psi


def _qfi_value(psi_f: np.ndarray, dpsi: np.ndarray) -> float:
    # Kept private; the public figure-of-merit lives in metrology.
    return 4.0 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(dpsi, psi_f)) ** 2)


def derivative_state(
    params: ModelParams,
    psi0: np.ndarray,
    n_periods: int,
    epsilon: float = DEFAULT_EPSILON,
    steps: int = DEFAULT_STEPS,
    method: str = "split-step",
    richardson: bool = True,
    mode: str = "auto",
) -> DerivativeResult:
    """Final state and its central-difference bz-derivative.

    Evolves psi0 at bz and bz +/- epsilon on the same step grid and forms
    dpsi = (psi_plus - psi_minus) / (2 epsilon). With richardson=True the
    same quantity is recomputed at epsilon/2 and the two resulting QFI
    values must agree to RICHARDSON_RTOL, otherwise the result carries
    richardson_ok=False.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if mode not in ("auto", "direct", "propagator"):
        raise ValueError(f"unknown mode {mode!r}")
    bz = params.bz
    offsets = [0.0, epsilon, -epsilon]
    if richardson:
        offsets += [epsilon / 2, -epsilon / 2]
    dim = params.n_atoms + 1
    use_direct = (
        method == "split-step"
        and (mode == "direct" or (mode == "auto" and n_periods * 2 <= dim))
    )
    if use_direct:
        finals = evolve_family(params, psi0, n_periods, bz_values=bz + np.array(offsets), steps=steps)
        columns = [finals[:, i] for i in range(finals.shape[1])]
    else:
        columns = []
        for off in offsets:
            prop = period_propagator(params.with_bz(bz + off), steps, method)
            traj = stroboscopic_evolve(prop, psi0, n_periods)
            columns.append(traj.states[-1])
    psi_f, psi_plus, psi_minus = columns[0], columns[1], columns[2]
    diff = psi_plus - psi_minus
    if n_periods > 0 and np.linalg.norm(diff) < 1e-11:
        raise NumericalError(
            f"state difference at epsilon={epsilon:g} is at float-noise level; increase epsilon"
        )
    dpsi = diff / (2 * epsilon)
    rich_ok = None
    rich_rel = None
    if richardson:
        dpsi_half = (columns[3] - columns[4]) / epsilon
        q_full = _qfi_value(psi_f, dpsi)
        q_half = _qfi_value(psi_f, dpsi_half)
        scale = max(abs(q_full), abs(q_half), 1e-30)
        rich_rel = abs(q_full - q_half) / scale
        rich_ok = bool(rich_rel < RICHARDSON_RTOL or scale < 1e-12)
    return DerivativeResult(psi_f, dpsi, psi_plus, psi_minus, epsilon, rich_ok, rich_rel)


def floquet_hamiltonian(prop: PeriodPropagator) -> FloquetResult:
    """Effective static generator H_F with U = exp(-i H_F T).

    Uses the complex Schur form (diagonal for a unitary matrix, with
    orthonormal vectors even at degeneracies). Eigenphases take the
    principal branch (-pi, pi]; a phase within 1e-12 of the cut is pinned
    to +pi and counted.
    """
    t_period = prop.params.period
    tri, z = scipy.linalg.schur(np.asarray(prop.u), output="complex")
    off = np.max(np.abs(tri - np.diag(np.diag(tri))))
    if off > 1e-9:
        raise NumericalError(f"propagator is not normal to tolerance (off-diagonal {off:.3e})")
    lam = np.diag(tri)
    theta = np.angle(lam)   # (-pi, pi]
    on_cut = (math.pi - np.abs(theta)) < 1e-12
    theta = np.where(on_cut, math.pi, theta)
    quasi = -theta / t_period
    hf = (z * quasi[None, :]) @ z.conj().T
    hf = (hf + hf.conj().T) / 2
    return FloquetResult(hf, np.sort(quasi), int(np.count_nonzero(on_cut)))
