"""Collective spin algebra in the Dicke basis.

Everything downstream works in the joint eigenbasis |J, m_z> of S^2 and S_z
with J = N/2 fixed, ordered m_z = +J down to -J so that the fully polarized
state |J, J> is the first component.
"""

import math
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

# Memory guard: dense dim x dim complex matrices, a few per system.
MAX_ATOMS = 5000

HERMITICITY_TOL = 1e-12
ALGEBRA_TOL = 1e-10


class NumericalError(RuntimeError):
    """A numerical result left its guaranteed tolerance."""


class SpinSystem(NamedTuple):
    n_atoms: int
    j: float
    dim: int


class SpinOperators(NamedTuple):
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sz2: np.ndarray


class BasisTransform(NamedTuple):
    axis: str
    vectors: np.ndarray      # columns = eigenvectors, ascending eigenvalue
    eigenvalues: np.ndarray  # -J ... +J


def mz_values(n_atoms: int) -> np.ndarray:
    """Magnetic quantum numbers in basis order, +J descending to -J."""
    j = n_atoms / 2
    return j - np.arange(n_atoms + 1)


def build_spin_system(n_atoms: int):
    """Construct the system descriptor and dense S_x, S_y, S_z, S_z^2.

    S_x and S_y come from the ladder matrix elements
    <J, m+1| S_+ |J, m> = sqrt(J(J+1) - m(m+1)), so both are tridiagonal.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be a positive integer")
    if n_atoms > MAX_ATOMS:
        raise ValueError(f"n_atoms={n_atoms} exceeds the MAX_ATOMS={MAX_ATOMS} memory guard")
    j = n_atoms / 2
    dim = n_atoms + 1
    m = mz_values(n_atoms)
    # S_+ connects column m to row m+1; with m descending that is the
    # superdiagonal, fed by the m values of the lower state.
    ladder = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((dim, dim))
    sp[np.arange(dim - 1), np.arange(1, dim)] = ladder
    sx = (sp + sp.T) / 2
    sy = (sp - sp.T) / 2j
    sz = np.diag(m)
    sz2 = np.diag(m * m)
    return SpinSystem(n_atoms, j, dim), SpinOperators(sx, sy.astype(complex), sz, sz2)


def coherent_state(system: SpinSystem, theta: float, phi: float) -> np.ndarray:
    """Spin coherent state with polar angle theta and azimuth phi.

    Amplitude at m_z is
        sqrt(C(2J, J - m_z)) sin(theta/2)^(J - m_z) cos(theta/2)^(J + m_z)
        * exp(i (J - m_z) phi).
    Binomials are evaluated as log-gamma differences so the construction
    stays finite up to N ~ 2000, then the vector is renormalized.
    """
    if not 0.0 <= theta <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    if not 0.0 <= phi < 2 * math.pi:
        raise ValueError("phi must lie in [0, 2*pi)")
    n = system.n_atoms
    k = np.arange(n + 1, dtype=float)  # k = J - m_z
    log_binom = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    # sin/cos factors in log space; 0^0 = 1 at the poles, so the 0 * (-inf)
    # cells are replaced and only their transient products get silenced.
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.log(np.sin(theta / 2)) if theta > 0 else -np.inf
        log_c = np.log(np.cos(theta / 2)) if theta < math.pi else -np.inf
        prod_s = k * log_s
        prod_c = (n - k) * log_c
    log_mag = log_binom
    log_mag = log_mag + np.where(k == 0, 0.0, prod_s)
    log_mag = log_mag + np.where(k == n, 0.0, prod_c)
    amp = np.exp(log_mag) * np.exp(1j * k * phi)
    norm = np.linalg.norm(amp)
    if not np.isfinite(norm) or norm == 0.0:
        raise NumericalError(f"coherent state underflowed at N={n}, theta={theta}")
    return amp / norm


_basis_cache: dict[tuple[int, str], BasisTransform] = {}


def measurement_basis(ops: SpinOperators, axis: str) -> BasisTransform:
    """Eigenbasis of S_axis with eigenvalues sorted ascending.

    The decomposition is cached per (dimension, axis); repeated calls return
    the identical object. Eigenvector phases are fixed by making the
    largest-magnitude component of each column real and positive, which keeps
    measurement probabilities reproducible across runs.
    """
    if axis not in ("x", "y", "z"):
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    dim = ops.sz.shape[0]
    key = (dim, axis)
    hit = _basis_cache.get(key)
    if hit is not None:
        return hit
    j = (dim - 1) / 2
    target = j - np.arange(dim)[::-1]  # -J ... +J ascending
    if axis == "z":
        # S_z is diagonal with m descending; ascending order is the
        # reversed identity.
        vectors = np.eye(dim)[:, ::-1].astype(complex)
        eigenvalues = target.copy()
    else:
        op = ops.sx if axis == "x" else ops.sy
        try:
            eigenvalues, vectors = np.linalg.eigh(op)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition of S_{axis} failed at dim={dim}") from exc
        if np.max(np.abs(eigenvalues - target)) > ALGEBRA_TOL:
            raise NumericalError(f"S_{axis} spectrum deviates from the -J..J grid at dim={dim}")
        anchors = np.argmax(np.abs(vectors), axis=0)
        phases = vectors[anchors, np.arange(dim)]
        vectors = vectors * (np.abs(phases) / phases)[None, :]
    result = BasisTransform(axis, np.ascontiguousarray(vectors), eigenvalues)
    _basis_cache[key] = result
    return result


def expectation(state: np.ndarray, op: np.ndarray) -> float:
    """<state| op |state> for a Hermitian op; the imaginary residue is checked."""
    if op.shape != (state.shape[0], state.shape[0]):
        raise ValueError(f"operator shape {op.shape} does not match state length {state.shape[0]}")
    value = np.vdot(state, op @ state)
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise NumericalError(f"expectation value has imaginary residue {value.imag:.3e}")
    return float(value.real)
