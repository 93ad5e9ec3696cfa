"""Figures of merit evaluated on final states.

Quantum Fisher information, per-axis Fisher information of projective spin
measurements, linear entropy, fidelity, error-propagation uncertainty, and
Husimi Q distributions. All inputs are pure states in the Dicke basis.
"""

import math
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import gammaln

from .spin_core import (
    NumericalError,
    SpinOperators,
    build_spin_system,
    expectation,
    measurement_basis,
)

FI_PROBABILITY_FLOOR = 1e-12
SLOPE_FLOOR = 1e-12


class QfiResult(NamedTuple):
    value: float
    epsilon_used: float
    richardson_ok: Optional[bool]


class FiResult(NamedTuple):
    axis: str
    value: float
    floor_used: float
    suspect_exclusions: int


class HusimiGrid(NamedTuple):
    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray
    integral: float


def qfi(
    psi_f: np.ndarray,
    dpsi: np.ndarray,
    epsilon_used: float = math.nan,
    richardson_ok: Optional[bool] = None,
) -> QfiResult:
    """4 [ <dpsi|dpsi> - |<dpsi|psi_f>|^2 ]; the projection removes global phase."""
    if psi_f.shape != dpsi.shape:
        raise ValueError("psi_f and dpsi must have the same shape")
    value = 4.0 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(dpsi, psi_f)) ** 2)
    if value < -1e-6:
        raise NumericalError(
            f"QFI came out substantially negative ({value:.3e}); increase epsilon"
        )
    return QfiResult(max(value, 0.0), epsilon_used, richardson_ok)


def fisher_information(
    axis: str,
    psi_plus: np.ndarray,
    psi_minus: np.ndarray,
    epsilon: float,
    floor: float = FI_PROBABILITY_FLOOR,
) -> FiResult:
    """FI of a projective S_axis measurement from states at bz +/- epsilon.

    Outcome probabilities are |<m_axis|psi>|^2; the derivative is the central
    difference and the denominator uses midpoint probabilities. Outcomes
    below the floor are dropped; a dropped outcome whose squared derivative
    still exceeds 1e-10 is counted as suspect.
    """
    if psi_plus.shape != psi_minus.shape:
        raise ValueError("psi_plus and psi_minus must have the same shape")
    dim = psi_plus.shape[0]
    _, ops = build_spin_system(dim - 1)
    basis = measurement_basis(ops, axis)
    vh = basis.vectors.conj().T
    p_plus = np.abs(vh @ psi_plus) ** 2
    p_minus = np.abs(vh @ psi_minus) ** 2
    p_mid = (p_plus + p_minus) / 2
    dp = (p_plus - p_minus) / (2 * epsilon)
    keep = p_mid >= floor
    value = float(np.sum(dp[keep] ** 2 / p_mid[keep]))
    suspect = int(np.count_nonzero(dp[~keep] ** 2 > 1e-10))
    return FiResult(axis, value, floor, suspect)


def linear_entropy(state: np.ndarray, ops: SpinOperators, j: float) -> float:
    """(1 - |<S>|^2 / J^2) / 2, zero exactly for coherent states, 1/2 maximal."""
    ex = expectation(state, ops.sx)
    ey = expectation(state, ops.sy)
    ez = expectation(state, ops.sz)
    s = 0.5 * (1.0 - (ex * ex + ey * ey + ez * ez) / (j * j))
    if s < -1e-10 or s > 0.5 + 1e-10:
        raise NumericalError(f"linear entropy {s!r} left [0, 1/2]")
    return float(min(max(s, 0.0), 0.5))


def fidelity(psi0: np.ndarray, psi_n: np.ndarray) -> float:
    """|<psi0|psi_n>|^2."""
    if psi0.shape != psi_n.shape:
        raise ValueError("states must have the same shape")
    f = abs(np.vdot(psi0, psi_n)) ** 2
    if f > 1.0 + 1e-12:
        raise NumericalError(f"fidelity {f!r} exceeds 1")
    return float(min(f, 1.0))


def error_propagation(
    observable: np.ndarray,
    psi_plus: np.ndarray,
    psi_minus: np.ndarray,
    psi_mid: np.ndarray,
    epsilon: float,
) -> float:
    """Delta bz = std(observable) / |d<observable>/d bz|.

    The standard deviation comes from the midpoint state, the slope from the
    central difference. An insensitive point (slope below 1e-12) returns
    +inf rather than a spurious huge number.
    """
    mean_mid = expectation(psi_mid, observable)
    mean_sq = expectation(psi_mid, observable @ observable)
    var = mean_sq - mean_mid * mean_mid
    if var < -1e-10:
        raise NumericalError(f"variance came out negative ({var:.3e})")
    var = max(var, 0.0)
    mean_plus = expectation(psi_plus, observable)
    mean_minus = expectation(psi_minus, observable)
    slope = (mean_plus - mean_minus) / (2 * epsilon)
    # means agreeing to 1e-10 relative are indistinguishable at the state
    # noise level, so the quotient would amplify roundoff, not sensitivity
    scale = max(1.0, abs(mean_plus), abs(mean_minus))
    if abs(mean_plus - mean_minus) < 1e-10 * scale or abs(slope) < SLOPE_FLOOR:
        return math.inf
    return math.sqrt(var) / abs(slope)


def husimi_q(
    state: np.ndarray,
    thetas: Optional[np.ndarray] = None,
    phis: Optional[np.ndarray] = None,
) -> HusimiGrid:
    """Q(theta, phi) = (2J+1)/(4 pi) |<SCS(theta, phi)|state>|^2 on a grid.

    The overlap factorizes into a real theta-profile matrix times azimuthal
    phases, so the whole grid is one matrix product. Quadrature uses
    sin(theta) trapezoid weights; for grids of at least 100x200 the integral
    must come back as 1 within 1e-3.
    """
    if thetas is None:
        thetas = np.linspace(0.0, math.pi, 181)
    if phis is None:
        phis = np.linspace(0.0, 2 * math.pi, 361)
    n = state.shape[0] - 1
    j = n / 2
    k = np.arange(n + 1, dtype=float)
    log_binom = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
    # 0 * log(0) cells at the poles are replaced before use; the errstate
    # silences only the transient -inf products feeding those cells.
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.log(np.sin(thetas / 2))
        log_c = np.log(np.cos(thetas / 2))
        prod_s = k[None, :] * log_s[:, None]
        prod_c = (n - k)[None, :] * log_c[:, None]
    profile = log_binom[None, :]
    profile = profile + np.where(k[None, :] == 0, 0.0, prod_s)
    profile = profile + np.where(k[None, :] == n, 0.0, prod_c)
    b = np.exp(profile)                                   # (n_theta, dim), rows unit norm
    twiddle = np.exp(-1j * np.outer(k, phis)) * state[:, None]
    overlap = b @ twiddle                                 # (n_theta, n_phi)
    values = (2 * j + 1) / (4 * math.pi) * np.abs(overlap) ** 2
    integral = float(np.trapezoid(np.trapezoid(values, x=phis, axis=1) * np.sin(thetas), x=thetas))
    if thetas.size >= 100 and phis.size >= 200 and abs(integral - 1.0) > 1e-3:
        raise NumericalError(f"Husimi quadrature integral {integral:.6f} deviates from 1")
    return HusimiGrid(thetas, phis, values, integral)
