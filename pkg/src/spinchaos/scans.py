"""Experiment orchestration on top of the propagation and metrology layers.

Phase-space maps over initial coherent states, scaling sweeps in time and
particle number, parameter sweeps in chi and bz, entropy line cuts, chaos
fractions from classical sections, and log-log fits.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.ndimage import binary_erosion

from .spin_core import NumericalError, build_spin_system, coherent_state
from .propagation import (
    DEFAULT_EPSILON,
    DEFAULT_STEPS,
    RICHARDSON_RTOL,
    ModelParams,
    derivative_state,
    evolve_family,
    period_propagator,
    stroboscopic_evolve,
)
from .metrology import error_propagation, fidelity, fisher_information, linear_entropy, qfi
from .meanfield import PoincareSection, poincare_section

DEFAULT_BOX_GRID = (50, 50)
# Box threshold calibrated on solvable limits: a drive-free trajectory keeps
# one z row (at most 50 boxes 'wide') and even a fully tilted closed curve
# stays near 2 x 50 cells, while area-filling trajectories occupy hundreds.
DEFAULT_BOX_THRESHOLD = 120

PHASE_MAP_QUANTITIES = ("entropy", "fidelity", "qfi")
FIGURE_OF_MERIT_CHOICES = ("qfi", "fi_x", "fi_y", "fi_z", "delta_bz", "entropy", "fidelity")
SWEEP_OUTPUTS = ("qfi", "fi_x", "fi_y", "fi_z", "s_z_moments", "delta_bz")


class PhaseMap(NamedTuple):
    quantity: str
    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray       # (n_theta, n_phi)
    params: ModelParams
    n_periods: int
    richardson_ok: Optional[bool]


class ScalingSeries(NamedTuple):
    variable: str            # 'time' or 'atoms'
    xs: np.ndarray
    ys: np.ndarray
    context: dict


class FitResult(NamedTuple):
    slope: float
    intercept: float
    r_squared: float
    fit_range: tuple


class SweepTable(NamedTuple):
    sweep_var: str
    values: np.ndarray
    columns: dict
    optimum: dict            # column name -> index of best value
    context: dict


class LineCut(NamedTuple):
    n_atoms: int
    thetas: np.ndarray
    entropies: np.ndarray


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _coherent_block(n_atoms: int, thetas, phis) -> np.ndarray:
    """Columns of coherent states for every (theta, phi) pair, theta outer."""
    system, _ = build_spin_system(n_atoms)
    cols = [coherent_state(system, t, p) for t in thetas for p in phis]
    return np.column_stack(cols)


def _entropy_columns(psi_block: np.ndarray, ops, j: float) -> np.ndarray:
    ex = np.einsum("ij,ij->j", psi_block.conj(), ops.sx @ psi_block).real
    ey = np.einsum("ij,ij->j", psi_block.conj(), ops.sy @ psi_block).real
    ez = np.einsum("ij,ij->j", psi_block.conj(), ops.sz @ psi_block).real
    s = 0.5 * (1.0 - (ex * ex + ey * ey + ez * ez) / (j * j))
    return np.clip(s, 0.0, 0.5)


def _qfi_columns(psi_block: np.ndarray, dpsi_block: np.ndarray) -> np.ndarray:
    norms = np.einsum("ij,ij->j", dpsi_block.conj(), dpsi_block).real
    cross = np.abs(np.einsum("ij,ij->j", dpsi_block.conj(), psi_block)) ** 2
    return np.maximum(4.0 * (norms - cross), 0.0)


def phase_map(
    quantity: str,
    thetas,
    phis,
    params: ModelParams,
    n_periods: int,
    steps: int = DEFAULT_STEPS,
    epsilon: float = DEFAULT_EPSILON,
) -> PhaseMap:
    """Evolve every grid coherent state and evaluate one quantity per point.

    One propagator (a bz +/- epsilon pair for qfi, plus an epsilon/2 pair
    for the consistency check) is shared by the whole grid; the evolution is
    a single block matrix product per recorded power of the propagator.
    """
    if quantity not in PHASE_MAP_QUANTITIES:
        raise ValueError(f"quantity must be one of {PHASE_MAP_QUANTITIES}, got {quantity!r}")
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    if thetas.min() < 0 or thetas.max() > math.pi or phis.min() < 0 or phis.max() >= 2 * math.pi:
        raise ValueError("grid must lie within theta in [0, pi], phi in [0, 2 pi)")
    system, ops = build_spin_system(params.n_atoms)
    block = _coherent_block(params.n_atoms, thetas, phis)
    rich_ok = None

    def final_block(p: ModelParams) -> np.ndarray:
        prop = period_propagator(p, steps)
        return stroboscopic_evolve(prop, block, n_periods).states[-1]

    if quantity == "qfi":
        mid = final_block(params)
        plus = final_block(params.with_bz(params.bz + epsilon))
        minus = final_block(params.with_bz(params.bz - epsilon))
        dpsi = (plus - minus) / (2 * epsilon)
        values = _qfi_columns(mid, dpsi)
        half = epsilon / 2
        plus_h = final_block(params.with_bz(params.bz + half))
        minus_h = final_block(params.with_bz(params.bz - half))
        values_h = _qfi_columns(mid, (plus_h - minus_h) / (2 * half))
        significant = values > 1e-6 * max(values.max(), 1e-30)
        rel = np.abs(values - values_h)[significant] / values[significant]
        rich_ok = bool(rel.size == 0 or np.quantile(rel, 0.99) < RICHARDSON_RTOL)
    elif quantity == "entropy":
        values = _entropy_columns(final_block(params), ops, system.j)
    else:
        finals = final_block(params)
        values = np.abs(np.einsum("ij,ij->j", block.conj(), finals)) ** 2
    return PhaseMap(
        quantity, thetas, phis, values.reshape(thetas.size, phis.size),
        params, n_periods, rich_ok,
    )


def _merit_from_states(fom, psi_f, psi_plus, psi_minus, dpsi, epsilon, system, ops, psi0):
    if fom == "qfi":
        return qfi(psi_f, dpsi, epsilon).value
    if fom.startswith("fi_"):
        return fisher_information(fom[3:], psi_plus, psi_minus, epsilon).value
    if fom == "delta_bz":
        return error_propagation(ops.sz, psi_plus, psi_minus, psi_f, epsilon)
    if fom == "entropy":
        return linear_entropy(psi_f, ops, system.j)
    if fom == "fidelity":
        return fidelity(psi0, psi_f)
    raise ValueError(f"figure_of_merit must be one of {FIGURE_OF_MERIT_CHOICES}, got {fom!r}")


def scaling_sweep(
    variable: str,
    values: Sequence,
    initial: tuple,
    params: ModelParams,
    figure_of_merit: str = "qfi",
    n_periods: Optional[int] = None,
    steps: int = DEFAULT_STEPS,
    epsilon: float = DEFAULT_EPSILON,
    workers: int = 1,
) -> ScalingSeries:
    """Figure of merit against evolution time or particle number.

    variable='time': values are period counts, one shared propagator per bz
    offset with powers reached through repeated squaring; the epsilon/2
    consistency check runs on the full schedule. variable='atoms': values
    are N, independent systems (parallel across workers); the consistency
    check runs on the smallest N only to keep large-N builds affordable.
    """
    if variable not in ("time", "atoms"):
        raise ValueError("variable must be 'time' or 'atoms'")
    if figure_of_merit not in FIGURE_OF_MERIT_CHOICES:
        raise ValueError(f"figure_of_merit must be one of {FIGURE_OF_MERIT_CHOICES}")
    xs = np.asarray(values)
    if xs.size == 0 or np.any(np.diff(xs) <= 0):
        raise ValueError("values must be nonempty and strictly increasing")
    theta, phi = initial
    needs_derivative = figure_of_merit in ("qfi", "fi_x", "fi_y", "fi_z", "delta_bz")
    context = {
        "params": params, "initial": (theta, phi), "figure_of_merit": figure_of_merit,
        "epsilon": epsilon, "steps": steps, "richardson_ok": None, "richardson_rel": None,
    }

    if variable == "time":
        schedule = xs.astype(int)
        system, ops = build_spin_system(params.n_atoms)
        psi0 = coherent_state(system, theta, phi)
        offsets = [0.0] + ([epsilon, -epsilon, epsilon / 2, -epsilon / 2] if needs_derivative else [])
        trajs = []
        for off in offsets:
            prop = period_propagator(params.with_bz(params.bz + off), steps)
            trajs.append(stroboscopic_evolve(prop, psi0, int(schedule[-1]), record=schedule))
        ys = np.empty(schedule.size)
        rich_rel = 0.0
        for i in range(schedule.size):
            mid = trajs[0].states[i]
            if needs_derivative:
                plus, minus = trajs[1].states[i], trajs[2].states[i]
                dpsi = (plus - minus) / (2 * epsilon)
                ys[i] = _merit_from_states(
                    figure_of_merit, mid, plus, minus, dpsi, epsilon, system, ops, psi0)
                q_full = _qfi_columns(mid[:, None], dpsi[:, None])[0]
                dpsi_h = (trajs[3].states[i] - trajs[4].states[i]) / epsilon
                q_half = _qfi_columns(mid[:, None], dpsi_h[:, None])[0]
                scale = max(q_full, q_half, 1e-30)
                rich_rel = max(rich_rel, abs(q_full - q_half) / scale)
            else:
                ys[i] = _merit_from_states(
                    figure_of_merit, mid, None, None, None, epsilon, system, ops, psi0)
        if needs_derivative:
            context["richardson_rel"] = rich_rel
            context["richardson_ok"] = bool(rich_rel < RICHARDSON_RTOL)
        context["n_periods"] = int(schedule[-1])
        return ScalingSeries("time", schedule, ys, context)

    if n_periods is None:
        raise ValueError("atoms sweeps need n_periods")
    context["n_periods"] = n_periods

    def one_size(item):
        index, n_atoms = item
        p = replace(params, n_atoms=int(n_atoms))
        system, ops = build_spin_system(p.n_atoms)
        psi0 = coherent_state(system, theta, phi)
        if needs_derivative:
            d = derivative_state(p, psi0, n_periods, epsilon, steps, richardson=(index == 0))
            value = _merit_from_states(
                figure_of_merit, d.psi_f, d.psi_plus, d.psi_minus, d.dpsi,
                epsilon, system, ops, psi0)
            return value, d.richardson_ok, d.richardson_rel
        prop = period_propagator(p, steps)
        psi_f = stroboscopic_evolve(prop, psi0, n_periods).states[-1]
        value = _merit_from_states(
            figure_of_merit, psi_f, None, None, None, epsilon, system, ops, psi0)
        return value, None, None

    results = _pmap(one_size, list(enumerate(xs)), workers)
    ys = np.array([r[0] for r in results])
    context["richardson_ok"] = results[0][1]
    context["richardson_rel"] = results[0][2]
    return ScalingSeries("atoms", xs.astype(int), ys, context)


def parameter_sweep(
    sweep_var: str,
    values: Sequence[float],
    params: ModelParams,
    outputs: Sequence[str],
    initial: tuple,
    n_periods: int = 3,
    steps: int = DEFAULT_STEPS,
    epsilon: float = DEFAULT_EPSILON,
) -> SweepTable:
    """Sweep chi or bz at fixed short evolution time.

    All sweep points and their bz +/- epsilon companions evolve as one
    column block sharing the Sx-basis rotations, which is what makes dense
    grids at t of a few T cheap. Outputs follow SWEEP_OUTPUTS; s_z_moments
    expands to columns sz_mean and sz2_mean.
    """
    if sweep_var not in ("chi", "bz"):
        raise ValueError("sweep_var must be 'chi' or 'bz'")
    bad = [o for o in outputs if o not in SWEEP_OUTPUTS]
    if bad:
        raise ValueError(f"unknown outputs {bad}; valid outputs are {SWEEP_OUTPUTS}")
    grid = np.asarray(values, dtype=float)
    if grid.size == 0:
        raise ValueError("values must be nonempty")
    theta, phi = initial
    system, ops = build_spin_system(params.n_atoms)
    psi0 = coherent_state(system, theta, phi)
    needs_derivative = any(o in ("qfi", "fi_x", "fi_y", "fi_z", "delta_bz") for o in outputs)
    offsets = np.array([0.0, epsilon, -epsilon] if needs_derivative else [0.0])
    if sweep_var == "chi":
        chi_col = np.repeat(grid, offsets.size)
        bz_col = np.tile(params.bz + offsets, grid.size)
    else:
        chi_col = np.full(grid.size * offsets.size, params.chi)
        bz_col = (grid[:, None] + offsets[None, :]).ravel()
    finals = evolve_family(params, psi0, n_periods, bz_values=bz_col, chi_values=chi_col, steps=steps)

    columns: dict = {}
    for name in outputs:
        if name == "s_z_moments":
            columns["sz_mean"] = np.empty(grid.size)
            columns["sz2_mean"] = np.empty(grid.size)
        else:
            columns[name] = np.empty(grid.size)
    sz2 = ops.sz2
    for i in range(grid.size):
        base = i * offsets.size
        mid = finals[:, base]
        plus = finals[:, base + 1] if needs_derivative else None
        minus = finals[:, base + 2] if needs_derivative else None
        dpsi = (plus - minus) / (2 * epsilon) if needs_derivative else None
        for name in outputs:
            if name == "s_z_moments":
                columns["sz_mean"][i] = np.vdot(mid, ops.sz @ mid).real
                columns["sz2_mean"][i] = np.vdot(mid, sz2 @ mid).real
            else:
                columns[name][i] = _merit_from_states(
                    name, mid, plus, minus, dpsi, epsilon, system, ops, psi0)

    optimum: dict = {}
    for name, col in columns.items():
        finite = np.isfinite(col)
        if not np.any(finite):
            continue
        if name == "delta_bz":
            optimum[name] = int(np.nanargmin(np.where(finite, col, np.nan)))
        elif name in ("qfi", "fi_x", "fi_y", "fi_z"):
            optimum[name] = int(np.nanargmax(np.where(finite, col, np.nan)))
    context = {
        "params": params, "initial": (theta, phi), "n_periods": n_periods,
        "epsilon": epsilon, "steps": steps,
    }
    return SweepTable(sweep_var, grid, columns, optimum, context)


def entropy_line_cut(
    theta_values,
    params: ModelParams,
    n_atoms_list: Sequence[int],
    n_periods: int,
    phi_fixed: float = math.pi,
    steps: int = DEFAULT_STEPS,
    workers: int = 1,
) -> list:
    """Linear entropy of evolved states along a fixed-phi line, one curve per N."""
    thetas = np.asarray(theta_values, dtype=float)
    if thetas.min() < 0 or thetas.max() > math.pi:
        raise ValueError("theta values must lie in [0, pi]")

    def one_size(n_atoms: int) -> LineCut:
        p = replace(params, n_atoms=int(n_atoms))
        system, ops = build_spin_system(p.n_atoms)
        block = _coherent_block(p.n_atoms, thetas, [phi_fixed])
        prop = period_propagator(p, steps)
        final = stroboscopic_evolve(prop, block, n_periods).states[-1]
        return LineCut(int(n_atoms), thetas, _entropy_columns(final, ops, system.j))

    return _pmap(one_size, list(n_atoms_list), workers)


def loglog_fit(xs, ys, fit_range: Optional[tuple] = None) -> FitResult:
    """Ordinary least squares on (ln x, ln y) over an inclusive index window."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-d arrays of equal length")
    lo, hi = (0, xs.size - 1) if fit_range is None else fit_range
    if not (0 <= lo <= hi < xs.size):
        raise ValueError(f"fit_range {fit_range} out of bounds for {xs.size} samples")
    window = slice(lo, hi + 1)
    bad = [int(i) for i in range(lo, hi + 1) if xs[i] <= 0 or ys[i] <= 0]
    if bad:
        raise ValueError(f"log-log fit needs positive data; offending indices {bad}")
    lx = np.log(xs[window])
    ly = np.log(ys[window])
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    ss_tot = float(total @ total)
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(residual @ residual) / ss_tot
    return FitResult(float(slope), float(intercept), min(max(r_squared, 0.0), 1.0), (lo, hi))


def box_counts(section: PoincareSection, box_grid: tuple = DEFAULT_BOX_GRID) -> np.ndarray:
    """Distinct (phi, z) boxes visited per trajectory."""
    n_phi, n_z = box_grid
    counts = np.zeros(section.phis.shape[0], dtype=int)
    for i in range(section.phis.shape[0]):
        phis = section.phis[i]
        zs = section.zs[i]
        good = np.isfinite(phis) & np.isfinite(zs)
        if not np.any(good):
            continue
        bi = np.clip((phis[good] / (2 * math.pi) * n_phi).astype(int), 0, n_phi - 1)
        bj = np.clip(((zs[good] + 1.0) / 2.0 * n_z).astype(int), 0, n_z - 1)
        counts[i] = np.unique(bi * n_z + bj).size
    return counts


def chaos_fraction(
    section: PoincareSection,
    box_grid: tuple = DEFAULT_BOX_GRID,
    threshold: int = DEFAULT_BOX_THRESHOLD,
) -> float:
    """Fraction of trajectories visiting more than `threshold` distinct boxes."""
    counts = box_counts(section, box_grid)
    return float(np.mean(counts > threshold))


def classical_chaos_map(
    thetas,
    phis,
    params: ModelParams,
    n_periods: int = 500,
    box_grid: tuple = DEFAULT_BOX_GRID,
) -> np.ndarray:
    """Visited-box counts for classical seeds matching a quantum grid.

    A coherent state at (theta, phi) has Bloch coordinates (cos theta,
    +phi), but the classical imbalance z is the negative of the Bloch z
    and the relative phase runs opposite to the Bloch azimuth (the mode
    ordering in the two-mode reduction flips both signs). Seeds are
    therefore placed at (-phi mod 2pi, -cos theta); dropping the flips
    decorrelates this map from the quantum ones.
    Thresholding (fixed count or median split) is the caller's choice.
    """
    thetas = np.asarray(thetas, dtype=float)
    phis = np.asarray(phis, dtype=float)
    seeds = [((-p) % (2 * math.pi), -math.cos(t)) for t in thetas for p in phis]
    section = poincare_section(seeds, params, n_periods)
    counts = box_counts(section, box_grid)
    return counts.reshape(thetas.size, phis.size)


def _snap_to_member(mask: np.ndarray, theta_idx: float, phi_idx: float) -> tuple:
    members = np.argwhere(mask)
    d2 = (members[:, 0] - theta_idx) ** 2 + (members[:, 1] - phi_idx) ** 2
    return tuple(members[int(np.argmin(d2))])


def select_seeds(qfi_map: PhaseMap) -> dict:
    """Representative initial states picked from a QFI phase map.

    chaotic_sea: the top-decile cell whose value sits closest to that
    decile's median (value-typical; the region is annular, so a geometric
    centroid can snap onto an atypical pocket). regular_island: centroid
    of the bottom-decile region, snapped to a member cell. edge_state:
    the largest-QFI cell on the boundary band of the median-threshold
    binarization. The azimuth centroid uses the circular mean since phi
    wraps.
    """
    values = qfi_map.values
    finite = np.isfinite(values)
    if not np.all(finite):
        raise NumericalError("QFI map contains non-finite cells; cannot select seeds")
    high = values >= np.quantile(values, 0.9)
    low = values <= np.quantile(values, 0.1)
    median_mask = values > np.median(values)
    band = median_mask & ~binary_erosion(median_mask)
    if not band.any():
        band = median_mask
    banded = np.where(band, values, -np.inf)
    edge_idx = np.unravel_index(int(np.argmax(banded)), values.shape)

    def centroid_member(mask):
        ti, pi = np.nonzero(mask)
        theta_c = ti.mean()
        angles = qfi_map.phis[pi]
        mean_angle = math.atan2(np.sin(angles).mean(), np.cos(angles).mean()) % (2 * math.pi)
        phi_c = np.interp(mean_angle, qfi_map.phis, np.arange(qfi_map.phis.size))
        return _snap_to_member(mask, theta_c, phi_c)

    high_vals = np.where(high, values, np.nan)
    sea_idx = np.unravel_index(
        int(np.nanargmin(np.abs(high_vals - np.nanmedian(high_vals)))), values.shape)
    island_idx = centroid_member(low)

    def angles_of(idx):
        return (float(qfi_map.thetas[idx[0]]), float(qfi_map.phis[idx[1]]))

    return {
        "chaotic_sea": angles_of(sea_idx),
        "edge_state": angles_of(edge_idx),
        "regular_island": angles_of(island_idx),
    }
