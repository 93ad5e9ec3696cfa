"""Command-line front end: config parsing, dispatch, CSV and manifest emission.

Every run writes one CSV per logical table followed by a JSON manifest
carrying the fully resolved configuration, tool version, wall-clock
duration, per-file sha256 checksums, and collected warnings. Reruns from
identical configuration reproduce the CSV bytes exactly.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .spin_core import NumericalError, build_spin_system, coherent_state
from .propagation import (
    ModelParams,
    floquet_hamiltonian,
    period_propagator,
    stroboscopic_evolve,
)
from .metrology import fidelity, husimi_q, linear_entropy, qfi
from .meanfield import default_seed_grid, poincare_section
from . import scans

ENV_OUTDIR = "SPINCHAOS_OUTDIR"

_PI = math.pi


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def _int_list(text: str):
    try:
        values = [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated integer list")
    return values


# name -> (flag, converter, default, help); converters also apply to config files.
MODEL_OPTIONS = {
    "n_atoms": ("--n", _positive_int, 100, "particle count N"),
    "chi": ("--chi", float, 10.0, "nonlinearity strength"),
    "bx": ("--bx", float, 1.5, "drive amplitude"),
    "bz": ("--bz", float, _PI / 2, "longitudinal field (estimated parameter)"),
    "omega": ("--omega", _positive_float, 2 * _PI, "drive angular frequency"),
}
NUMERIC_OPTIONS = {
    "steps": ("--steps", _positive_int, 1000, "sub-period split steps"),
    "epsilon": ("--epsilon", _positive_float, 1e-5, "finite-difference step in bz"),
    "rk4_divisor": ("--rk4-divisor", _positive_int, 1000, "classical RK4 steps per period"),
    "floor": ("--floor", _positive_float, 1e-12, "probability floor for FI sums"),
}
IO_OPTIONS = {
    "outdir": ("--outdir", str, None, f"output directory (default ${ENV_OUTDIR} or '.')"),
    "overwrite": ("--overwrite", bool, False, "allow clobbering existing outputs"),
    "workers": ("--workers", _positive_int, 1, "worker threads for independent sweep points"),
}

COMMAND_OPTIONS = {
    "poincare": {
        "periods": ("--periods", _positive_int, 500, "periods per trajectory"),
        "seeds_phi": ("--seeds-phi", _positive_int, 24, "seed grid size along phi"),
        "seeds_z": ("--seeds-z", _positive_int, 24, "seed grid size along z"),
        "z_lim": ("--z-lim", _positive_float, 0.98, "seed grid half-extent in z"),
        "box_threshold": ("--box-threshold", _positive_int, scans.DEFAULT_BOX_THRESHOLD,
                          "distinct-box count above which a trajectory is chaotic"),
    },
    "phase-map": {
        "quantity": ("--quantity", str, "entropy", "entropy, fidelity, or qfi"),
        "periods": ("--periods", _positive_int, 4096, "evolution periods"),
        "grid_theta": ("--grid-theta", _positive_int, 41, "theta grid points"),
        "grid_phi": ("--grid-phi", _positive_int, 41, "phi grid points"),
        "theta_lo": ("--theta-lo", float, 0.05, "lowest theta (poles are degenerate classically)"),
        "theta_hi": ("--theta-hi", float, _PI - 0.05, "highest theta"),
    },
    "evolve": {
        "theta": ("--theta", float, 2.423, "initial polar angle"),
        "phi": ("--phi", float, 1.126, "initial azimuth"),
        "periods": ("--periods", _positive_int, 1024, "periods to evolve"),
        "record": ("--record", str, "all", "'all' periods or 'pow2' checkpoints"),
    },
    "qfi-scaling": {
        "variable": ("--variable", str, "time", "'time' or 'atoms'"),
        "theta": ("--theta", float, 2.423, "initial polar angle (seed=explicit)"),
        "phi": ("--phi", float, 1.126, "initial azimuth (seed=explicit)"),
        "seed": ("--seed", str, "explicit",
                 "explicit, chaotic-sea, edge-state, or regular-island"),
        "periods": ("--periods", _positive_int, 4096,
                    "max periods (time) or fixed periods (atoms)"),
        "fit_from": ("--fit-from", _positive_int, 32, "first period count entering the time fit"),
        "n_list": ("--n-list", _int_list, [50, 71, 100, 141, 200, 283, 400], "N values (atoms)"),
        "map_n": ("--map-n", _positive_int, 60, "N for the seed-selection map"),
        "map_grid": ("--map-grid", _positive_int, 41, "grid size for the seed-selection map"),
        "map_periods": ("--map-periods", _positive_int, 4096, "periods for the seed-selection map"),
    },
    "fi-sweep": {
        "theta": ("--theta", float, 2.423, "initial polar angle"),
        "phi": ("--phi", float, 1.126, "initial azimuth"),
        "periods": ("--periods", _positive_int, 3, "evolution periods"),
        "chi_lo": ("--chi-lo", _positive_float, 0.5, "lowest chi"),
        "chi_hi": ("--chi-hi", _positive_float, 30.0, "highest chi"),
        "chi_points": ("--chi-points", _positive_int, 60, "sweep size"),
    },
    "bz-sweep": {
        "theta": ("--theta", float, 2.423, "initial polar angle"),
        "phi": ("--phi", float, 1.126, "initial azimuth"),
        "periods": ("--periods", _positive_int, 3, "evolution periods"),
        "bz_lo": ("--bz-lo", float, 0.0, "lowest bz"),
        "bz_hi": ("--bz-hi", float, _PI, "highest bz"),
        "bz_points": ("--bz-points", _positive_int, 65, "sweep size"),
    },
    "error-propagation": {
        "theta": ("--theta", float, 2.423, "initial polar angle"),
        "phi": ("--phi", float, 1.126, "initial azimuth"),
        "periods": ("--periods", _positive_int, 3, "evolution periods"),
        "n_list": ("--n-list", _int_list, [100, 141, 200, 283, 400], "N values"),
        "bz_lo": ("--bz-lo", float, 0.0, "lowest bz in the optimum search"),
        "bz_hi": ("--bz-hi", float, _PI, "highest bz in the optimum search"),
        "bz_points": ("--bz-points", _positive_int, 33, "bz grid size per N"),
    },
    "entropy-cut": {
        "periods": ("--periods", _positive_int, 1024, "evolution periods"),
        "n_list": ("--n-list", _int_list, [100, 200, 400], "N values, one curve each"),
        "grid_theta": ("--grid-theta", _positive_int, 161, "theta samples along the cut"),
        "phi_fixed": ("--phi-fixed", float, _PI, "azimuth of the cut line"),
    },
    "husimi": {
        "theta": ("--theta", float, 2.423, "initial polar angle"),
        "phi": ("--phi", float, 1.126, "initial azimuth"),
        "periods": ("--periods", _positive_int, 1024, "evolution periods"),
        "grid_theta": ("--grid-theta", _positive_int, 181, "theta grid points"),
        "grid_phi": ("--grid-phi", _positive_int, 361, "phi grid points"),
    },
    "floquet-h": {},
}

EXPECTED_FILES = {
    "poincare": ["poincare.csv"],
    "phase-map": ["phase_map.csv"],
    "evolve": ["evolve.csv"],
    "qfi-scaling": ["scaling.csv", "fit.csv"],
    "fi-sweep": ["fi_sweep.csv"],
    "bz-sweep": ["bz_sweep.csv"],
    "error-propagation": ["err_prop.csv", "fit.csv"],
    "entropy-cut": ["entropy_cut.csv"],
    "husimi": ["husimi.csv"],
    "floquet-h": ["floquet_h.csv", "quasienergies.csv"],
}


def _options_for(command: str) -> dict:
    merged = {}
    merged.update(MODEL_OPTIONS)
    merged.update(NUMERIC_OPTIONS)
    merged.update(COMMAND_OPTIONS[command])
    merged.update(IO_OPTIONS)
    return merged


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinchaos",
        description="Driven collective-spin simulator: classical sections, "
                    "stroboscopic quantum evolution, and metrology sweeps.",
    )
    parser.add_argument("--version", action="version", version=f"spinchaos {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMAND_OPTIONS:
        p = sub.add_parser(command, help=f"run the {command} experiment")
        p.add_argument("--config", default=None,
                       help="flat key=value file or a manifest JSON to load settings from")
        for name, (flag, conv, default, help_text) in _options_for(command).items():
            if conv is bool:
                p.add_argument(flag, dest=name, action="store_const", const=True,
                               default=None, help=help_text)
            else:
                p.add_argument(flag, dest=name, type=conv, default=None,
                               help=f"{help_text} (default {default})")
    return parser


def _read_config_file(path: str, command: str, options: dict) -> dict:
    """Flat key=value settings, or the config echo of a manifest JSON."""
    text = Path(path).read_text(encoding="utf-8")
    loaded: dict = {}
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        recorded = payload.get("command")
        if recorded is not None and recorded != command:
            raise ValueError(f"config file was recorded for command {recorded!r}, not {command!r}")
        loaded = dict(payload.get("config", payload))
    else:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            loaded[key.strip()] = value.strip()
    config = {}
    for key, value in loaded.items():
        if key not in options:
            raise ValueError(f"unknown config key {key!r} for command {command!r}")
        conv = options[key][1]
        if conv is bool:
            config[key] = value if isinstance(value, bool) else str(value).lower() == "true"
        elif isinstance(value, str):
            config[key] = conv(value)
        elif conv is _int_list:
            config[key] = [int(v) for v in value]
        else:
            config[key] = conv(str(value))
    return config


def parse_config(argv):
    """Resolve the effective configuration: flags > config file > defaults."""
    parser = _build_parser()
    namespace = parser.parse_args(argv)
    command = namespace.command
    options = _options_for(command)
    config = {name: spec[2] for name, spec in options.items()}
    if namespace.config:
        try:
            config.update(_read_config_file(namespace.config, command, options))
        except (OSError, json.JSONDecodeError, ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(str(exc))
    for name in options:
        flag_value = getattr(namespace, name)
        if flag_value is not None:
            config[name] = flag_value
    if config.get("outdir") is None:
        config["outdir"] = os.environ.get(ENV_OUTDIR, ".")
    if config.get("overwrite") is None:
        config["overwrite"] = False
    return command, config


def _model(config) -> ModelParams:
    return ModelParams(
        chi=config["chi"], bz=config["bz"], bx=config["bx"],
        n_atoms=config["n_atoms"], omega=config["omega"],
    )


class OutputTracker:
    """Writes CSVs with deterministic formatting and records checksums."""

    def __init__(self, outdir: str, overwrite: bool, expected):
        self.dir = Path(outdir)
        self.dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.dir, os.W_OK):
            raise PermissionError(f"output directory {self.dir} is not writable")
        if not overwrite:
            blockers = [n for n in list(expected) + ["manifest.json"] if (self.dir / n).exists()]
            if blockers:
                raise FileExistsError(
                    f"outputs already exist in {self.dir}: {blockers}; pass --overwrite")
        self.checksums: dict = {}
        self.written: list = []

    @staticmethod
    def _cell(value) -> str:
        if isinstance(value, str):
            return value
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        return format(float(value), ".17g")

    def write_csv(self, name: str, header, rows) -> None:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([self._cell(v) for v in row])
        data = buffer.getvalue().encode("utf-8")
        path = self.dir / name
        path.write_bytes(data)
        self.written.append(path)
        self.checksums[name] = hashlib.sha256(data).hexdigest()

    def write_manifest(self, command, config, duration, warnings, notes) -> None:
        manifest = {
            "command": command,
            "config": config,
            "version": __version__,
            "duration_s": round(duration, 3),
            "outputs": self.checksums,
            "warnings": warnings,
            "notes": notes,
        }
        path = self.dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        self.written.append(path)

    def discard_partial(self) -> None:
        for path in self.written:
            try:
                path.unlink()
            except OSError:
                pass


def _seed_angles(config, params, warnings, notes):
    """Explicit (theta, phi) or a programmatic pick from a desk-scale QFI map."""
    label = config.get("seed", "explicit")
    if label == "explicit":
        return config["theta"], config["phi"]
    key = label.replace("-", "_")
    thetas = np.linspace(0.05, _PI - 0.05, config["map_grid"])
    phis = np.linspace(0.0, 2 * _PI, config["map_grid"], endpoint=False)
    qfi_map = scans.phase_map(
        "qfi", thetas, phis, replace(params, n_atoms=config["map_n"]),
        config["map_periods"], config["steps"], config["epsilon"],
    )
    seeds = scans.select_seeds(qfi_map)
    if key not in seeds:
        raise ValueError(f"seed must be explicit or one of {sorted(seeds)}, got {label!r}")
    if qfi_map.richardson_ok is False:
        warnings.append("seed-selection map failed the epsilon/2 consistency check")
    notes["selected_seed"] = {"label": label, "theta": seeds[key][0], "phi": seeds[key][1]}
    notes["seed_map"] = {"n_atoms": config["map_n"], "grid": config["map_grid"],
                        "periods": config["map_periods"]}
    return seeds[key]


def _cmd_poincare(config, out, warnings, notes):
    params = _model(config)
    seeds = default_seed_grid(config["seeds_phi"], config["seeds_z"], config["z_lim"])
    section = poincare_section(seeds, params, config["periods"], config["rk4_divisor"])
    rows = (
        (i, n + 1, section.phis[i, n], section.zs[i, n])
        for i in range(seeds.shape[0])
        for n in range(config["periods"])
    )
    out.write_csv("poincare.csv", ("seed_index", "period", "phi", "z"), rows)
    notes["chaos_fraction"] = scans.chaos_fraction(section, threshold=config["box_threshold"])
    clamps = int(section.clamp_events.sum())
    if clamps:
        warnings.append(f"z clamped at the poles {clamps} times")
    aborted = int(section.aborted.sum())
    if aborted:
        warnings.append(f"{aborted} trajectories aborted on non-finite values")


def _cmd_phase_map(config, out, warnings, notes):
    params = _model(config)
    thetas = np.linspace(config["theta_lo"], config["theta_hi"], config["grid_theta"])
    phis = np.linspace(0.0, 2 * _PI, config["grid_phi"], endpoint=False)
    result = scans.phase_map(
        config["quantity"], thetas, phis, params, config["periods"],
        config["steps"], config["epsilon"],
    )
    rows = (
        (thetas[i], phis[j], result.values[i, j])
        for i in range(thetas.size)
        for j in range(phis.size)
    )
    out.write_csv("phase_map.csv", ("theta", "phi", result.quantity), rows)
    if result.richardson_ok is False:
        warnings.append("QFI map failed the epsilon/2 consistency check")


def _cmd_evolve(config, out, warnings, notes):
    params = _model(config)
    periods = config["periods"]
    if config["record"] == "all":
        schedule = np.arange(1, periods + 1)
    elif config["record"] == "pow2":
        schedule = np.unique(np.append(2 ** np.arange(int(math.log2(periods)) + 1), periods))
    else:
        raise ValueError(f"record must be 'all' or 'pow2', got {config['record']!r}")
    system, ops = build_spin_system(params.n_atoms)
    psi0 = coherent_state(system, config["theta"], config["phi"])
    eps = config["epsilon"]
    trajs = [
        stroboscopic_evolve(
            period_propagator(params.with_bz(params.bz + off), config["steps"]),
            psi0, periods, record=schedule)
        for off in (0.0, eps, -eps)
    ]
    rows = []
    for i, n in enumerate(schedule):
        mid, plus, minus = trajs[0].states[i], trajs[1].states[i], trajs[2].states[i]
        dpsi = (plus - minus) / (2 * eps)
        rows.append((
            int(n), n * params.period,
            linear_entropy(mid, ops, system.j),
            fidelity(psi0, mid),
            qfi(mid, dpsi, eps).value,
            np.vdot(mid, ops.sz @ mid).real,
            np.vdot(mid, ops.sz2 @ mid).real,
        ))
    out.write_csv(
        "evolve.csv",
        ("period", "time", "entropy", "fidelity", "qfi", "sz_mean", "sz2_mean"),
        rows,
    )
    drift = max(t.max_norm_drift for t in trajs)
    if drift > 1e-8:
        warnings.append(f"norm drift reached {drift:.3e}")


def _cmd_qfi_scaling(config, out, warnings, notes):
    params = _model(config)
    initial = _seed_angles(config, params, warnings, notes)
    if config["variable"] == "time":
        periods = config["periods"]
        schedule = np.unique(np.append(2 ** np.arange(int(math.log2(periods)) + 1), periods))
        series = scans.scaling_sweep(
            "time", schedule, initial, params,
            steps=config["steps"], epsilon=config["epsilon"])
        x_name = "periods"
        in_fit = series.xs >= config["fit_from"]
        lo = int(np.argmax(in_fit)) if in_fit.any() else 0
        fit = scans.loglog_fit(series.xs, series.ys, (lo, series.xs.size - 1))
    elif config["variable"] == "atoms":
        series = scans.scaling_sweep(
            "atoms", config["n_list"], initial, params,
            n_periods=config["periods"], steps=config["steps"],
            epsilon=config["epsilon"], workers=config["workers"])
        x_name = "n_atoms"
        fit = scans.loglog_fit(series.xs, series.ys)
    else:
        raise ValueError(f"variable must be 'time' or 'atoms', got {config['variable']!r}")
    out.write_csv("scaling.csv", (x_name, "qfi"), zip(series.xs, series.ys))
    lo, hi = fit.fit_range
    out.write_csv(
        "fit.csv",
        ("slope", "intercept", "r_squared", "x_lo", "x_hi", "n_points"),
        [(fit.slope, fit.intercept, fit.r_squared,
          series.xs[lo], series.xs[hi], hi - lo + 1)],
    )
    notes["fit"] = {"slope": fit.slope, "r_squared": fit.r_squared}
    if series.context.get("richardson_ok") is False:
        warnings.append(
            f"epsilon/2 consistency check failed (rel {series.context['richardson_rel']:.2e})")


def _sweep_command(config, out, warnings, notes, sweep_var, grid, outputs, filename):
    params = _model(config)
    table = scans.parameter_sweep(
        sweep_var, grid, params, outputs, (config["theta"], config["phi"]),
        n_periods=config["periods"], steps=config["steps"], epsilon=config["epsilon"])
    names = list(table.columns)
    rows = zip(grid, *[table.columns[n] for n in names])
    out.write_csv(filename, (sweep_var, *names), rows)
    notes["optimum"] = {
        name: {"index": idx, sweep_var: float(grid[idx]), "value": float(table.columns[name][idx])}
        for name, idx in table.optimum.items()
    }
    return table


def _cmd_fi_sweep(config, out, warnings, notes):
    grid = np.linspace(config["chi_lo"], config["chi_hi"], config["chi_points"])
    _sweep_command(config, out, warnings, notes, "chi", grid,
                   ["qfi", "fi_x", "fi_y", "fi_z"], "fi_sweep.csv")


def _cmd_bz_sweep(config, out, warnings, notes):
    grid = np.linspace(config["bz_lo"], config["bz_hi"], config["bz_points"])
    table = _sweep_command(config, out, warnings, notes, "bz", grid,
                           ["qfi", "fi_x", "fi_y", "fi_z", "s_z_moments", "delta_bz"],
                           "bz_sweep.csv")
    if not np.all(np.isfinite(table.columns["delta_bz"])):
        warnings.append("delta_bz hit insensitive points (infinite uncertainty) on the grid")


def _cmd_error_propagation(config, out, warnings, notes):
    params = _model(config)
    grid = np.linspace(config["bz_lo"], config["bz_hi"], config["bz_points"])
    rows = []
    for n_atoms in config["n_list"]:
        table = scans.parameter_sweep(
            "bz", grid, replace(params, n_atoms=n_atoms), ["delta_bz"],
            (config["theta"], config["phi"]),
            n_periods=config["periods"], steps=config["steps"], epsilon=config["epsilon"])
        if "delta_bz" not in table.optimum:
            warnings.append(f"no finite uncertainty found at N={n_atoms}")
            continue
        idx = table.optimum["delta_bz"]
        best = table.columns["delta_bz"][idx]
        rows.append((n_atoms, grid[idx], best, best * best))
    if not rows:
        raise NumericalError("error propagation produced no finite optima")
    out.write_csv("err_prop.csv", ("n_atoms", "bz_opt", "delta_bz", "delta_bz_sq"), rows)
    ns = np.array([r[0] for r in rows], dtype=float)
    sq = np.array([r[3] for r in rows])
    fit = scans.loglog_fit(ns, sq)
    out.write_csv(
        "fit.csv",
        ("slope", "intercept", "r_squared", "x_lo", "x_hi", "n_points"),
        [(fit.slope, fit.intercept, fit.r_squared, ns[0], ns[-1], ns.size)],
    )
    notes["fit"] = {"slope": fit.slope, "r_squared": fit.r_squared}


def _cmd_entropy_cut(config, out, warnings, notes):
    params = _model(config)
    thetas = np.linspace(0.0, _PI, config["grid_theta"])
    cuts = scans.entropy_line_cut(
        thetas, params, config["n_list"], config["periods"],
        phi_fixed=config["phi_fixed"], steps=config["steps"], workers=config["workers"])
    rows = (
        (cut.n_atoms, cut.thetas[i], cut.entropies[i])
        for cut in cuts
        for i in range(cut.thetas.size)
    )
    out.write_csv("entropy_cut.csv", ("n_atoms", "theta", "entropy"), rows)


def _cmd_husimi(config, out, warnings, notes):
    params = _model(config)
    system, _ = build_spin_system(params.n_atoms)
    psi0 = coherent_state(system, config["theta"], config["phi"])
    prop = period_propagator(params, config["steps"])
    final = stroboscopic_evolve(prop, psi0, config["periods"]).states[-1]
    grid = husimi_q(
        final,
        np.linspace(0.0, _PI, config["grid_theta"]),
        np.linspace(0.0, 2 * _PI, config["grid_phi"]),
    )
    rows = (
        (grid.thetas[i], grid.phis[j], grid.values[i, j])
        for i in range(grid.thetas.size)
        for j in range(grid.phis.size)
    )
    out.write_csv("husimi.csv", ("theta", "phi", "q"), rows)
    notes["quadrature_integral"] = grid.integral


def _cmd_floquet_h(config, out, warnings, notes):
    params = _model(config)
    prop = period_propagator(params, config["steps"])
    result = floquet_hamiltonian(prop)
    hf = result.matrix
    rows = (
        (i, j, hf[i, j].real, hf[i, j].imag, abs(hf[i, j]))
        for i in range(hf.shape[0])
        for j in range(hf.shape[1])
    )
    out.write_csv("floquet_h.csv", ("row", "col", "re", "im", "abs"), rows)
    out.write_csv("quasienergies.csv", ("index", "quasienergy"),
                  enumerate(result.quasienergies))
    if result.branch_cut_hits:
        warnings.append(f"{result.branch_cut_hits} eigenphases pinned at the +pi branch cut")


HANDLERS = {
    "poincare": _cmd_poincare,
    "phase-map": _cmd_phase_map,
    "evolve": _cmd_evolve,
    "qfi-scaling": _cmd_qfi_scaling,
    "fi-sweep": _cmd_fi_sweep,
    "bz-sweep": _cmd_bz_sweep,
    "error-propagation": _cmd_error_propagation,
    "entropy-cut": _cmd_entropy_cut,
    "husimi": _cmd_husimi,
    "floquet-h": _cmd_floquet_h,
}


def execute(command: str, config: dict) -> int:
    """Run one experiment: CSVs first, manifest last, nothing partial kept."""
    try:
        out = OutputTracker(config["outdir"], config["overwrite"], EXPECTED_FILES[command])
    except (PermissionError, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    warnings: list = []
    notes: dict = {}
    started = time.perf_counter()
    try:
        HANDLERS[command](config, out, warnings, notes)
    except NumericalError as exc:
        out.discard_partial()
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        out.discard_partial()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        out.discard_partial()
        raise
    out.write_manifest(command, config, time.perf_counter() - started, warnings, notes)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    command, config = parse_config(sys.argv[1:] if argv is None else argv)
    return execute(command, config)


if __name__ == "__main__":
    sys.exit(main())
