"""Period propagator construction, stroboscopic evolution, derivatives."""

import math

import numpy as np
import pytest
import scipy.linalg

from spinchaos.propagation import (
    ModelParams,
    NumericalError,
    derivative_state,
    evolve_family,
    floquet_hamiltonian,
    period_propagator,
    stroboscopic_evolve,
)
from spinchaos.spin_core import build_spin_system, coherent_state, mz_values

CHAOTIC = ModelParams(chi=10.0, bz=math.pi / 2, bx=1.5, n_atoms=8)


def _scs(n_atoms: int, theta: float, phi: float) -> np.ndarray:
    system, _ = build_spin_system(n_atoms)
    return coherent_state(system, theta, phi)


def test_diagonal_hamiltonian_closed_form():
    params = ModelParams(chi=0.0, bz=0.9, bx=0.0, n_atoms=6)
    expected = np.diag(np.exp(-1j * 0.9 * mz_values(6) * params.period))
    for method in ("split-step", "exact-step"):
        prop = period_propagator(params, 200, method)
        assert np.max(np.abs(prop.u - expected)) < 1e-12


def test_pure_drive_integrates_to_identity():
    # all step generators are proportional to Sx and the drive integrates to zero
    params = ModelParams(chi=0.0, bz=0.0, bx=2.5, n_atoms=10)
    prop = period_propagator(params, 1000)
    assert np.max(np.abs(prop.u - np.eye(11))) < 1e-8


def test_split_and_exact_step_methods_converge_together():
    """Self-convergence of the two build paths.

    At 1000 split steps the difference against a well-converged exact-step
    reference is dominated by the split method's own second-order error;
    the measured gap is 2.07e-6 and quarters when the step is halved.
    """
    split_1k = period_propagator(CHAOTIC, 1000).u
    exact_8k = period_propagator(CHAOTIC, 8000, "exact-step").u
    gap_1k = np.max(np.abs(split_1k - exact_8k))
    assert 1e-7 < gap_1k < 3e-6

    split_2k = period_propagator(CHAOTIC, 2000).u
    exact_16k = period_propagator(CHAOTIC, 16000, "exact-step").u
    gap_2k = np.max(np.abs(split_2k - exact_16k))
    assert 3.0 < gap_1k / gap_2k < 5.0


def test_methods_agree_at_equal_step_counts():
    split = period_propagator(CHAOTIC, 4000).u
    exact = period_propagator(CHAOTIC, 4000, "exact-step").u
    assert np.max(np.abs(split - exact)) < 1e-6


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_propagators_stay_unitary(seed):
    rng = np.random.default_rng(seed)
    params = ModelParams(
        chi=rng.uniform(0, 20), bz=rng.uniform(0, math.pi),
        bx=rng.uniform(0, 6), n_atoms=40,
    )
    u = period_propagator(params, 1000).u
    assert np.max(np.abs(u.conj().T @ u - np.eye(41))) < 1e-9


def test_propagator_cache_returns_same_object():
    assert period_propagator(CHAOTIC, 500) is period_propagator(CHAOTIC, 500)


def test_step_count_validation():
    with pytest.raises(ValueError):
        period_propagator(CHAOTIC, 0)
    with pytest.raises(ValueError):
        period_propagator(CHAOTIC, 100, "magnus")


def test_zero_periods_returns_initial_state():
    psi0 = _scs(8, 1.0, 2.0)
    traj = stroboscopic_evolve(period_propagator(CHAOTIC, 100), psi0, 0)
    np.testing.assert_array_equal(traj.states[-1], psi0)


def test_rotation_advances_coherent_state_azimuth():
    # chi=0, bx=0 rotates the equatorial state about z by bz*T per period
    params = ModelParams(chi=0.0, bz=math.pi / 2, bx=0.0, n_atoms=40)
    psi0 = _scs(40, math.pi / 2, 0.0)
    traj = stroboscopic_evolve(period_propagator(params, 500), psi0, 1)
    predicted = _scs(40, math.pi / 2, math.pi / 2)
    fid = abs(np.vdot(predicted, traj.states[-1])) ** 2
    assert fid > 1 - 1e-9


def test_record_schedule_validation():
    prop = period_propagator(CHAOTIC, 100)
    psi0 = _scs(8, 1.0, 0.0)
    with pytest.raises(ValueError):
        stroboscopic_evolve(prop, psi0, 4, record=[1, 5])
    with pytest.raises(ValueError):
        stroboscopic_evolve(prop, psi0, 4, record=[3, 2])
    with pytest.raises(ValueError):
        stroboscopic_evolve(prop, psi0, -1)


def test_squaring_and_matvec_paths_agree():
    params = ModelParams(chi=10.0, bz=math.pi / 2, bx=1.5, n_atoms=60)
    prop = period_propagator(params, 1000)
    psi0 = _scs(60, 2.0, 1.0)
    a = stroboscopic_evolve(prop, psi0, 2**10, mode="matvec").states[-1]
    b = stroboscopic_evolve(prop, psi0, 2**10, mode="squaring").states[-1]
    assert abs(np.vdot(a, b)) ** 2 > 1 - 1e-8


def test_long_evolution_norm_drift_stays_small():
    params = ModelParams(chi=10.0, bz=math.pi / 2, bx=5.5, n_atoms=200)
    prop = period_propagator(params, 1000)
    psi0 = _scs(200, 2.423, 1.126)
    traj = stroboscopic_evolve(prop, psi0, 2**15)
    assert traj.max_norm_drift < 1e-8
    assert abs(np.linalg.norm(traj.states[-1]) - 1.0) < 1e-10


def test_family_evolution_matches_propagator_path():
    params = ModelParams(chi=10.0, bz=1.2, bx=1.5, n_atoms=30)
    psi0 = _scs(30, 2.0, 0.5)
    bz_values = np.array([1.1, 1.2, 1.3])
    finals = evolve_family(params, psi0, 3, bz_values=bz_values, steps=400)
    for i, bz in enumerate(bz_values):
        prop = period_propagator(params.with_bz(bz), 400)
        ref = stroboscopic_evolve(prop, psi0, 3).states[-1]
        assert np.max(np.abs(finals[:, i] - ref)) < 1e-9


def test_family_evolution_broadcasts_chi_and_bz():
    params = ModelParams(chi=10.0, bz=1.2, bx=1.5, n_atoms=12)
    psi0 = _scs(12, 2.0, 0.5)
    finals = evolve_family(
        params, psi0, 2, bz_values=[1.0, 1.5], chi_values=[8.0, 12.0], steps=200)
    ref = evolve_family(
        params, psi0, 2, bz_values=[1.5], chi_values=[12.0], steps=200)
    assert np.max(np.abs(finals[:, 1] - ref[:, 0])) < 1e-12
    with pytest.raises(ValueError):
        evolve_family(params, psi0, 2)


def test_eigenstate_input_carries_only_phase_information():
    params = ModelParams(chi=0.0, bz=0.7, bx=0.0, n_atoms=50)
    psi0 = np.zeros(51, dtype=complex)
    psi0[0] = 1.0                                # stretched state, sz eigenvalue +J
    result = derivative_state(params, psi0, 2, epsilon=1e-5, steps=100)
    j, n, t = 25.0, 2, params.period
    np.testing.assert_allclose(
        result.dpsi, -1j * j * n * t * result.psi_f, rtol=1e-6, atol=1e-9)
    qfi = 4 * (np.vdot(result.dpsi, result.dpsi).real - abs(np.vdot(result.dpsi, result.psi_f)) ** 2)
    assert abs(qfi) < 1e-8


def test_rotation_derivative_reproduces_quadratic_information_growth():
    params = ModelParams(chi=0.0, bz=0.9, bx=0.0, n_atoms=50)
    psi0 = _scs(50, math.pi / 2, 0.0)
    result = derivative_state(params, psi0, 4, epsilon=1e-5)
    t = 4 * params.period
    qfi = 4 * (np.vdot(result.dpsi, result.dpsi).real - abs(np.vdot(result.dpsi, result.psi_f)) ** 2)
    assert abs(qfi - 50 * t**2) < 1e-3 * 50 * t**2
    assert result.richardson_ok is True


def test_derivative_consistent_under_epsilon_halving():
    params = ModelParams(chi=10.0, bz=math.pi / 2, bx=1.5, n_atoms=50)
    psi0 = _scs(50, 2.423, 1.126)

    def qfi_at(eps):
        r = derivative_state(params, psi0, 8, epsilon=eps, richardson=False)
        return 4 * (np.vdot(r.dpsi, r.dpsi).real - abs(np.vdot(r.dpsi, r.psi_f)) ** 2)

    full, half = qfi_at(1e-5), qfi_at(5e-6)
    assert abs(full - half) / max(full, half) < 1e-3


def test_derivative_modes_agree():
    params = ModelParams(chi=10.0, bz=1.0, bx=1.5, n_atoms=24)
    psi0 = _scs(24, 2.0, 1.0)
    direct = derivative_state(params, psi0, 3, steps=300, mode="direct")
    via_prop = derivative_state(params, psi0, 3, steps=300, mode="propagator")
    assert np.max(np.abs(direct.psi_f - via_prop.psi_f)) < 1e-9
    assert np.max(np.abs(direct.dpsi - via_prop.dpsi)) < 1e-4    # dpsi amplifies by 1/eps
    with pytest.raises(ValueError):
        derivative_state(params, psi0, 3, mode="adjoint")


def test_vanishing_epsilon_hits_float_noise_guard():
    params = ModelParams(chi=0.0, bz=0.5, bx=0.0, n_atoms=4)
    psi0 = _scs(4, 1.0, 0.0)
    with pytest.raises(NumericalError):
        derivative_state(params, psi0, 1, epsilon=1e-16, steps=50)


def test_qfi_stable_under_step_doubling():
    params = ModelParams(chi=10.0, bz=math.pi / 2, bx=1.5, n_atoms=50)
    psi0 = _scs(50, 2.423, 1.126)

    def qfi_at(steps):
        r = derivative_state(params, psi0, 16, steps=steps, richardson=False)
        return 4 * (np.vdot(r.dpsi, r.dpsi).real - abs(np.vdot(r.dpsi, r.psi_f)) ** 2)

    coarse, fine = qfi_at(1000), qfi_at(2000)
    assert abs(coarse - fine) / fine < 1e-3


def test_static_generator_closed_form():
    # J*|bz|*T < pi keeps every eigenphase on the principal branch
    params = ModelParams(chi=0.0, bz=0.8, bx=0.0, n_atoms=6)
    result = floquet_hamiltonian(period_propagator(params, 200))
    _, ops = build_spin_system(6)
    assert np.max(np.abs(result.matrix - 0.8 * ops.sz)) < 1e-9
    assert result.branch_cut_hits == 0


def test_identity_propagator_gives_zero_generator():
    params = ModelParams(chi=0.0, bz=0.0, bx=0.0, n_atoms=6)
    result = floquet_hamiltonian(period_propagator(params, 50))
    assert np.max(np.abs(result.matrix)) < 1e-12


def test_generator_round_trip():
    params = ModelParams(chi=10.0, bz=math.pi / 2, bx=1.5, n_atoms=6)
    prop = period_propagator(params, 1000)
    result = floquet_hamiltonian(prop)
    assert np.max(np.abs(result.matrix - result.matrix.conj().T)) < 1e-12
    back = scipy.linalg.expm(-1j * result.matrix * params.period)
    assert np.max(np.abs(back - prop.u)) < 1e-8


def test_branch_cut_eigenphases_are_pinned_and_counted():
    # bz*T = pi puts the outer sz eigenphases exactly on the cut
    params = ModelParams(chi=0.0, bz=math.pi, bx=0.0, n_atoms=2)
    result = floquet_hamiltonian(period_propagator(params, 50))
    assert result.branch_cut_hits == 2
    back = scipy.linalg.expm(-1j * result.matrix * params.period)
    assert np.max(np.abs(back - period_propagator(params, 50).u)) < 1e-8
