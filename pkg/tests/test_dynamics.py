import math

import numpy as np
import pytest
import scipy.linalg

from qrem.dynamics import (
    DEFAULT_GAMMA_MAX,
    Schedule,
    crossover_time,
    evolve,
    initial_state,
    step_grid,
    success_curve,
)
from qrem.errors import ConvergenceError, NormDriftError, ValidationError
from qrem.model import ModelParams, ground_state_energy, sample_energies
from qrem.spectral import HamiltonianView, dense_matrix


@pytest.fixture(scope="module")
def t8():
    return sample_energies(ModelParams(8, 0))


def dense_ground(table, gamma):
    vals, vecs = scipy.linalg.eigh(dense_matrix(HamiltonianView(table, gamma)))
    return vecs[:, 0]


def test_schedule_defaults():
    s = Schedule(10.0)
    assert s.gamma_max == pytest.approx(3 * math.sqrt(math.log(2)))
    assert s.gamma(0.0) == s.gamma_max and s.gamma(1.0) == 0.0
    assert s.gamma_at_time(5.0) == pytest.approx(0.5 * s.gamma_max)


@pytest.mark.parametrize(
    "kwargs",
    [dict(total_time=0.0), dict(total_time=1.0, gamma_max=-1.0), dict(total_time=1.0, profile="cubic"),
     dict(total_time=1.0, profile=lambda s: 1.0 + s)],
)
def test_schedule_validation(kwargs):
    with pytest.raises(ValidationError):
        Schedule(**kwargs)


def test_custom_profile_callable(t8):
    s = Schedule(5.0, 2.0, lambda x: math.cos(0.5 * math.pi * x))
    out = evolve(t8, s)
    assert 0 <= out.success_probability <= 1


def test_initial_state_matches_dense(t8):
    psi = initial_state(t8, DEFAULT_GAMMA_MAX)
    ref = dense_ground(t8, DEFAULT_GAMMA_MAX)
    assert abs(abs(np.vdot(ref, psi)) - 1) < 1e-12


def test_frozen_schedule_is_stationary(t8):
    ref = evolve(t8, Schedule(1e-9, profile="constant")).success_probability
    for tau in (1.0, 37.0, 300.0):
        out = evolve(t8, Schedule(tau, profile="constant"))
        assert abs(out.success_probability - ref) <= 1e-6
        assert abs(out.success_probability - out.initial_success) <= 1e-6


def test_frozen_schedule_conserves_energy_of_any_state(t8):
    rng = np.random.default_rng(3)
    psi0 = rng.standard_normal(t8.dim) + 1j * rng.standard_normal(t8.dim)
    psi0 /= np.linalg.norm(psi0)
    gamma = 0.8
    out, psi = evolve(t8, Schedule(50.0, gamma, "constant"), psi0=psi0, return_state=True)
    h = HamiltonianView(t8, gamma)
    e0 = np.vdot(psi0, h.matvec(psi0)).real
    e1 = np.vdot(psi, h.matvec(psi)).real
    assert abs(e1 - e0) <= 1e-9
    assert out.energy_initial == pytest.approx(e0, abs=1e-12)


def test_sudden_quench_matches_overlap(t8):
    ground, _ = ground_state_energy(t8)
    overlap = abs(dense_ground(t8, DEFAULT_GAMMA_MAX)[ground.index]) ** 2
    out = evolve(t8, Schedule(1e-9))
    assert abs(out.success_probability - overlap) <= 1e-8


def test_monotone_and_adiabatic_n8(t8):
    taus = [1, 10, 100, 1000]
    probs = [o.success_probability for o in success_curve(t8, taus).outcomes]
    assert all(b >= a for a, b in zip(probs, probs[1:]))
    assert probs[-1] > 0.99


def test_norm_is_preserved(t8):
    for tau in (0.5, 20.0, 400.0):
        out = evolve(t8, Schedule(tau))
        assert out.norm_error <= 1e-8
        assert 0 <= out.success_probability <= 1


def test_unnormalised_start_triggers_drift_error(t8):
    psi0 = 2 * initial_state(t8, DEFAULT_GAMMA_MAX)
    with pytest.raises(NormDriftError) as info:
        evolve(t8, Schedule(1.0), psi0=psi0)
    assert info.value.diagnostics["norm_error"] == pytest.approx(1.0, abs=1e-9)


def test_oversized_steps_rejected(t8):
    with pytest.raises(ConvergenceError):
        evolve(t8, Schedule(50.0), dt_control=200.0, max_krylov=6)
    with pytest.raises(ValidationError):
        evolve(t8, Schedule(1.0), dt_control=0.0)


def test_size_cap():
    with pytest.raises(ValidationError):
        evolve(sample_energies(ModelParams(15, 0)), Schedule(1.0))


def test_step_grid_respects_controls(t8):
    s = Schedule(2.0)
    gammas, dts = step_grid(t8, s, dt_control=0.5)
    norm = np.abs(t8.energies).max() + s.gamma_max * t8.n
    assert np.all(norm * dts <= 0.5 + 1e-12)
    assert dts.sum() == pytest.approx(2.0, rel=1e-12)
    assert np.all(np.diff(gammas) < 0)
    # finer steps around the predicted crossing
    _, e0 = ground_state_energy(t8)
    gc = abs(e0) / t8.n
    near = np.abs(gammas - gc) < 0.1 * gc
    assert dts[near].max() < dts[~near].max()


def test_success_curve_single_and_duplicates(t8):
    assert len(success_curve(t8, [5.0]).outcomes) == 1
    c = success_curve(t8, [3.0, 3.0])
    assert c.outcomes[0] == c.outcomes[1]


def test_success_curve_input_checks(t8):
    for bad in ([], [2.0, 1.0], [0.0, 1.0]):
        with pytest.raises(ValidationError):
            success_curve(t8, bad)


def test_crossover_interpolation():
    assert crossover_time([1, 10, 100], [0.1, 0.3, 0.7]) == pytest.approx(math.sqrt(10) * 10)
    assert crossover_time([1, 10], [0.6, 0.9]) == 1
    assert crossover_time([1, 10], [0.1, 0.2]) == math.inf
