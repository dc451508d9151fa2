"""Quantum-jump and homodyne trajectories and their derived signals."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from btcsim import (
    CollectiveSpinSystem,
    NumericsError,
    bin_counts,
    default_jump_dt,
    ensemble_states,
    evolve_me,
    homodyne_trajectory,
    jump_trajectory,
    magnetization,
    smooth_current,
    spin_coherent_state,
)


def test_undriven_cascade_emits_exactly_n_photons():
    # with no drive the fully inverted state can only step down the
    # ladder, one photon per level, and ends in the dark state
    system = CollectiveSpinSystem(6, omega=0.0)
    psi0 = np.zeros(system.dim, dtype=complex)
    psi0[0] = 1.0
    rec = jump_trajectory(system, psi0=psi0, t_final=80.0, seed=4)
    assert len(rec.jump_times) == system.N
    assert np.all(np.diff(rec.jump_times) > 0)
    assert rec.magnetizations[-1] == pytest.approx([0, 0, -1], abs=1e-9)


def test_jump_rate_matches_master_equation():
    # ensemble mean photon count equals the integrated emission rate
    # 2 (kappa/N) <JpJm> of the deterministic master equation
    system = CollectiveSpinSystem(8, omega=1.5)
    t_final = 20.0
    times, path = evolve_me(system, _coherent_rho(system), t_final,
                            dt=1e-3, record_dt=0.01)
    rate = [2 * system.kappa / system.N * np.real(
        np.trace(np.diag(system.jpjm_diag) @ rho)) for rho in path]
    expected = np.trapezoid(rate, times)
    counts = []
    for seed in range(200):
        rec = jump_trajectory(system, t_final=t_final, seed=seed)
        counts.append(len(rec.jump_times))
    counts = np.asarray(counts, dtype=float)
    se = counts.std(ddof=1) / np.sqrt(len(counts))
    assert abs(counts.mean() - expected) < 4 * se


def _coherent_rho(system):
    psi = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    return np.outer(psi, psi.conj())


def test_homodyne_ensemble_mean_matches_master_equation():
    system = CollectiveSpinSystem(6, omega=1.5)
    t_final = 4.0
    times, path = evolve_me(system, _coherent_rho(system), t_final,
                            dt=1e-3, record_dt=t_final)
    want = magnetization(system, path[-1])
    mags = []
    for seed in range(300):
        rec = homodyne_trajectory(system, t_final=t_final, dt=1e-4,
                                  seed=seed, record_current=False)
        mags.append(rec.magnetizations[-1])
    mags = np.asarray(mags)
    se = mags.std(axis=0, ddof=1) / np.sqrt(len(mags))
    assert np.all(np.abs(mags.mean(axis=0) - want) < 4 * se)


def test_trajectory_record_layout_and_determinism():
    system = CollectiveSpinSystem(10, omega=1.5)
    a = jump_trajectory(system, t_final=5.0, seed=3)
    b = jump_trajectory(system, t_final=5.0, seed=3)
    assert_allclose(a.magnetizations, b.magnetizations, atol=0)
    assert_allclose(a.jump_times, b.jump_times, atol=0)
    assert a.times[0] == 0.0
    assert len(a.times) == len(a.magnetizations) == 501
    psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    assert_allclose(a.magnetizations[0], magnetization(system, psi0),
                    atol=1e-12)
    c = homodyne_trajectory(system, t_final=2.0, seed=3)
    assert len(c.raw_current) == round(2.0 / c.params["dt"])
    assert c.current_dt == c.params["dt"]


def test_jump_probability_guard_trips_on_coarse_step():
    system = CollectiveSpinSystem(100, omega=1.5)
    with pytest.raises(NumericsError):
        jump_trajectory(system, t_final=1.0, dt=5e-3)


def test_homodyne_norm_guard_trips_on_coarse_step():
    system = CollectiveSpinSystem(30, omega=1.5)
    with pytest.raises(NumericsError):
        homodyne_trajectory(system, t_final=50.0, dt=5e-2)


def test_default_jump_dt_keeps_probability_small():
    for n in (10, 100, 1000):
        system = CollectiveSpinSystem(n, omega=1.5)
        dt = default_jump_dt(system)
        # worst case <JpJm> <= N(N/2 + 1)/2 on the equator
        p_max = 2 * system.kappa / n * n * (n / 2 + 1) / 2 * dt
        assert p_max <= 0.1 * (1 + 2 / n) + 1e-12


def test_bin_counts_tumbling_hand_example():
    jt = np.array([0.1, 0.2, 0.9, 1.5, 1.6, 1.7, 2.95])
    binned = bin_counts(jt, t_final=3.0, window=1.0, mode="tumbling")
    assert_allclose(binned.values, [3, 3, 1])
    assert_allclose(binned.times, [0.5, 1.5, 2.5])
    assert np.sum(binned.values) == len(jt)


def test_bin_counts_sliding_hand_example():
    jt = np.array([1.0, 1.2, 3.0])
    binned = bin_counts(jt, t_final=4.0, window=2.0, mode="sliding",
                        grid_dt=1.0)
    # centers 1, 2, 3 with windows [0,2), [1,3), [2,4)
    assert_allclose(binned.times, [1.0, 2.0, 3.0])
    assert_allclose(binned.values, [2, 2, 1])


def test_bin_counts_validation():
    with pytest.raises(ValueError):
        bin_counts(np.array([2.0, 1.0]), t_final=3.0)
    with pytest.raises(ValueError):
        bin_counts(np.array([1.0]), t_final=0.2, window=0.5)
    with pytest.raises(ValueError):
        bin_counts(np.array([1.0]), t_final=2.0, mode="hopping")


def test_smooth_current_constant_and_shot_noise():
    dt = 1e-3
    n_atoms = 40
    n = 200_000
    const = np.full(n, 2.0)
    sm = smooth_current(const, dt, n_atoms, window=0.5)
    assert_allclose(sm.values, 2.0 / np.sqrt(2 * n_atoms), atol=1e-12)
    rng = np.random.default_rng(11)
    noise = rng.normal(size=n) / np.sqrt(dt)  # dW/dt samples
    sm = smooth_current(noise, dt, n_atoms, window=0.5)
    var = sm.values[1000:-1000].var()
    want = 1.0 / (2 * n_atoms * 0.5)
    # window-correlated samples leave ~400 independent blocks here
    assert abs(var - want) < 0.2 * want
    with pytest.raises(ValueError):
        smooth_current(const, dt, n_atoms, window=5 * dt)


def test_ensemble_states_shapes_and_worker_independence():
    system = CollectiveSpinSystem(5, omega=1.5)
    checkpoints = np.array([0.5, 1.0])
    a = ensemble_states(system, "jump", checkpoints, n_traj=6, master_seed=2,
                        workers=1)
    b = ensemble_states(system, "jump", checkpoints, n_traj=6, master_seed=2,
                        workers=3)
    assert a.shape == (6, 2, system.dim)
    assert_allclose(a, b, atol=0)
    assert_allclose(np.linalg.norm(a, axis=2), 1.0, atol=1e-9)
    c = ensemble_states(system, "homodyne", checkpoints, n_traj=4,
                        master_seed=2, dt=1e-3)
    assert c.shape == (4, 2, system.dim)
    assert_allclose(np.linalg.norm(c, axis=2), 1.0, atol=1e-9)


def test_ensemble_states_validation():
    system = CollectiveSpinSystem(5, omega=1.5)
    with pytest.raises(ValueError):
        ensemble_states(system, "diffusive", np.array([1.0]), 2)
    with pytest.raises(ValueError):
        ensemble_states(system, "jump", np.array([1.0, 0.5]), 2)
    with pytest.raises(ValueError):
        ensemble_states(system, "jump", np.array([1.00037]), 2, dt=1e-3)
