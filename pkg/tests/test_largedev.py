"""Tilted generators, activity and the Doob auxiliary dynamics."""

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from btcsim import (
    CollectiveSpinSystem,
    activity,
    build_tilted,
    check_convexity,
    doob_homodyne_trajectory,
    doob_transform,
    homodyne_trajectory,
    leading_eigenpair,
    leading_eigenpair_dense,
    theta_scan,
)
from btcsim.mastereq import liouvillian_matrix


def _random_density_matrix(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@pytest.mark.parametrize("s", [0.0, 0.3, -0.4])
def test_build_tilted_matches_dense_reference(s):
    system = CollectiveSpinSystem(5, omega=1.2)
    rho = _random_density_matrix(system.dim, seed=1)
    jx, jm, jp = system.jx, system.jminus, system.jplus
    g = system.kappa / system.N
    amp = np.sqrt(2 * system.kappa / system.N)
    want = (-1j * system.omega * (jx @ rho - rho @ jx)
            + g * (2 * jm @ rho @ jp - jp @ jm @ rho - rho @ jp @ jm)
            - s * amp * (jm @ rho + rho @ jp) + 0.5 * s**2 * rho)
    got = build_tilted(system, s) @ rho.reshape(-1, order="F")
    assert_allclose(got.reshape((system.dim, system.dim), order="F"),
                    want, atol=1e-12)


def test_tilted_at_zero_bias_is_the_liouvillian():
    system = CollectiveSpinSystem(7, omega=0.9)
    diff = build_tilted(system, 0.0) - liouvillian_matrix(system)
    assert abs(diff).max() == 0.0


@pytest.mark.parametrize("s", [0.0, 0.2, -0.2])
def test_sparse_eigenpair_matches_dense(s):
    system = CollectiveSpinSystem(8, omega=1.5)
    mat = build_tilted(system, s)
    sparse = leading_eigenpair(mat, bias=s)
    dense = leading_eigenpair_dense(mat, bias=s)
    assert sparse.scgf == pytest.approx(dense.scgf, abs=1e-10)
    assert_allclose(sparse.right_op, dense.right_op, atol=1e-8)
    assert_allclose(sparse.left_op, dense.left_op, atol=1e-7)
    assert sparse.residual < 1e-8
    # normalization conventions
    assert np.trace(sparse.right_op) == pytest.approx(1.0, abs=1e-12)
    assert np.real(np.trace(sparse.left_op @ sparse.right_op)) == \
        pytest.approx(1.0, abs=1e-10)


def test_scgf_vanishes_at_zero_bias():
    for ratio in (0.5, 1.5):
        system = CollectiveSpinSystem(20, omega=ratio)
        sol = leading_eigenpair(build_tilted(system, 0.0))
        assert abs(sol.scgf) < 1e-10


def test_activity_zero_bias_above_threshold():
    # the stationary x-quadrature signal has no mean above threshold
    for n in (10, 20):
        system = CollectiveSpinSystem(n, omega=1.5)
        sol = leading_eigenpair(build_tilted(system, 0.0))
        k0 = activity(sol, system)
        assert abs(k0) < 1e-6
        assert sol.activity == k0
        assert abs(sol.meta["k_fd"] - k0) < 1e-4


def test_activity_two_routes_agree_off_zero():
    system = CollectiveSpinSystem(10, omega=1.5)
    for s in (0.15, -0.25):
        sol = leading_eigenpair(build_tilted(system, s), bias=s)
        k = activity(sol, system)  # raises if the routes disagree
        assert np.isfinite(k)


def test_activity_needs_left_eigenmatrix():
    system = CollectiveSpinSystem(6, omega=1.5)
    sol = leading_eigenpair(build_tilted(system, 0.1), bias=0.1,
                            want_left=False)
    with pytest.raises(ValueError):
        activity(sol, system)


def test_theta_scan_convex_and_converged():
    s_grid = np.linspace(-0.4, 0.4, 9)
    rows = theta_scan(12, s_grid, [1.5], compute_k=False)
    assert len(rows) == len(s_grid)
    assert all(r["converged"] for r in rows)
    thetas = np.array([r["theta"] for r in rows])
    assert check_convexity(s_grid, thetas) > -1e-8
    # theta(0) = 0 sits in the scan
    assert abs(thetas[4]) < 1e-9


def test_check_convexity_oracle_and_validation():
    s = np.linspace(-1, 1, 11)
    h = s[1] - s[0]
    assert check_convexity(s, 0.5 * s**2) == pytest.approx(h**2, abs=1e-12)
    assert check_convexity(s, -(s**2)) == pytest.approx(-2 * h**2, abs=1e-12)
    with pytest.raises(ValueError):
        check_convexity(np.array([0.0, 0.1, 0.3]), np.zeros(3))


def test_doob_transform_identity_at_zero_bias():
    system = CollectiveSpinSystem(9, omega=1.3)
    sol = leading_eigenpair(build_tilted(system, 0.0))
    doob = doob_transform(sol, system)
    assert doob.tp_residual < 1e-8
    assert_allclose(doob.h_eff, system.omega * system.jx, atol=1e-7)
    assert_allclose(doob.jminus_t, system.jminus, atol=1e-7)


@pytest.mark.parametrize("s", [0.3, -0.3])
def test_doob_transform_trace_preserving(s):
    system = CollectiveSpinSystem(12, omega=1.5)
    sol = leading_eigenpair(build_tilted(system, s), bias=s)
    doob = doob_transform(sol, system)
    assert doob.tp_residual < 1e-8
    assert_allclose(doob.h_eff, doob.h_eff.conj().T, atol=1e-12)
    # weight solves W^2 = left eigenmatrix (up to the eigenvalue floor)
    assert_allclose(doob.weight @ doob.weight, sol.left_op, atol=1e-8)


def test_doob_trajectory_reduces_to_homodyne_at_zero_bias():
    system = CollectiveSpinSystem(6, omega=1.5)
    sol = leading_eigenpair(build_tilted(system, 0.0))
    doob = doob_transform(sol, system)
    a = doob_homodyne_trajectory(doob, t_final=2.0, dt=1e-4, seed=8)
    b = homodyne_trajectory(system, t_final=2.0, dt=1e-4, seed=8)
    assert_allclose(a.magnetizations, b.magnetizations, atol=1e-9)
    assert_allclose(a.raw_current, b.raw_current, atol=1e-9)
    assert_allclose(a.xtilde, a.magnetizations[:, 0], atol=1e-9)


def test_doob_trajectory_ergodic_mean_matches_auxiliary_stationary_state():
    # long-time average of the transformed quadrature equals its
    # expectation in the stationary state of the Doob generator
    system = CollectiveSpinSystem(8, omega=1.5)
    s = -0.2
    sol = leading_eigenpair(build_tilted(system, s), bias=s)
    doob = doob_transform(sol, system)
    jm_t = doob.jminus_t
    g = system.kappa / system.N
    dim = system.dim
    eye = np.eye(dim)
    lind = (-1j * (np.kron(eye, doob.h_eff) - np.kron(doob.h_eff.T, eye))
            + g * (2 * np.kron(jm_t.conj(), jm_t)
                   - np.kron(eye, jm_t.conj().T @ jm_t)
                   - np.kron((jm_t.conj().T @ jm_t).T, eye)))
    vals, vecs = scipy.linalg.eig(lind)
    rho = vecs[:, np.argmin(np.abs(vals))].reshape((dim, dim), order="F")
    rho = rho / np.trace(rho)
    want = np.real(np.trace((jm_t + jm_t.conj().T) @ rho)) / system.N
    rec = doob_homodyne_trajectory(doob, t_final=400.0, dt=1e-4, seed=1)
    got = rec.xtilde[len(rec.xtilde) // 5:].mean()
    assert got == pytest.approx(want, abs=0.05)
