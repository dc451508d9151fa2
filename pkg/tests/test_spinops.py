"""Operator algebra, coherent states and magnetization readout."""

import math

import numpy as np
import pytest
import scipy.linalg
from numpy.testing import assert_allclose

from btcsim import CollectiveSpinSystem, magnetization, spin_coherent_state
from btcsim.spinops import build_collective_ops


def _symmetric_isometry(n):
    """Columns k = 0..n: normalized equal-weight n-qubit states with k
    spins lowered, ordered to match the collective basis |J, J - k>."""
    v = np.zeros((2**n, n + 1))
    for idx in range(2**n):
        v[idx, bin(idx).count("1")] = 1.0
    v /= np.sqrt(v.sum(axis=0))
    return v


def _full_space_ops(n):
    """Collective Jm and Jz assembled from single-site operators."""
    dim = 2**n
    jm = np.zeros((dim, dim))
    jz = np.zeros((dim, dim))
    for idx in range(dim):
        k = bin(idx).count("1")
        jz[idx, idx] = 0.5 * (n - 2 * k)
        for site in range(n):
            if not idx & (1 << site):
                jm[idx | (1 << site), idx] += 1.0
    return jm, jz


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_ladder_matches_tensor_product_restriction(n):
    # independent route: restrict sum_i sigma^-_i to the symmetric sector
    system = CollectiveSpinSystem(n, omega=0.7)
    v = _symmetric_isometry(n)
    jm_full, jz_full = _full_space_ops(n)
    assert_allclose(v.T @ jm_full @ v, system.jminus, atol=1e-13)
    assert_allclose(v.T @ jz_full @ v, system.jz.real, atol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 5, 17])
def test_su2_commutators_and_casimir(n):
    system = CollectiveSpinSystem(n, omega=1.0)
    jx, jy, jz = system.jx, system.jy, system.jz
    assert_allclose(jx @ jy - jy @ jx, 1j * jz, atol=1e-12)
    assert_allclose(jy @ jz - jz @ jy, 1j * jx, atol=1e-12)
    assert_allclose(jz @ jx - jx @ jz, 1j * jy, atol=1e-12)
    casimir = jx @ jx + jy @ jy + jz @ jz
    j = system.j
    assert_allclose(casimir, j * (j + 1) * np.eye(n + 1), atol=1e-11)


def test_ladder_and_diagonals_consistent():
    system = CollectiveSpinSystem(6, omega=1.0)
    jp, jm = system.jplus, system.jminus
    assert_allclose(jp, jm.T.conj(), atol=0)
    assert_allclose(np.diag(jp @ jm), system.jpjm_diag, atol=1e-12)
    assert_allclose(np.diag(system.jz), system.jz_diag, atol=0)
    # lowest-weight state is dark
    assert system.jpjm_diag[-1] == 0.0


def test_spin_coherent_matches_exponential_rotation():
    system = CollectiveSpinSystem(7, omega=1.0)
    e0 = np.zeros(system.dim, dtype=complex)
    e0[0] = 1.0
    for theta, phi in [(0.3, 0.0), (1.1, 2.0), (np.pi / 2, np.pi / 2)]:
        gen = theta * (np.sin(phi) * system.jx - np.cos(phi) * system.jy)
        expected = scipy.linalg.expm(1j * gen) @ e0
        psi = spin_coherent_state(system, theta, phi)
        assert_allclose(psi, expected, atol=1e-10)


def test_spin_coherent_magnetization_direction():
    system = CollectiveSpinSystem(12, omega=1.0)
    for theta, phi in [(0.0, 0.0), (0.7, 1.3), (np.pi / 2, 0.0),
                       (np.pi / 2, np.pi / 2), (2.5, 4.0)]:
        psi = spin_coherent_state(system, theta, phi)
        want = (math.sin(theta) * math.cos(phi),
                math.sin(theta) * math.sin(phi),
                math.cos(theta))
        assert_allclose(magnetization(system, psi), want, atol=1e-12)


def test_spin_coherent_rejects_out_of_range_angles():
    system = CollectiveSpinSystem(3, omega=1.0)
    with pytest.raises(ValueError):
        spin_coherent_state(system, -0.1, 0.0)
    with pytest.raises(ValueError):
        spin_coherent_state(system, 0.5, 7.0)


def test_magnetization_vector_and_density_matrix_agree():
    system = CollectiveSpinSystem(9, omega=1.0)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=system.dim) + 1j * rng.normal(size=system.dim)
    psi /= np.linalg.norm(psi)
    m_vec = magnetization(system, psi)
    m_dm = magnetization(system, np.outer(psi, psi.conj()))
    assert_allclose(m_vec, m_dm, atol=1e-12)
    # direct expectation values as reference
    ops = build_collective_ops(system)
    want = [np.vdot(psi, ops[k] @ psi).real / system.j for k in ("jx", "jy", "jz")]
    assert_allclose(m_vec, want, atol=1e-12)


def test_magnetization_rejects_bad_input():
    system = CollectiveSpinSystem(4, omega=1.0)
    with pytest.raises(ValueError):
        magnetization(system, np.ones(system.dim))  # not normalized
    with pytest.raises(ValueError):
        magnetization(system, np.eye(system.dim))  # trace N+1
    with pytest.raises(ValueError):
        magnetization(system, np.ones(7))


def test_constructor_validation():
    with pytest.raises(ValueError):
        CollectiveSpinSystem(0, omega=1.0)
    with pytest.raises(ValueError):
        CollectiveSpinSystem(2.5, omega=1.0)
    with pytest.raises(ValueError):
        CollectiveSpinSystem(3, omega=-1.0)
    with pytest.raises(ValueError):
        CollectiveSpinSystem(3, omega=1.0, kappa=0.0)
