"""Lindblad master equation for the driven collective spin.

The generator is

    L(rho) = -i omega [Jx, rho]
             + (kappa/N) (2 Jm rho Jp - Jp Jm rho - rho Jp Jm)

acting on the (N+1)-dimensional symmetric sector.  This module provides
the dense action, a sparse matrix representation on column-stacked
density matrices, deterministic time evolution, the stationary state,
and diagnostics of how close the stationary state is to the dark
coherent state of the lowering operator Jm + i omega N / (2 kappa).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .spinops import CollectiveSpinSystem
from .util import NumericsError

__all__ = [
    "liouvillian_apply",
    "liouvillian_matrix",
    "evolve_me",
    "stationary_state",
    "StationaryDiagnostics",
    "diagnostics",
    "stationary_scan",
    "trace_distance",
]

RESIDUAL_TOL = 1e-9
DEGENERACY_TOL = 1e-10
POSITIVITY_ABORT = 1e-6


def liouvillian_apply(system: CollectiveSpinSystem, rho: np.ndarray) -> np.ndarray:
    """Dense action of the Lindblad generator on a matrix."""
    if rho.shape != (system.dim, system.dim):
        raise ValueError(
            f"rho must have shape ({system.dim}, {system.dim}), got {rho.shape}"
        )
    jx, jm, jp = system.jx, system.jminus, system.jplus
    gamma = system.kappa / system.N
    jpjm = system.jpjm_diag
    out = -1j * system.omega * (jx @ rho - rho @ jx)
    out += gamma * (2.0 * jm @ rho @ jp - jpjm[:, None] * rho - rho * jpjm[None, :])
    return out


def _sparse_ops(system: CollectiveSpinSystem):
    c = system.ladder
    jm = sp.diags(c, -1, format="csr")
    jx = 0.5 * (jm + jm.T)
    jpjm = sp.diags(system.jpjm_diag, 0, format="csr")
    return jm, jx, jpjm


def liouvillian_matrix(system: CollectiveSpinSystem) -> sp.csr_matrix:
    """Sparse matrix of the generator on column-stacked density matrices.

    Column stacking means vec(A X B) = kron(B.T, A) vec(X); all collective
    operators are real, so transposes swap raising and lowering.
    """
    jm, jx, jpjm = _sparse_ops(system)
    eye = sp.identity(system.dim, format="csr")
    gamma = system.kappa / system.N
    lind = -1j * system.omega * (sp.kron(eye, jx) - sp.kron(jx, eye))
    lind = lind + gamma * (
        2.0 * sp.kron(jm, jm) - sp.kron(eye, jpjm) - sp.kron(jpjm, eye)
    )
    return lind.tocsr()


def _check_density_matrix(rho: np.ndarray, where: str) -> None:
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > 1e-8:
        raise NumericsError(f"{where}: hermiticity defect {herm:.2e}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-8:
        raise NumericsError(f"{where}: trace defect {abs(tr - 1.0):.2e}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if min_eig < -POSITIVITY_ABORT:
        raise NumericsError(
            f"{where}: negative eigenvalue {min_eig:.2e}; reduce dt"
        )


def evolve_me(
    system: CollectiveSpinSystem,
    rho0: np.ndarray,
    t_final: float,
    dt: float = 1e-3,
    record_dt: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the master equation with fixed-step RK4.

    Parameters
    ----------
    rho0 : ndarray
        Initial density matrix (Hermitian, unit trace).
    t_final : float
        Integration horizon.
    dt : float
        Step size; dt * kappa <= 1e-2 required.
    record_dt : float, optional
        Sampling interval for the returned path (defaults to 10 dt,
        rounded to a whole number of steps).

    Returns
    -------
    times : ndarray, shape (n_rec + 1,)
    path : ndarray, shape (n_rec + 1, dim, dim)
        Density matrices at the sample times, starting with rho0.
        Hermiticity, trace and positivity are validated at every sample.
    """
    if dt * system.kappa > 1e-2 + 1e-12:
        raise ValueError(f"dt kappa = {dt * system.kappa} exceeds 1e-2")
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    rho0 = np.asarray(rho0, dtype=complex)
    _check_density_matrix(rho0, "rho0")
    if record_dt is None:
        record_dt = 10 * dt
    stride = max(1, round(record_dt / dt))
    n_steps = max(1, round(t_final / dt))
    n_rec = n_steps // stride
    times = np.arange(n_rec + 1) * (stride * dt)
    path = np.empty((n_rec + 1, system.dim, system.dim), dtype=complex)
    path[0] = rho0
    rho = rho0.copy()
    r = 1
    for i in range(n_steps):
        k1 = liouvillian_apply(system, rho)
        k2 = liouvillian_apply(system, rho + 0.5 * dt * k1)
        k3 = liouvillian_apply(system, rho + 0.5 * dt * k2)
        k4 = liouvillian_apply(system, rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % stride == 0 and r <= n_rec:
            _check_density_matrix(rho, f"t = {(i + 1) * dt:g}")
            path[r] = rho
            r += 1
    return times, path


def stationary_state(
    system: CollectiveSpinSystem,
    v0: np.ndarray | None = None,
    tol: float = 0.0,
) -> np.ndarray:
    """Stationary density matrix from the Liouvillian null space.

    Solved with shift-inverted Arnoldi iteration (two eigenvalues nearest
    a small shift off zero); the run is deterministic because the start
    vector is fixed.  The result is Hermitized and trace-normalized, and
    the residual ||L rho||_inf <= 1e-9 kappa is enforced.  A second
    eigenvalue within 1e-10 kappa of zero raises (degenerate null space).
    """
    lind = liouvillian_matrix(system).tocsc()
    dim = system.dim
    if v0 is None:
        v0 = np.identity(dim, dtype=complex).reshape(-1, order="F") / dim
    vals, vecs = spla.eigs(
        lind, k=2, sigma=1e-9 * system.kappa, which="LM", v0=v0, tol=tol
    )
    order = np.argsort(np.abs(vals))
    gap = abs(vals[order[1]])
    if gap < DEGENERACY_TOL * system.kappa:
        raise NumericsError(
            f"stationary state is degenerate: |lambda_2| = {gap:.2e}"
        )
    rho = vecs[:, order[0]].reshape((dim, dim), order="F")
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    residual = np.max(np.abs(lind @ rho.reshape(-1, order="F")))
    if residual > RESIDUAL_TOL * system.kappa:
        raise NumericsError(
            f"stationary-state residual {residual:.2e} exceeds "
            f"{RESIDUAL_TOL * system.kappa:.2e}"
        )
    min_eig = float(np.linalg.eigvalsh(rho).min())
    if min_eig < -POSITIVITY_ABORT:
        raise NumericsError(f"stationary state not positive: {min_eig:.2e}")
    return rho


@dataclass
class StationaryDiagnostics:
    """How coherent the stationary state is.

    rmax
        max_ij |(Jm rho - <Jm> rho)_ij|; zero iff rho is a pure eigenstate
        of the lowering operator, i.e. an exact coherent dark state.
    purity
        Tr[rho^2].
    beta
        Amplitude omega N / (2 kappa) of the ideal dark state
        Jm |beta> = -i beta |beta>.
    """

    rmax: float
    purity: float
    beta: float


def diagnostics(
    system: CollectiveSpinSystem, rho_ss: np.ndarray
) -> StationaryDiagnostics:
    jm = system.jminus
    expect = np.trace(jm @ rho_ss)
    rmax = float(np.max(np.abs(jm @ rho_ss - expect * rho_ss)))
    purity = float(np.real(np.trace(rho_ss @ rho_ss)))
    beta = system.omega * system.N / (2.0 * system.kappa)
    return StationaryDiagnostics(rmax=rmax, purity=purity, beta=beta)


def stationary_scan(
    n_atoms: int,
    omega_over_kappa: np.ndarray,
    kappa: float = 1.0,
) -> list[dict]:
    """Stationary magnetization and diagnostics over a drive scan.

    Consecutive solves reuse the previous stationary state as the Arnoldi
    start vector.  Returns one row dict per drive value with keys
    (n_atoms, omega_over_kappa, m_x, m_y, m_z, purity, rmax, beta).
    """
    from .spinops import magnetization

    rows = []
    v0 = None
    for ratio in np.asarray(omega_over_kappa, dtype=float):
        system = CollectiveSpinSystem(n_atoms, ratio * kappa, kappa)
        rho = stationary_state(system, v0=v0)
        v0 = rho.reshape(-1, order="F")
        mags = magnetization(system, rho)
        diag = diagnostics(system, rho)
        rows.append(
            {
                "n_atoms": n_atoms,
                "omega_over_kappa": ratio,
                "m_x": mags[0],
                "m_y": mags[1],
                "m_z": mags[2],
                "purity": diag.purity,
                "rmax": diag.rmax,
                "beta": diag.beta,
            }
        )
    return rows


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """T(rho, sigma) = (1/2) ||rho - sigma||_1 for Hermitian arguments."""
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
