"""Collective spin operators, spin-coherent states and magnetization.

N two-level atoms restricted to the permutation-symmetric sector form a
single spin-J multiplet with J = N/2, so every operator acts on an
(N+1)-dimensional space.  Basis ordering is highest weight first: index
k = 0..N labels |J, m = J - k>, which puts the fully inverted state
|J, J> at index 0 and makes the lowering operator strictly
sub-diagonal.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CollectiveSpinSystem",
    "build_collective_ops",
    "spin_coherent_state",
    "magnetization",
]

NORM_TOL = 1e-6


class CollectiveSpinSystem:
    """Driven collective spin with collective decay.

    The model is a coherent drive of strength ``omega`` along x together
    with collective lowering at rate ``kappa/N`` per the master equation
    ``drho/dt = -i omega [Jx, rho]
    + (kappa/N) (2 Jm rho Jp - Jp Jm rho - rho Jp Jm)``.

    Parameters
    ----------
    n_atoms : int
        Number of atoms N (>= 1).  The Hilbert space dimension is N + 1.
    omega : float
        Drive amplitude (>= 0).
    kappa : float
        Collective decay rate scale (> 0).  All rates and times are
        naturally expressed in units of kappa.

    Attributes
    ----------
    N, omega, kappa : as above.
    dim : int
        Hilbert space dimension N + 1.
    j : float
        Total spin J = N/2.
    ladder : ndarray, shape (N,)
        Sub-diagonal matrix elements c_k = <J, m_k - 1|Jm|J, m_k> with
        m_k = J - k, i.e. ``Jm[k+1, k] = ladder[k]``.
    jz_diag : ndarray, shape (N + 1,)
        Diagonal of Jz, J - k.
    jpjm_diag : ndarray, shape (N + 1,)
        Diagonal of Jp Jm, ladder[k]**2 padded with a trailing zero
        (the lowest-weight state is dark).
    """

    def __init__(self, n_atoms: int, omega: float, kappa: float = 1.0):
        if int(n_atoms) != n_atoms or n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {n_atoms!r}")
        if omega < 0:
            raise ValueError(f"omega must be non-negative, got {omega}")
        if kappa <= 0:
            raise ValueError(f"kappa must be positive, got {kappa}")
        self.N = int(n_atoms)
        self.omega = float(omega)
        self.kappa = float(kappa)
        self.dim = self.N + 1
        self.j = self.N / 2.0

        m = self.j - np.arange(self.dim)
        # c_k = sqrt(J(J+1) - m_k (m_k - 1)) for the step m_k -> m_k - 1
        self.ladder = np.sqrt(self.j * (self.j + 1.0) - m[:-1] * (m[:-1] - 1.0))
        self.jz_diag = m
        self.jpjm_diag = np.concatenate([self.ladder**2, [0.0]])
        for arr in (self.ladder, self.jz_diag, self.jpjm_diag):
            arr.setflags(write=False)
        self._ops: dict[str, np.ndarray] | None = None

    def __repr__(self) -> str:
        return (
            f"CollectiveSpinSystem(n_atoms={self.N}, omega={self.omega}, "
            f"kappa={self.kappa})"
        )

    def _dense_ops(self) -> dict[str, np.ndarray]:
        if self._ops is None:
            dim = self.dim
            jm = np.zeros((dim, dim))
            jm[np.arange(1, dim), np.arange(dim - 1)] = self.ladder
            jp = jm.T.copy()
            jx = 0.5 * (jp + jm)
            jy = 0.5j * (jm - jp)
            jz = np.diag(self.jz_diag)
            ops = {"jx": jx, "jy": jy, "jz": jz, "jplus": jp, "jminus": jm}
            for op in ops.values():
                op.setflags(write=False)
            self._ops = ops
        return self._ops

    @property
    def jx(self) -> np.ndarray:
        return self._dense_ops()["jx"]

    @property
    def jy(self) -> np.ndarray:
        return self._dense_ops()["jy"]

    @property
    def jz(self) -> np.ndarray:
        return self._dense_ops()["jz"]

    @property
    def jplus(self) -> np.ndarray:
        return self._dense_ops()["jplus"]

    @property
    def jminus(self) -> np.ndarray:
        return self._dense_ops()["jminus"]


def build_collective_ops(system: CollectiveSpinSystem) -> dict[str, np.ndarray]:
    """Return the dense collective operators {jx, jy, jz, jplus, jminus}.

    The arrays are cached on the system and marked read-only, so they can
    be shared freely across threads.
    """
    return dict(system._dense_ops())


def spin_coherent_state(
    system: CollectiveSpinSystem, theta: float, phi: float
) -> np.ndarray:
    """Spin-coherent state exp[i theta (Jx sin phi - Jy cos phi)] |J, J>.

    Parameters
    ----------
    theta : float
        Polar angle in [0, pi].  theta = 0 returns |J, J> itself.
    phi : float
        Azimuthal angle in [0, 2 pi].

    Returns
    -------
    ndarray, complex, shape (dim,)
        Normalized state vector.  Its magnetization is
        (sin theta cos phi, sin theta sin phi, cos theta).
    """
    if not 0.0 <= theta <= np.pi:
        raise ValueError(f"theta must lie in [0, pi], got {theta}")
    if not 0.0 <= phi <= 2.0 * np.pi:
        raise ValueError(f"phi must lie in [0, 2 pi], got {phi}")
    gen = theta * (
        np.sin(phi) * system.jx - np.cos(phi) * system.jy
    )  # Hermitian generator
    vals, vecs = np.linalg.eigh(gen)
    psi = vecs @ (np.exp(1j * vals) * vecs[0].conj())
    return psi / np.linalg.norm(psi)


def magnetization(system: CollectiveSpinSystem, state: np.ndarray) -> np.ndarray:
    """Magnetization (m_x, m_y, m_z) = <(Jx, Jy, Jz)> / (N/2).

    Accepts a normalized state vector (shape ``(dim,)``) or a unit-trace
    density matrix (shape ``(dim, dim)``); anything else is rejected.
    """
    state = np.asarray(state)
    dim, c, jzd = system.dim, system.ladder, system.jz_diag
    if state.shape == (dim,):
        nrm = np.linalg.norm(state)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"state vector is not normalized: |psi| = {nrm}")
        # tridiagonal matrix elements: <Jx> + i <Jy> = sum_k c_k conj(psi_k) psi_{k+1}
        z = np.sum(c * state[:-1].conj() * state[1:])
        jx, jy = z.real, z.imag
        jz = float(jzd @ np.abs(state) ** 2)
    elif state.shape == (dim, dim):
        tr = np.trace(state)
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix does not have unit trace: tr = {tr}")
        # <Jp> = sum_k c_k rho[k+1, k] = <Jx> + i <Jy>
        band = np.einsum("k,k->", c, state.diagonal(offset=-1))
        jx, jy = band.real, band.imag
        jz = float(np.real(jzd @ state.diagonal()))
    else:
        raise ValueError(
            f"expected shape ({dim},) or ({dim}, {dim}), got {state.shape}"
        )
    return np.array([jx, jy, jz]) / system.j
