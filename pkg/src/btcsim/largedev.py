"""Full counting statistics of the homodyne current via tilted generators.

Biasing trajectories by the time-integrated x-quadrature current turns
the Liouvillian into the tilted generator

    L_s(rho) = L(rho) - s sqrt(2 kappa / N) (Jm rho + rho Jp) + (s^2 / 2) rho,

whose largest-real eigenvalue theta(s) is the scaled cumulant generating
function of the current; the dynamical activity k(s) = -theta'(s)
follows either from the leading left/right eigenmatrices (a
Hellmann-Feynman trace) or from finite differences of theta, and the two
routes are required to agree.  The leading left eigenmatrix also defines
the Doob transform: an auxiliary trace-preserving dynamics whose typical
trajectories realize the biased ensemble, integrable with the ordinary
homodyne stepper.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as kernels
from .mastereq import liouvillian_matrix, stationary_state
from .spinops import CollectiveSpinSystem, magnetization, spin_coherent_state
from .unravel import NORM_GUARD, RECORD_DT, TrajectoryRecord, _grid
from .util import NumericsError

__all__ = [
    "TiltedSolution",
    "build_tilted",
    "leading_eigenpair",
    "leading_eigenpair_dense",
    "activity",
    "theta_scan",
    "check_convexity",
    "DoobSystem",
    "doob_transform",
    "doob_homodyne_trajectory",
]

HERMITICITY_TOL = 1e-8
IMAG_TOL = 1e-9
DERIVATIVE_TOL = 1e-4
FD_STEP = 1e-3
TP_RESIDUAL_TOL = 1e-8
EIG_FLOOR = 1e-12


def build_tilted(system: CollectiveSpinSystem, bias: float) -> sp.csr_matrix:
    """Sparse tilted generator on column-stacked density matrices."""
    lind = liouvillian_matrix(system)
    if bias == 0.0:
        return lind
    dim = system.dim
    jm = sp.diags(system.ladder, -1, format="csr")
    eye = sp.identity(dim, format="csr")
    amp = bias * np.sqrt(2.0 * system.kappa / system.N)
    tilt = -amp * (sp.kron(eye, jm) + sp.kron(jm, eye))
    tilt = tilt + (0.5 * bias**2) * sp.identity(dim * dim, format="csr")
    return (lind + tilt).tocsr()


@dataclass
class TiltedSolution:
    """Leading eigendata of a tilted generator.

    scgf is the largest-real eigenvalue; right_op and left_op are the
    corresponding eigenmatrices, Hermitized and normalized to
    Tr[right_op] = 1 and Tr[left_op right_op] = 1.  left_op is None when
    the left problem was skipped.  residual is the 2-norm eigenresidual
    of the right problem; activity is filled by :func:`activity`.
    """

    bias: float
    scgf: float
    right_op: np.ndarray
    left_op: np.ndarray | None
    residual: float
    activity: float | None = None
    meta: dict = field(default_factory=dict)


def _unvec(vec: np.ndarray) -> np.ndarray:
    dim = round(np.sqrt(vec.shape[0]))
    return vec.reshape((dim, dim), order="F")


def _to_eigenmatrix(vec: np.ndarray, where: str) -> np.ndarray:
    """Fix the arbitrary eigenvector phase and enforce Hermiticity."""
    mat = _unvec(vec)
    tr = np.trace(mat)
    if abs(tr) < 1e-12 * np.abs(mat).max():
        raise NumericsError(f"{where}: eigenmatrix is traceless, cannot normalize")
    mat = mat / tr
    defect = np.max(np.abs(mat - mat.conj().T)) / max(1.0, np.abs(mat).max())
    if defect > HERMITICITY_TOL:
        raise NumericsError(f"{where}: hermiticity defect {defect:.2e}")
    return 0.5 * (mat + mat.conj().T)


def _arpack_leading(mat, v0, ncv, tol, maxiter):
    dim2 = mat.shape[0]
    k = min(4, dim2 - 2)
    ncv = min(max(ncv, 3 * k + 2), dim2)
    if dim2 - 4 < ncv < dim2:
        # an almost-complete Krylov space cannot restart and silently
        # drops the rightmost mode; use a full factorization instead
        ncv = dim2
    try:
        vals, vecs = spla.eigs(
            mat, k=k, which="LR", v0=v0, ncv=ncv, tol=tol, maxiter=maxiter
        )
    except spla.ArpackError:
        # a start vector that is already an exact eigenvector (identity at
        # zero bias, or a warm start reused on the same generator) makes
        # the first Arnoldi residual vanish; detune it deterministically
        bump = np.linspace(0.25, 0.75, dim2) * (np.linalg.norm(v0) / dim2)
        vals, vecs = spla.eigs(
            mat, k=k, which="LR", v0=v0 + bump, ncv=ncv, tol=tol,
            maxiter=maxiter,
        )
    lead = int(np.argmax(vals.real))
    return vals[lead], vecs[:, lead]


def _validated_left(madj, v0, val, right_op, ncv, tol, maxiter):
    """Solve the adjoint problem and biorthonormalize against right_op."""
    try:
        val_l, vec_l = _arpack_leading(madj, v0, ncv, tol, maxiter)
    except spla.ArpackNoConvergence as exc:
        raise NumericsError(f"left eigenproblem did not converge: {exc}") from exc
    if abs(val_l.conjugate() - val) > 1e-7 * max(1.0, abs(val)):
        raise NumericsError(
            f"left/right eigenvalues disagree: {val_l.conjugate()} vs {val}"
        )
    left_raw = _unvec(vec_l)
    # normalize to Tr[left right] = 1 (Hilbert-Schmidt biorthogonality)
    overlap = np.trace(left_raw @ right_op)
    if abs(overlap) < 1e-12:
        raise NumericsError("left and right eigenmatrices are orthogonal")
    left_op = left_raw / overlap
    defect = np.max(np.abs(left_op - left_op.conj().T)) / max(
        1.0, np.abs(left_op).max()
    )
    if defect > HERMITICITY_TOL:
        raise NumericsError(f"left eigenmatrix hermiticity defect {defect:.2e}")
    left_op = 0.5 * (left_op + left_op.conj().T)
    return left_op / np.real(np.trace(left_op @ right_op))


def leading_eigenpair(
    mat: sp.spmatrix,
    bias: float = 0.0,
    v0: np.ndarray | None = None,
    v0_left: np.ndarray | None = None,
    ncv: int = 80,
    tol: float = 1e-12,
    maxiter: int = 10000,
    want_left: bool = True,
) -> TiltedSolution:
    """Largest-real eigenvalue and eigenmatrices of a tilted generator.

    Uses implicitly restarted Arnoldi iteration targeting the rightmost
    part of the spectrum, warm-startable through v0 / v0_left.  The
    eigenvalue must come out real to 1e-9 (the rightmost mode of these
    generators is non-oscillatory); the eigenmatrices must be Hermitian
    to 1e-8 after phase fixing.  Raises NumericsError when the iteration
    does not converge or the checks fail.
    """
    dim2 = mat.shape[0]
    dim = round(np.sqrt(dim2))
    cold = np.identity(dim, dtype=complex).reshape(-1, order="F") / dim
    # a warm start can drag the iteration onto a subdominant branch when
    # the Krylov space nearly fills the problem; fall back to the cold
    # start before giving up
    starts = [v0, cold] if v0 is not None else [cold]
    failure: NumericsError | None = None
    for start in starts:
        try:
            val, vec = _arpack_leading(mat, start, ncv, tol, maxiter)
        except spla.ArpackNoConvergence as exc:
            failure = NumericsError(f"right eigenproblem did not converge: {exc}")
            continue
        if abs(val.imag) > IMAG_TOL:
            failure = NumericsError(
                f"leading eigenvalue has imaginary part {val.imag:.2e}"
            )
            continue
        try:
            right_op = _to_eigenmatrix(vec, "right eigenmatrix")
        except NumericsError as exc:
            failure = exc
            continue
        break
    else:
        raise failure
    residual = float(np.linalg.norm(mat @ vec - val * vec))
    left_op = None
    if want_left:
        lstarts = [v0_left] if v0_left is not None else []
        lstarts += [start, cold]
        madj = mat.conj().T.tocsr()
        for lstart in lstarts:
            try:
                left_op = _validated_left(
                    madj, lstart, val, right_op, ncv, tol, maxiter
                )
            except NumericsError as exc:
                failure = exc
                continue
            break
        else:
            raise failure
    return TiltedSolution(
        bias=bias,
        scgf=float(val.real),
        right_op=right_op,
        left_op=left_op,
        residual=residual,
    )


def leading_eigenpair_dense(mat, bias: float = 0.0) -> TiltedSolution:
    """Dense full-spectrum reference solver (small systems / tests)."""
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    vals, vl, vr = scipy.linalg.eig(dense, left=True, right=True)
    lead = int(np.argmax(vals.real))
    val = vals[lead]
    if abs(val.imag) > 1e-8:
        raise NumericsError(
            f"leading eigenvalue has imaginary part {val.imag:.2e}"
        )
    right_op = _to_eigenmatrix(vr[:, lead], "right eigenmatrix")
    left_raw = _unvec(vl[:, lead])
    overlap = np.trace(left_raw @ right_op)
    left_op = left_raw / overlap
    left_op = 0.5 * (left_op + left_op.conj().T)
    left_op = left_op / np.real(np.trace(left_op @ right_op))
    residual = float(np.linalg.norm(dense @ vr[:, lead] - val * vr[:, lead]))
    return TiltedSolution(
        bias=bias,
        scgf=float(val.real),
        right_op=right_op,
        left_op=left_op,
        residual=residual,
    )


def _scgf_only(system, bias, v0):
    mat = build_tilted(system, bias)
    sol = leading_eigenpair(mat, bias=bias, v0=v0, want_left=False)
    return sol.scgf


def activity(
    sol: TiltedSolution,
    system: CollectiveSpinSystem,
    fd_step: float = FD_STEP,
    check_tol: float = DERIVATIVE_TOL,
) -> float:
    """Dynamical activity k(s) = -theta'(s) with a two-route consistency gate.

    Route one is the Hellmann-Feynman trace
    sqrt(2 kappa/N) Tr[left (Jm right + right Jp)] - s; route two is a
    Richardson-extrapolated central difference of theta over fd_step.
    Disagreement beyond check_tol * kappa raises.  The value is stored on
    sol.activity and returned.
    """
    if sol.left_op is None:
        raise ValueError("activity needs the left eigenmatrix (want_left=True)")
    jm = system.jminus
    amp = np.sqrt(2.0 * system.kappa / system.N)
    flux = sol.right_op @ jm.T + jm @ sol.right_op  # Jm R + R Jp, Jp = Jm.T
    k_hf = amp * float(np.real(np.trace(sol.left_op @ flux))) - sol.bias

    v0 = sol.right_op.reshape(-1, order="F")
    thetas = {}
    for h in (fd_step, 0.5 * fd_step):
        for sgn in (1.0, -1.0):
            thetas[sgn * h] = _scgf_only(system, sol.bias + sgn * h, v0)
    d_full = (thetas[fd_step] - thetas[-fd_step]) / (2.0 * fd_step)
    d_half = (thetas[0.5 * fd_step] - thetas[-0.5 * fd_step]) / fd_step
    k_fd = -(4.0 * d_half - d_full) / 3.0
    if abs(k_hf - k_fd) > check_tol * system.kappa:
        raise NumericsError(
            f"activity routes disagree at s = {sol.bias}: "
            f"Hellmann-Feynman {k_hf:.6e} vs finite difference {k_fd:.6e}"
        )
    sol.activity = k_hf
    sol.meta["k_fd"] = k_fd
    return k_hf


def theta_scan(
    n_atoms: int,
    s_values: np.ndarray,
    omega_over_kappa: np.ndarray,
    kappa: float = 1.0,
    compute_k: bool = True,
) -> list[dict]:
    """Scan theta(s) (and k(s)) over drive and bias grids.

    Within each drive value the solves warm-start from the previous bias
    point, beginning at the stationary state.  Points where the solver
    fails are recorded with converged = False and NaN values instead of
    aborting the scan.  Returns row dicts with keys
    (omega_over_kappa, s, theta, k, converged, residual).
    """
    rows = []
    for ratio in np.asarray(omega_over_kappa, dtype=float):
        system = CollectiveSpinSystem(n_atoms, ratio * kappa, kappa)
        rho_ss = stationary_state(system)
        v0 = rho_ss.reshape(-1, order="F")
        v0_left = None
        for s in np.asarray(s_values, dtype=float):
            mat = build_tilted(system, s)
            try:
                sol = leading_eigenpair(mat, bias=s, v0=v0, v0_left=v0_left)
                k = activity(sol, system) if compute_k else np.nan
                rows.append(
                    {
                        "omega_over_kappa": ratio,
                        "s": s,
                        "theta": sol.scgf,
                        "k": k,
                        "converged": True,
                        "residual": sol.residual,
                    }
                )
                v0 = sol.right_op.reshape(-1, order="F")
                v0_left = sol.left_op.reshape(-1, order="F")
            except NumericsError:
                rows.append(
                    {
                        "omega_over_kappa": ratio,
                        "s": s,
                        "theta": np.nan,
                        "k": np.nan,
                        "converged": False,
                        "residual": np.nan,
                    }
                )
    return rows


def check_convexity(s_values: np.ndarray, thetas: np.ndarray) -> float:
    """Most negative discrete second difference of theta over a uniform grid.

    theta(s) is convex, so this should not dip below numerical noise;
    callers compare against -1e-8.
    """
    s_values = np.asarray(s_values, dtype=float)
    steps = np.diff(s_values)
    if len(steps) < 2 or np.max(np.abs(steps - steps[0])) > 1e-12:
        raise ValueError("convexity check needs a uniform grid of >= 3 points")
    second = np.diff(np.asarray(thetas), 2)
    return float(second.min())


@dataclass
class DoobSystem:
    """Auxiliary trace-preserving dynamics generating the biased ensemble.

    weight is the positive square root of the tilted left eigenmatrix;
    jminus_t = weight Jm weight^-1 and h_eff are the transformed jump
    operator and Hamiltonian.  tp_residual is the max-norm defect of the
    trace-preservation identity of the reconstructed generator.
    """

    bias: float
    scgf: float
    jminus_t: np.ndarray
    h_eff: np.ndarray
    weight: np.ndarray
    weight_inv: np.ndarray
    tp_residual: float
    system: CollectiveSpinSystem


def doob_transform(sol: TiltedSolution, system: CollectiveSpinSystem) -> DoobSystem:
    """Build the Doob dynamics from a tilted solution.

    The left eigenmatrix must be positive semidefinite; eigenvalues below
    -1e-8 of the maximum raise, smaller negatives are floored at
    1e-12 of the maximum before inverting the square root.
    """
    if sol.left_op is None:
        raise ValueError("doob_transform needs the left eigenmatrix")
    vals, vecs = np.linalg.eigh(sol.left_op)
    top = float(vals.max())
    if top <= 0:
        raise NumericsError("left eigenmatrix has no positive weight")
    if vals.min() < -HERMITICITY_TOL * top:
        raise NumericsError(
            f"left eigenmatrix not positive semidefinite: min {vals.min():.2e}"
        )
    floored = np.maximum(vals, EIG_FLOOR * top)
    weight = (vecs * np.sqrt(floored)) @ vecs.conj().T
    weight_inv = (vecs / np.sqrt(floored)) @ vecs.conj().T
    gamma = system.kappa / system.N
    jm_t = weight @ system.jminus @ weight_inv
    amp = sol.bias * np.sqrt(2.0 * system.kappa / system.N)
    drift = weight @ (
        -1j * system.omega * system.jx
        - gamma * np.diag(system.jpjm_diag).astype(complex)
    ) @ weight_inv
    drift = drift - amp * jm_t
    drift = drift + (0.25 * sol.bias**2 - 0.5 * sol.scgf) * np.identity(system.dim)
    sink = gamma * (jm_t.conj().T @ jm_t)
    tp_residual = float(np.max(np.abs(drift + drift.conj().T + 2.0 * sink)))
    if tp_residual > TP_RESIDUAL_TOL:
        raise NumericsError(
            f"Doob generator not trace preserving: residual {tp_residual:.2e}"
        )
    h_eff = 1j * (drift + sink)
    h_eff = 0.5 * (h_eff + h_eff.conj().T)
    return DoobSystem(
        bias=sol.bias,
        scgf=sol.scgf,
        jminus_t=np.ascontiguousarray(jm_t),
        h_eff=np.ascontiguousarray(h_eff),
        weight=weight,
        weight_inv=weight_inv,
        tp_residual=tp_residual,
        system=system,
    )


def doob_homodyne_trajectory(
    doob: DoobSystem,
    psi0: np.ndarray | None = None,
    t_final: float = 50.0,
    dt: float | None = None,
    seed: int = 0,
    record_dt: float | None = None,
    record_current: bool = True,
) -> TrajectoryRecord:
    """Homodyne trajectory of the Doob dynamics.

    Identical stepping to the plain homodyne unraveling with the
    transformed jump operator and Hamiltonian; at bias 0 it reproduces
    the untilted trajectory of the same seed exactly (up to the dense
    matrix arithmetic).  Records bare magnetizations plus
    <jminus_t + jminus_t^dag>/N in ``xtilde``.
    """
    system = doob.system
    if psi0 is None:
        psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    if dt is None:
        dt = 1e-4 / system.kappa
    if record_dt is None:
        record_dt = RECORD_DT / system.kappa
    stride, n_rec, n_steps, times = _grid(system, t_final, dt, record_dt)
    psi = np.array(psi0, dtype=complex)
    mags = np.empty((n_rec + 1, 3))
    mags[0] = magnetization(system, psi)
    xtilde = np.empty(n_rec + 1)
    xtilde[0] = 2.0 * np.real(np.vdot(psi, doob.jminus_t @ psi)) / system.N
    current = np.empty(n_steps if record_current else 0)
    a_dag = np.ascontiguousarray(doob.jminus_t.conj().T)
    bg = np.random.PCG64(seed)
    gamma = system.kappa / system.N
    chunk_cap = 1_000_000
    chunk = (chunk_cap // stride) * stride or stride
    done = 0
    r = 1
    while done < n_steps:
        steps = min(chunk, n_steps - done)
        rows = steps // stride
        status = kernels.homodyne_dense_chunk(
            bg, psi, doob.jminus_t, a_dag, doob.h_eff,
            system.ladder, system.jz_diag, gamma, dt, steps, stride,
            1.0 / system.j, mags[r:r + rows],
            xtilde[r:r + rows], current[done:done + steps],
            1.0 / system.N, NORM_GUARD,
        )
        if status:
            raise NumericsError(
                f"Doob homodyne norm drifted beyond {NORM_GUARD}; reduce dt"
            )
        done += steps
        r += rows
    return TrajectoryRecord(
        scheme="doob",
        times=times,
        magnetizations=mags,
        seed=seed,
        params={
            "n_atoms": system.N, "omega": system.omega, "kappa": system.kappa,
            "dt": dt, "t_final": t_final, "s": doob.bias, "theta": doob.scgf,
        },
        raw_current=current if record_current else None,
        current_dt=dt if record_current else None,
        xtilde=xtilde,
    )
