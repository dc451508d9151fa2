"""Stochastic unravelings of the collective-spin master equation.

Two schemes reproduce the master equation on average:

* quantum jumps: with probability p = 2 (kappa/N) <JpJm> dt per step the
  state is reset to Jm psi (photon detection); otherwise it follows the
  non-Hermitian drift -i omega Jx - (kappa/N) JpJm and is renormalized.
* homodyne: diffusive unraveling of the quadrature x = Jp + Jm, Euler-
  Maruyama steps driven by one Wiener increment per step, with the raw
  photocurrent I = sqrt(2 kappa / N) <x> + dW/dt.

Trajectories are advanced by the compiled kernels when available and by
the vectorized numpy fallback otherwise; either way a trajectory is
fully determined by (scheme, parameters, seed).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from . import _kernels as kernels
from .spinops import CollectiveSpinSystem, magnetization, spin_coherent_state
from .util import NumericsError

__all__ = [
    "TrajectoryRecord",
    "BinnedSignal",
    "default_jump_dt",
    "jump_trajectory",
    "homodyne_trajectory",
    "ensemble_states",
    "bin_counts",
    "smooth_current",
]

P_GUARD = 0.1
# pre-renormalization norm fluctuates by O(kappa N dt) per diffusive
# step even when the integration is healthy, so the guard only flags
# outright divergence
NORM_GUARD = 0.5
RECORD_DT = 0.01
_CHUNK_STEPS = 1_000_000


@dataclass
class TrajectoryRecord:
    """One stored trajectory.

    magnetizations[r] holds (m_x, m_y, m_z) at times[r]; row 0 is the
    initial state.  jump_times is set for the jump scheme, raw_current
    (sampled every current_dt) for the homodyne schemes when requested,
    and xtilde for transformed-generator runs (<a + a^dag>/N on the
    recording grid).
    """

    scheme: str
    times: np.ndarray
    magnetizations: np.ndarray
    seed: int
    params: dict = field(default_factory=dict)
    jump_times: np.ndarray | None = None
    raw_current: np.ndarray | None = None
    current_dt: float | None = None
    xtilde: np.ndarray | None = None


@dataclass
class BinnedSignal:
    """Uniformly sampled derived signal (bin counts or smoothed current)."""

    times: np.ndarray
    values: np.ndarray
    window: float
    mode: str


def default_jump_dt(system: CollectiveSpinSystem) -> float:
    """Step size keeping the per-step jump probability under the guard.

    The worst case is the fully polarized transverse state with
    <JpJm> ~ N^2/4, giving p ~ dt kappa N / 2, so dt scales as 1/N.
    """
    return min(1e-3, 0.15 / system.N) / system.kappa


def _grid(system, t_final, dt, record_dt):
    stride = max(1, round(record_dt / dt))
    n_rec = max(1, round(t_final / (stride * dt)))
    n_steps = n_rec * stride
    times = np.arange(n_rec + 1) * (stride * dt)
    return stride, n_rec, n_steps, times


def jump_trajectory(
    system: CollectiveSpinSystem,
    psi0: np.ndarray | None = None,
    t_final: float = 50.0,
    dt: float | None = None,
    seed: int = 0,
    record_dt: float | None = None,
) -> TrajectoryRecord:
    """Simulate one quantum-jump trajectory.

    psi0 defaults to the transverse spin-coherent state (m_y = 1).  dt
    defaults to ``default_jump_dt``; a value too coarse for the given N
    trips the per-step probability guard and raises.
    """
    if psi0 is None:
        psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    if dt is None:
        dt = default_jump_dt(system)
    if record_dt is None:
        record_dt = RECORD_DT / system.kappa
    stride, n_rec, n_steps, times = _grid(system, t_final, dt, record_dt)
    psi = np.array(psi0, dtype=complex)
    mags = np.empty((n_rec + 1, 3))
    mags[0] = magnetization(system, psi)
    bg = np.random.PCG64(seed)
    gamma = system.kappa / system.N
    jumps: list[np.ndarray] = []
    chunk = (_CHUNK_STEPS // stride) * stride or stride
    done = 0
    r = 1
    while done < n_steps:
        steps = min(chunk, n_steps - done)
        buf = np.empty(steps)
        rows = steps // stride
        nj, status = kernels.jump_chunk(
            bg, psi, system.ladder, system.jpjm_diag, system.jz_diag,
            system.omega, gamma, dt, steps, stride, 1.0 / system.j,
            mags[r:r + rows], buf, done * dt, P_GUARD,
        )
        if status:
            raise NumericsError(
                f"jump probability exceeded {P_GUARD}; reduce dt "
                f"(got dt = {dt}, suggest <= {default_jump_dt(system)})"
            )
        jumps.append(buf[:nj].copy())
        done += steps
        r += rows
    return TrajectoryRecord(
        scheme="jump",
        times=times,
        magnetizations=mags,
        seed=seed,
        params={
            "n_atoms": system.N, "omega": system.omega,
            "kappa": system.kappa, "dt": dt, "t_final": t_final,
        },
        jump_times=np.concatenate(jumps) if jumps else np.empty(0),
    )


def homodyne_trajectory(
    system: CollectiveSpinSystem,
    psi0: np.ndarray | None = None,
    t_final: float = 50.0,
    dt: float | None = None,
    seed: int = 0,
    record_dt: float | None = None,
    record_current: bool = True,
) -> TrajectoryRecord:
    """Simulate one homodyne trajectory.

    With record_current the raw photocurrent (one sample per step) is
    kept; disable it for very long runs where only the magnetization is
    needed.
    """
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
    current = np.empty(n_steps if record_current else 0)
    bg = np.random.PCG64(seed)
    gamma = system.kappa / system.N
    chunk = (_CHUNK_STEPS // stride) * stride or stride
    done = 0
    r = 1
    while done < n_steps:
        steps = min(chunk, n_steps - done)
        rows = steps // stride
        status = kernels.homodyne_chunk(
            bg, psi, system.ladder, system.jpjm_diag, system.jz_diag,
            system.omega, gamma, dt, steps, stride, 1.0 / system.j,
            mags[r:r + rows], current[done:done + steps], NORM_GUARD,
        )
        if status:
            raise NumericsError(
                f"homodyne norm drifted beyond {NORM_GUARD} in one step; "
                f"reduce dt (got dt = {dt})"
            )
        done += steps
        r += rows
    return TrajectoryRecord(
        scheme="homodyne",
        times=times,
        magnetizations=mags,
        seed=seed,
        params={
            "n_atoms": system.N, "omega": system.omega,
            "kappa": system.kappa, "dt": dt, "t_final": t_final,
        },
        raw_current=current if record_current else None,
        current_dt=dt if record_current else None,
    )


def ensemble_states(
    system: CollectiveSpinSystem,
    scheme: str,
    checkpoint_times: np.ndarray,
    n_traj: int,
    psi0: np.ndarray | None = None,
    dt: float | None = None,
    master_seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """State vectors of n_traj trajectories at the checkpoint times.

    Trajectory i uses seed ``master_seed ^ i``, so results do not depend
    on the worker count.  Returns a complex array of shape
    (n_traj, len(checkpoint_times), dim).

    The compiled backend runs one trajectory per thread; the numpy
    fallback steps the whole ensemble in lockstep.
    """
    if scheme not in ("jump", "homodyne"):
        raise ValueError(f"scheme must be 'jump' or 'homodyne', got {scheme!r}")
    if psi0 is None:
        psi0 = spin_coherent_state(system, np.pi / 2, np.pi / 2)
    if dt is None:
        dt = default_jump_dt(system) if scheme == "jump" else 1e-4 / system.kappa
    checkpoints = np.asarray(checkpoint_times, dtype=float)
    if checkpoints.ndim != 1 or len(checkpoints) == 0:
        raise ValueError("checkpoint_times must be a non-empty 1-d sequence")
    if np.any(np.diff(checkpoints) <= 0) or checkpoints[0] <= 0:
        raise ValueError("checkpoint_times must be positive and increasing")
    seg_steps = np.diff(np.concatenate([[0.0], checkpoints])) / dt
    seg_steps_int = np.round(seg_steps).astype(int)
    if np.max(np.abs(seg_steps - seg_steps_int)) > 1e-6:
        raise ValueError("checkpoint spacings must be multiples of dt")
    gamma = system.kappa / system.N
    out = np.empty((n_traj, len(checkpoints), system.dim), dtype=complex)
    no_mags = np.empty((0, 3))

    def run_one(i: int) -> None:
        bg = np.random.PCG64(master_seed ^ i)
        psi = np.array(psi0, dtype=complex)
        for k, steps in enumerate(seg_steps_int):
            if scheme == "jump":
                buf = np.empty(steps)
                _, status = kernels.jump_chunk(
                    bg, psi, system.ladder, system.jpjm_diag, system.jz_diag,
                    system.omega, gamma, dt, steps, 0, 1.0 / system.j,
                    no_mags, buf, 0.0, P_GUARD,
                )
            else:
                status = kernels.homodyne_chunk(
                    bg, psi, system.ladder, system.jpjm_diag, system.jz_diag,
                    system.omega, gamma, dt, steps, 0, 1.0 / system.j,
                    no_mags, np.empty(0), NORM_GUARD,
                )
            if status:
                raise NumericsError(f"trajectory {i}: dt = {dt} too coarse")
            out[i, k] = psi

    if kernels.BACKEND == "cython" or n_traj == 1:
        if workers > 1 and n_traj > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(run_one, range(n_traj)))
        else:
            for i in range(n_traj):
                run_one(i)
    else:
        bgs = [np.random.PCG64(master_seed ^ i) for i in range(n_traj)]
        psis = np.tile(np.asarray(psi0, dtype=complex), (n_traj, 1))
        batch_mags = np.empty((n_traj, 0, 3))
        for k, steps in enumerate(seg_steps_int):
            if scheme == "jump":
                status = kernels.jump_chunk_batch(
                    bgs, psis, system.ladder, system.jpjm_diag,
                    system.jz_diag, system.omega, gamma, dt, steps, 0,
                    1.0 / system.j, batch_mags, None, 0.0, P_GUARD,
                )
            else:
                status = kernels.homodyne_chunk_batch(
                    bgs, psis, system.ladder, system.jpjm_diag,
                    system.jz_diag, system.omega, gamma, dt, steps, 0,
                    1.0 / system.j, batch_mags, NORM_GUARD,
                )
            if status:
                raise NumericsError(f"dt = {dt} too coarse for the ensemble")
            out[:, k] = psis
    return out


def bin_counts(
    jump_times: np.ndarray,
    t_final: float,
    window: float = 0.5,
    mode: str = "tumbling",
    grid_dt: float = 0.01,
) -> BinnedSignal:
    """Photon-count signal from a jump record.

    tumbling: disjoint windows [k w, (k+1) w); sliding: counts in a
    window of width w centered on a grid of spacing grid_dt (windows
    fully inside [0, t_final]).
    """
    jt = np.asarray(jump_times, dtype=float)
    if jt.ndim != 1:
        raise ValueError("jump_times must be one-dimensional")
    if np.any(np.diff(jt) < 0):
        raise ValueError("jump_times must be sorted")
    if window <= 0 or t_final < window:
        raise ValueError("need 0 < window <= t_final")
    if mode == "tumbling":
        n_bins = int(np.floor(t_final / window + 1e-9))
        edges = np.arange(n_bins + 1) * window
        values, _ = np.histogram(jt, bins=edges)
        centers = edges[:-1] + 0.5 * window
    elif mode == "sliding":
        centers = np.arange(
            0.5 * window, t_final - 0.5 * window + 1e-12, grid_dt
        )
        lo = np.searchsorted(jt, centers - 0.5 * window, side="right")
        hi = np.searchsorted(jt, centers + 0.5 * window, side="right")
        values = hi - lo
    else:
        raise ValueError(f"mode must be 'tumbling' or 'sliding', got {mode!r}")
    return BinnedSignal(
        times=centers, values=values.astype(float), window=window, mode=mode
    )


def smooth_current(
    raw_current: np.ndarray,
    dt: float,
    n_atoms: int,
    window: float = 0.5,
) -> BinnedSignal:
    """Moving-average the raw photocurrent and rescale by 1/sqrt(2 N).

    The window must span at least 10 samples.  For a locked state with
    magnetization m_x the smoothed signal sits at sqrt(kappa) m_x, with
    shot-noise variance 1/(2 N window) on top.
    """
    raw = np.asarray(raw_current, dtype=float)
    size = round(window / dt)
    if size < 10:
        raise ValueError(f"window/dt = {size} too small, need >= 10 samples")
    if raw.ndim != 1 or len(raw) < size:
        raise ValueError("raw_current shorter than the smoothing window")
    smooth = scipy.ndimage.uniform_filter1d(raw, size=size, mode="nearest")
    smooth = smooth / np.sqrt(2.0 * n_atoms)
    times = (np.arange(len(raw)) + 1) * dt
    return BinnedSignal(times=times, values=smooth, window=window, mode="sliding")
