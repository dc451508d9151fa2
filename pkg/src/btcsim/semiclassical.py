"""Semiclassical descriptions: mean-field flow and the noisy phase model.

The mean-field magnetization m = (m_x, m_y, m_z) obeys

    dm_x/dt = kappa m_x m_z
    dm_y/dt = -omega m_z + kappa m_y m_z
    dm_z/dt = omega m_y - kappa (m_x^2 + m_y^2)

which conserves |m|^2 and the ratio m_x / (m_y - omega/kappa).  On the
invariant circle m_x = 0, |m| = 1 the flow reduces to a single phase,
m_y = sin(phi), m_z = cos(phi), with

    dphi/dt = -omega + kappa sin(phi) + xi,

where xi is white noise of strength 2/N representing the leading
finite-size fluctuations.  Below threshold (omega < kappa) the phase
locks at sin(phi) = omega/kappa; above threshold it revolves with
period 2 pi / sqrt(omega^2 - kappa^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels

__all__ = [
    "mf_rhs",
    "integrate_mf",
    "mf_analytic",
    "PhasePath",
    "simulate_phase",
    "phase_to_magnetization",
]


def mf_rhs(m: np.ndarray, omega: float, kappa: float) -> np.ndarray:
    """Right-hand side of the mean-field equations."""
    mx, my, mz = m
    return np.array(
        [
            kappa * mx * mz,
            -omega * mz + kappa * my * mz,
            omega * my - kappa * (mx * mx + my * my),
        ]
    )


def integrate_mf(
    m0: np.ndarray,
    omega: float,
    kappa: float,
    t_final: float,
    dt: float = 1e-3,
    record_dt: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 integration of the mean-field flow.

    Returns (times, path) with path[0] = m0.  RK4 at dt kappa <= 1e-3
    keeps the conserved quantities |m|^2 and m_x/(m_y - omega/kappa)
    constant to well below 1e-8 per unit time.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if record_dt is None:
        record_dt = dt
    stride = max(1, round(record_dt / dt))
    n_steps = max(1, round(t_final / dt))
    n_rec = n_steps // stride
    m = np.asarray(m0, dtype=float).copy()
    if m.shape != (3,):
        raise ValueError(f"m0 must have shape (3,), got {m.shape}")
    times = np.arange(n_rec + 1) * (stride * dt)
    path = np.empty((n_rec + 1, 3))
    path[0] = m
    r = 1
    for i in range(n_steps):
        k1 = mf_rhs(m, omega, kappa)
        k2 = mf_rhs(m + 0.5 * dt * k1, omega, kappa)
        k3 = mf_rhs(m + 0.5 * dt * k2, omega, kappa)
        k4 = mf_rhs(m + dt * k3, omega, kappa)
        m += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (i + 1) % stride == 0 and r <= n_rec:
            path[r] = m
            r += 1
    return times, path


def mf_analytic(
    m0: np.ndarray, omega: float, kappa: float, t: np.ndarray
) -> np.ndarray:
    """Closed-form mean-field orbit on the m_x = 0, |m| = 1 circle.

    Valid above threshold (omega > kappa).  Writing
    Omega = sqrt(omega^2 - kappa^2), the orbit is

        m_y(t) = omega/kappa
                 + ((omega/kappa)^2 - 1) / (cos(Omega t - phi0) - omega/kappa)
        m_z(t) = Omega sin(Omega t - phi0) / (kappa cos(Omega t - phi0) - omega)

    with phi0 fixed by the initial point.  Returns an array of shape
    (len(t), 3) whose m_x column is zero.
    """
    m0 = np.asarray(m0, dtype=float)
    if abs(m0[0]) > 1e-12:
        raise ValueError("closed form requires m_x = 0")
    if abs(m0 @ m0 - 1.0) > 1e-10:
        raise ValueError("closed form requires |m| = 1")
    if omega <= kappa:
        raise ValueError("closed form requires omega > kappa")
    my0, mz0 = m0[1], m0[2]
    big_omega = math.sqrt(omega**2 - kappa**2)
    denom = omega - kappa * my0
    sin_phi0 = big_omega * mz0 / denom
    cos_phi0 = (kappa - omega * my0) / denom
    phi0 = math.atan2(sin_phi0, cos_phi0)
    t = np.asarray(t, dtype=float)
    arg = big_omega * t - phi0
    ratio = omega / kappa
    my = ratio + (ratio**2 - 1.0) / (np.cos(arg) - ratio)
    mz = big_omega * np.sin(arg) / (kappa * np.cos(arg) - omega)
    return np.column_stack([np.zeros_like(my), my, mz])


@dataclass
class PhasePath:
    """Sampled phase-model trajectory.

    times and phi have equal length and include the initial condition;
    n_atoms may be inf for the noiseless flow.
    """

    times: np.ndarray
    phi: np.ndarray
    n_atoms: float
    seed: int | None
    params: dict = field(default_factory=dict)


def simulate_phase(
    phi0: float,
    n_atoms: float,
    omega: float,
    kappa: float = 1.0,
    t_final: float = 100.0,
    dt: float = 1e-3,
    seed: int = 0,
    record_dt: float | None = None,
) -> PhasePath:
    """Euler-Maruyama integration of the phase Langevin equation.

    Parameters
    ----------
    phi0 : float
        Initial phase.
    n_atoms : float
        Sets the noise strength 2/n_atoms; may be math.inf for the
        deterministic flow.
    record_dt : float, optional
        Output sampling interval (defaults to dt).  Must be a multiple
        of dt.

    Returns
    -------
    PhasePath
        The phase is not wrapped; secular drift counts full revolutions.
    """
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    if n_atoms <= 0:
        raise ValueError("n_atoms must be positive")
    if record_dt is None:
        record_dt = dt
    stride = max(1, round(record_dt / dt))
    n_rec = max(1, round(t_final / (stride * dt)))
    n_steps = n_rec * stride
    out = np.empty(n_rec)
    bg = np.random.PCG64(seed)
    kernels.phase_path(
        bg, float(phi0), float(omega), float(kappa), float(n_atoms),
        float(dt), n_steps, stride, out,
    )
    times = np.arange(n_rec + 1) * (stride * dt)
    phi = np.concatenate([[phi0], out])
    return PhasePath(
        times=times,
        phi=phi,
        n_atoms=n_atoms,
        seed=seed,
        params={"omega": omega, "kappa": kappa, "dt": dt, "t_final": t_final},
    )


def phase_to_magnetization(phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map phase samples to (m_y, m_z) = (sin phi, cos phi)."""
    phi = np.asarray(phi)
    return np.sin(phi), np.cos(phi)
