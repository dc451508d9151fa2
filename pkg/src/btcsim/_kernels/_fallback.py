"""Pure-numpy fallback kernels.

Single-trajectory functions mirror the compiled signatures in
``_core.pyx`` and consume identical variate streams (one normal or
uniform per step, drawn in blocks from the same BitGenerator, which
numpy guarantees to match scalar draws).  The ``*_batch`` variants step
many trajectories in lockstep with vectorized numpy, one independent
BitGenerator per trajectory; drivers use them when the compiled core is
unavailable.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 4096


def _gen(bit_generator) -> np.random.Generator:
    # Generator wraps without copying, so draws advance the caller's stream.
    return np.random.Generator(bit_generator)


def _blocks(total: int) -> list[int]:
    sizes = [_BLOCK] * (total // _BLOCK)
    if total % _BLOCK:
        sizes.append(total % _BLOCK)
    return sizes


# ---------------------------------------------------------------------------
# phase model
# ---------------------------------------------------------------------------

def phase_path(bit_generator, phi0, omega, kappa, noise_n, dt, n_steps,
               stride, out):
    gen = _gen(bit_generator)
    amp = np.sqrt(2.0 * dt / noise_n)
    phi = phi0
    i = 0
    r = 0
    for size in _blocks(n_steps):
        noise = gen.standard_normal(size)
        for j in range(size):
            phi += (-omega + kappa * np.sin(phi)) * dt + amp * noise[j]
            i += 1
            if i % stride == 0:
                out[r] = phi
                r += 1
    return phi


def phase_events(bit_generator, phi0, omega, kappa, noise_n, dt, n_steps,
                 threshold, rearm, confirm, burn_in_steps, step_offset, armed,
                 pending, pending_time, yprev, event_times):
    gen = _gen(bit_generator)
    amp = np.sqrt(2.0 * dt / noise_n)
    use_confirm = not np.isnan(confirm)
    phi = phi0
    n_ev = 0
    cap = event_times.shape[0]
    i = 0
    for size in _blocks(n_steps):
        noise = gen.standard_normal(size)
        for j in range(size):
            phi += (-omega + kappa * np.sin(phi)) * dt + amp * noise[j]
            i += 1
            g = step_offset + i
            y = np.sin(phi)
            if armed:
                if yprev >= threshold and y < threshold:
                    armed = False
                    if g > burn_in_steps:
                        if use_confirm:
                            pending = True
                            pending_time = g * dt
                        else:
                            if n_ev == cap:
                                return n_ev, phi, armed, pending, \
                                    pending_time, yprev, 1
                            event_times[n_ev] = g * dt
                            n_ev += 1
            else:
                if pending and y <= confirm:
                    pending = False
                    if n_ev == cap:
                        return n_ev, phi, armed, pending, pending_time, \
                            yprev, 1
                    event_times[n_ev] = pending_time
                    n_ev += 1
                if y >= rearm:
                    armed = True
                    pending = False
            yprev = y
    return n_ev, phi, armed, pending, pending_time, yprev, 0


def phase_events_batch(bit_generators, phi, omega, kappa, noise_n, dt,
                       n_steps, threshold, rearm, confirm, burn_in_steps,
                       step_offset, armed, pending, pending_time, yprev,
                       events):
    """Lockstep phase-model chunk over len(phi) streams.

    ``phi``, ``armed``, ``pending``, ``pending_time`` and ``yprev`` are
    updated in place; committed event times are appended to the
    per-stream lists in ``events``.
    """
    gens = [_gen(bg) for bg in bit_generators]
    amp = np.sqrt(2.0 * dt / noise_n)
    use_confirm = not np.isnan(confirm)
    i = 0
    for size in _blocks(n_steps):
        noise = np.stack([g.standard_normal(size) for g in gens], axis=1)
        for j in range(size):
            phi += (-omega + kappa * np.sin(phi)) * dt + amp * noise[j]
            i += 1
            g_step = step_offset + i
            y = np.sin(phi)
            fired = armed & (yprev >= threshold) & (y < threshold)
            if fired.any():
                armed[fired] = False
                if g_step > burn_in_steps:
                    t = g_step * dt
                    if use_confirm:
                        pending[fired] = True
                        pending_time[fired] = t
                    else:
                        for b in np.nonzero(fired)[0]:
                            events[b].append(t)
            if use_confirm:
                commit = ~armed & pending & (y <= confirm)
                if commit.any():
                    pending[commit] = False
                    for b in np.nonzero(commit)[0]:
                        events[b].append(pending_time[b])
            rearming = ~armed & (y >= rearm)
            armed |= rearming
            pending &= ~rearming
            yprev[:] = y
    return phi


# ---------------------------------------------------------------------------
# quantum-jump unraveling
# ---------------------------------------------------------------------------

def _nh_rhs(psi, c, d, omega, gamma):
    out = np.empty_like(psi)
    out[:-1] = c * psi[1:]
    out[-1] = 0.0
    out[1:] += c * psi[:-1]
    out *= -0.5j * omega
    out -= gamma * d * psi
    return out


def _mags(psi, c, jzd, inv_j):
    z = np.sum(c * psi[:-1].conj() * psi[1:])
    jz = jzd @ np.abs(psi) ** 2
    return z.real * inv_j, z.imag * inv_j, jz * inv_j


def jump_chunk(bit_generator, psi, c, d, jzd, omega, gamma, dt, n_steps,
               stride, inv_j, mags_out, jump_times, t0, p_guard):
    gen = _gen(bit_generator)
    i = 0
    r = 0
    nj = 0
    for size in _blocks(n_steps):
        uniforms = gen.random(size)
        for j in range(size):
            e = d @ np.abs(psi) ** 2
            p = 2.0 * gamma * e * dt
            if p > p_guard:
                return nj, 1
            if uniforms[j] < p:
                new = np.zeros_like(psi)
                new[1:] = c * psi[:-1]
                psi[:] = new / np.linalg.norm(new)
                jump_times[nj] = t0 + (i + 1) * dt
                nj += 1
            # drift runs on every step (skipping it on jump steps would
            # slow the precession by a factor 1 - p)
            k1 = _nh_rhs(psi, c, d, omega, gamma)
            k2 = _nh_rhs(psi + 0.5 * dt * k1, c, d, omega, gamma)
            k3 = _nh_rhs(psi + 0.5 * dt * k2, c, d, omega, gamma)
            k4 = _nh_rhs(psi + dt * k3, c, d, omega, gamma)
            psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            psi /= np.linalg.norm(psi)
            i += 1
            if stride > 0 and i % stride == 0:
                mags_out[r, 0], mags_out[r, 1], mags_out[r, 2] = _mags(
                    psi, c, jzd, inv_j
                )
                r += 1
    return nj, 0


def jump_chunk_batch(bit_generators, psis, c, d, jzd, omega, gamma, dt,
                     n_steps, stride, inv_j, mags_out, jump_lists, t0,
                     p_guard):
    """Lockstep quantum-jump chunk over psis.shape[0] trajectories.

    ``psis`` is advanced in place; ``mags_out`` has shape
    (n_traj, n_steps // stride, 3).  Jump times are appended to
    ``jump_lists`` when it is not None.  Returns status as jump_chunk.
    """

    def rhs(block):
        out = np.empty_like(block)
        out[:, :-1] = c * block[:, 1:]
        out[:, -1] = 0.0
        out[:, 1:] += c * block[:, :-1]
        out *= -0.5j * omega
        out -= gamma * d * block
        return out

    gens = [_gen(bg) for bg in bit_generators]
    i = 0
    r = 0
    for size in _blocks(n_steps):
        uniforms = np.stack([g.random(size) for g in gens], axis=1)
        for j in range(size):
            e = np.abs(psis) ** 2 @ d
            p = 2.0 * gamma * dt * e
            if np.any(p > p_guard):
                return 1
            jumping = uniforms[j] < p
            if jumping.any():
                dropped = np.zeros_like(psis[jumping])
                dropped[:, 1:] = c * psis[jumping, :-1]
                dropped /= np.linalg.norm(dropped, axis=1)[:, None]
                psis[jumping] = dropped
                if jump_lists is not None:
                    t = t0 + (i + 1) * dt
                    for b in np.nonzero(jumping)[0]:
                        jump_lists[b].append(t)
            # drift on every step, including jump steps (see jump_chunk)
            k1 = rhs(psis)
            k2 = rhs(psis + 0.5 * dt * k1)
            k3 = rhs(psis + 0.5 * dt * k2)
            k4 = rhs(psis + dt * k3)
            stepped = psis + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            stepped /= np.linalg.norm(stepped, axis=1)[:, None]
            psis[:] = stepped
            i += 1
            if stride > 0 and i % stride == 0:
                z = np.sum(c * psis[:, :-1].conj() * psis[:, 1:], axis=1)
                mags_out[:, r, 0] = z.real * inv_j
                mags_out[:, r, 1] = z.imag * inv_j
                mags_out[:, r, 2] = (np.abs(psis) ** 2 @ jzd) * inv_j
                r += 1
    return 0


# ---------------------------------------------------------------------------
# homodyne unraveling
# ---------------------------------------------------------------------------

def homodyne_chunk(bit_generator, psi, c, d, jzd, omega, gamma, dt, n_steps,
                   stride, inv_j, mags_out, current_out, norm_guard):
    gen = _gen(bit_generator)
    record_current = current_out.shape[0] > 0
    sq2g = np.sqrt(2.0 * gamma)
    sqdt = np.sqrt(dt)
    i = 0
    r = 0
    y = np.empty_like(psi)
    hx = np.empty_like(psi)
    for size in _blocks(n_steps):
        noise = gen.standard_normal(size)
        for j in range(size):
            y[0] = 0.0
            y[1:] = c * psi[:-1]
            x = 2.0 * np.real(psi.conj() @ y)
            g = noise[j]
            dw = sqdt * g
            hx[:-1] = c * psi[1:]
            hx[-1] = 0.0
            hx[1:] += c * psi[:-1]
            new = psi + (
                -0.5j * omega * hx
                - gamma * (d * psi - x * y + 0.25 * x * x * psi)
            ) * dt + sq2g * (y - 0.5 * x * psi) * dw
            nrm = np.linalg.norm(new)
            if not (abs(nrm - 1.0) < norm_guard):  # also catches nan
                return 1
            psi[:] = new / nrm
            if record_current:
                current_out[i] = sq2g * x + g / sqdt
            i += 1
            if stride > 0 and i % stride == 0:
                mags_out[r, 0], mags_out[r, 1], mags_out[r, 2] = _mags(
                    psi, c, jzd, inv_j
                )
                r += 1
    return 0


def homodyne_chunk_batch(bit_generators, psis, c, d, jzd, omega, gamma, dt,
                         n_steps, stride, inv_j, mags_out, norm_guard):
    """Lockstep homodyne chunk over psis.shape[0] trajectories (no current)."""
    gens = [_gen(bg) for bg in bit_generators]
    sq2g = np.sqrt(2.0 * gamma)
    sqdt = np.sqrt(dt)
    i = 0
    r = 0
    y = np.empty_like(psis)
    hx = np.empty_like(psis)
    for size in _blocks(n_steps):
        noise = np.stack([g.standard_normal(size) for g in gens], axis=1)
        for j in range(size):
            y[:, 0] = 0.0
            y[:, 1:] = c * psis[:, :-1]
            x = 2.0 * np.real(np.sum(psis.conj() * y, axis=1))[:, None]
            dw = sqdt * noise[j][:, None]
            hx[:, :-1] = c * psis[:, 1:]
            hx[:, -1] = 0.0
            hx[:, 1:] += c * psis[:, :-1]
            new = psis + (
                -0.5j * omega * hx
                - gamma * (d * psis - x * y + 0.25 * x * x * psis)
            ) * dt + sq2g * (y - 0.5 * x * psis) * dw
            nrm = np.linalg.norm(new, axis=1)
            if not np.all(np.abs(nrm - 1.0) < norm_guard):  # also catches nan
                return 1
            psis[:] = new / nrm[:, None]
            i += 1
            if stride > 0 and i % stride == 0:
                z = np.sum(c * psis[:, :-1].conj() * psis[:, 1:], axis=1)
                mags_out[:, r, 0] = z.real * inv_j
                mags_out[:, r, 1] = z.imag * inv_j
                mags_out[:, r, 2] = (np.abs(psis) ** 2 @ jzd) * inv_j
                r += 1
    return 0


def homodyne_dense_chunk(bit_generator, psi, a_op, a_dag, h_op, c, jzd,
                         gamma, dt, n_steps, stride, inv_j, mags_out,
                         xscaled_out, current_out, xscale, norm_guard):
    gen = _gen(bit_generator)
    record_current = current_out.shape[0] > 0
    record_x = xscaled_out.shape[0] > 0
    sq2g = np.sqrt(2.0 * gamma)
    sqdt = np.sqrt(dt)
    i = 0
    r = 0
    for size in _blocks(n_steps):
        noise = gen.standard_normal(size)
        for j in range(size):
            y = a_op @ psi
            hpsi = h_op @ psi
            x = 2.0 * np.real(psi.conj() @ y)
            g = noise[j]
            dw = sqdt * g
            new = psi + (
                -1j * hpsi - gamma * (a_dag @ y - x * y + 0.25 * x * x * psi)
            ) * dt + sq2g * (y - 0.5 * x * psi) * dw
            nrm = np.linalg.norm(new)
            if not (abs(nrm - 1.0) < norm_guard):  # also catches nan
                return 1
            psi[:] = new / nrm
            if record_current:
                current_out[i] = sq2g * x + g / sqdt
            i += 1
            if stride > 0 and i % stride == 0:
                mags_out[r, 0], mags_out[r, 1], mags_out[r, 2] = _mags(
                    psi, c, jzd, inv_j
                )
                if record_x:
                    # recompute from the updated state; x above is pre-step
                    xscaled_out[r] = 2.0 * np.real(psi.conj() @ (a_op @ psi)) \
                        * xscale
                r += 1
    return 0
