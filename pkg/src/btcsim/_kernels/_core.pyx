"""Compiled stochastic-integration kernels.

Every kernel draws variates one per time step straight from a numpy
``BitGenerator`` through the C API, so a given (seed, dt, n_steps)
combination consumes exactly the same stream as the pure-numpy fallback
in ``_fallback.py``.  Trajectory state is advanced in place, which lets
drivers chain chunked calls without touching the stream.

Recording convention shared with the fallback: output row r holds the
state after step (r + 1) * stride; the caller owns the initial sample.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport fabs, sin, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal,
    random_standard_uniform,
)

cnp.import_array()


cdef bitgen_t *_get_bitgen(object bit_generator) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )


# ---------------------------------------------------------------------------
# phase model
# ---------------------------------------------------------------------------

def phase_path(object bit_generator, double phi0, double omega, double kappa,
               double noise_n, double dt, Py_ssize_t n_steps,
               Py_ssize_t stride, double[::1] out):
    """Euler-Maruyama path of dphi = (-omega + kappa sin phi) dt + noise.

    The noise increment is sqrt(2 dt / noise_n) g with g standard normal
    (one draw per step); noise_n = inf turns the noise off.  Records phi
    after steps stride, 2 stride, ...; ``out`` must hold n_steps // stride
    values.  Returns the final phi.
    """
    cdef bitgen_t *bg = _get_bitgen(bit_generator)
    cdef double phi = phi0
    cdef double amp = sqrt(2.0 * dt / noise_n)
    cdef Py_ssize_t i, r = 0
    with bit_generator.lock, nogil:
        for i in range(n_steps):
            phi += (-omega + kappa * sin(phi)) * dt \
                + amp * random_standard_normal(bg)
            if (i + 1) % stride == 0:
                out[r] = phi
                r += 1
    return phi


def phase_events(object bit_generator, double phi0, double omega, double kappa,
                 double noise_n, double dt, Py_ssize_t n_steps,
                 double threshold, double rearm, double confirm,
                 Py_ssize_t burn_in_steps, Py_ssize_t step_offset, bint armed,
                 bint pending, double pending_time, double yprev,
                 double[::1] event_times):
    """Phase-model chunk with inline hysteresis event detection on sin(phi).

    Runs exactly n_steps.  A candidate fires when the detector is armed
    and sin(phi) crosses below ``threshold``; the detector then disarms
    until sin(phi) reaches ``rearm``.  With ``confirm`` set (non-nan) the
    candidate is committed only once the excursion deepens below that
    level before re-arming, since shallow grazes of the threshold are
    not large fluctuations; with confirm nan every candidate commits at
    once.  Events are timestamped at the threshold crossing; candidates
    at global step index (step_offset + i + 1) <= burn_in_steps are
    dropped but still disarm.  Times are absolute, (global step) * dt.

    Returns (n_events, phi_end, armed, pending, pending_time, yprev,
    overflow); overflow is 1 if ``event_times`` filled up early.
    """
    cdef bitgen_t *bg = _get_bitgen(bit_generator)
    cdef double phi = phi0, y
    cdef double amp = sqrt(2.0 * dt / noise_n)
    cdef bint use_confirm = confirm == confirm
    cdef Py_ssize_t i, g, n_ev = 0, cap = event_times.shape[0]
    cdef int overflow = 0
    cdef bint is_armed = armed, is_pending = pending
    with bit_generator.lock, nogil:
        for i in range(n_steps):
            phi += (-omega + kappa * sin(phi)) * dt \
                + amp * random_standard_normal(bg)
            g = step_offset + i + 1
            y = sin(phi)
            if is_armed:
                if yprev >= threshold and y < threshold:
                    is_armed = False
                    if g > burn_in_steps:
                        if use_confirm:
                            is_pending = True
                            pending_time = g * dt
                        else:
                            if n_ev == cap:
                                overflow = 1
                                break
                            event_times[n_ev] = g * dt
                            n_ev += 1
            else:
                if is_pending and y <= confirm:
                    is_pending = False
                    if n_ev == cap:
                        overflow = 1
                        break
                    event_times[n_ev] = pending_time
                    n_ev += 1
                if y >= rearm:
                    is_armed = True
                    is_pending = False
            yprev = y
    return n_ev, phi, is_armed, is_pending, pending_time, yprev, overflow


# ---------------------------------------------------------------------------
# banded state helpers (operators tridiagonal in the Dicke basis)
# ---------------------------------------------------------------------------

cdef inline void _nh_rhs(double complex[::1] inp, double complex[::1] out,
                         const double[::1] c, const double[::1] d,
                         double omega, double gamma, Py_ssize_t dim) nogil:
    # out = -i omega Jx inp - gamma JpJm inp  (all tridiagonal / diagonal)
    cdef Py_ssize_t k
    cdef double complex hx
    for k in range(dim):
        hx = 0
        if k > 0:
            hx = hx + c[k - 1] * inp[k - 1]
        if k < dim - 1:
            hx = hx + c[k] * inp[k + 1]
        out[k] = -1j * omega * 0.5 * hx - gamma * d[k] * inp[k]


cdef inline double _renorm(double complex[::1] psi, Py_ssize_t dim) nogil:
    cdef Py_ssize_t k
    cdef double n2 = 0, nrm
    for k in range(dim):
        n2 += psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
    nrm = sqrt(n2)
    for k in range(dim):
        psi[k] = psi[k] / nrm
    return nrm


cdef inline void _record_mags(double complex[::1] psi, const double[::1] c,
                              const double[::1] jzd, double inv_j,
                              double[:, ::1] mags, Py_ssize_t r,
                              Py_ssize_t dim) nogil:
    # <Jp> = sum_k c_k conj(psi_k) psi_{k+1} = <Jx> + i <Jy>
    cdef Py_ssize_t k
    cdef double re = 0, im = 0, z = 0
    for k in range(dim - 1):
        re += c[k] * (psi[k].real * psi[k + 1].real
                      + psi[k].imag * psi[k + 1].imag)
        im += c[k] * (psi[k].real * psi[k + 1].imag
                      - psi[k].imag * psi[k + 1].real)
    for k in range(dim):
        z += jzd[k] * (psi[k].real * psi[k].real + psi[k].imag * psi[k].imag)
    mags[r, 0] = re * inv_j
    mags[r, 1] = im * inv_j
    mags[r, 2] = z * inv_j


# ---------------------------------------------------------------------------
# quantum-jump unraveling
# ---------------------------------------------------------------------------

def jump_chunk(object bit_generator, double complex[::1] psi,
               const double[::1] c, const double[::1] d, const double[::1] jzd,
               double omega, double gamma, double dt,
               Py_ssize_t n_steps, Py_ssize_t stride, double inv_j,
               double[:, ::1] mags_out, double[::1] jump_times,
               double t0, double p_guard):
    """Advance a quantum-jump trajectory by n_steps, in place.

    Per step: jump with probability p = 2 gamma <JpJm> dt (one uniform
    draw), then a 4th-order Runge-Kutta step of the non-Hermitian drift
    followed by renormalization.  The drift is applied on every step;
    skipping it on jump steps would slow the precession by a factor
    1 - p, a first-order timestep bias.  Jump times are stored as
    t0 + (step + 1) dt.

    Returns (n_jumps, status); status 1 means p exceeded p_guard and the
    chunk stopped early (dt too coarse for this N).
    """
    cdef Py_ssize_t dim = psi.shape[0]
    cdef cnp.ndarray scratch = np.empty((5, dim), dtype=np.complex128)
    cdef double complex[:, ::1] w = scratch
    cdef bitgen_t *bg = _get_bitgen(bit_generator)
    cdef Py_ssize_t i, k, r = 0, nj = 0
    cdef double e, p, u
    cdef int status = 0
    with bit_generator.lock, nogil:
        for i in range(n_steps):
            e = 0
            for k in range(dim):
                e += d[k] * (psi[k].real * psi[k].real
                             + psi[k].imag * psi[k].imag)
            p = 2.0 * gamma * e * dt
            if p > p_guard:
                status = 1
                break
            u = random_standard_uniform(bg)
            if u < p:
                for k in range(dim - 1, 0, -1):
                    psi[k] = c[k - 1] * psi[k - 1]
                psi[0] = 0
                _renorm(psi, dim)
                jump_times[nj] = t0 + (i + 1) * dt
                nj += 1
            _nh_rhs(psi, w[0], c, d, omega, gamma, dim)
            for k in range(dim):
                w[4, k] = psi[k] + 0.5 * dt * w[0, k]
            _nh_rhs(w[4], w[1], c, d, omega, gamma, dim)
            for k in range(dim):
                w[4, k] = psi[k] + 0.5 * dt * w[1, k]
            _nh_rhs(w[4], w[2], c, d, omega, gamma, dim)
            for k in range(dim):
                w[4, k] = psi[k] + dt * w[2, k]
            _nh_rhs(w[4], w[3], c, d, omega, gamma, dim)
            for k in range(dim):
                psi[k] = psi[k] + (dt / 6.0) * (
                    w[0, k] + 2.0 * w[1, k] + 2.0 * w[2, k] + w[3, k]
                )
            _renorm(psi, dim)
            if stride > 0 and (i + 1) % stride == 0:
                _record_mags(psi, c, jzd, inv_j, mags_out, r, dim)
                r += 1
    return nj, status


# ---------------------------------------------------------------------------
# homodyne unraveling, tridiagonal generator
# ---------------------------------------------------------------------------

def homodyne_chunk(object bit_generator, double complex[::1] psi,
                   const double[::1] c, const double[::1] d, const double[::1] jzd,
                   double omega, double gamma, double dt,
                   Py_ssize_t n_steps, Py_ssize_t stride, double inv_j,
                   double[:, ::1] mags_out, double[::1] current_out,
                   double norm_guard):
    """Advance a homodyne trajectory by n_steps, in place.

    Euler-Maruyama step of the norm-preserving diffusive unraveling with
    measurement operator x = Jp + Jm (one normal draw per step), followed
    by explicit renormalization.  When ``current_out`` is non-empty it
    receives the raw photocurrent sqrt(2 gamma) <x> + dW/dt per step.

    Returns status: 0 on success, 1 if the pre-renormalization norm
    drifted from 1 by more than norm_guard (dt too coarse).
    """
    cdef Py_ssize_t dim = psi.shape[0]
    cdef cnp.ndarray scratch = np.empty((2, dim), dtype=np.complex128)
    cdef double complex[:, ::1] w = scratch
    cdef bitgen_t *bg = _get_bitgen(bit_generator)
    cdef Py_ssize_t i, k, r = 0
    cdef bint record_current = current_out.shape[0] > 0
    cdef double x, g, dw, nrm
    cdef double sq2g = sqrt(2.0 * gamma), sqdt = sqrt(dt)
    cdef double complex hx
    cdef int status = 0
    with bit_generator.lock, nogil:
        for i in range(n_steps):
            # w0 = Jm psi;  x = <Jp + Jm> = 2 Re <psi|w0>
            w[0, 0] = 0
            x = 0
            for k in range(dim - 1):
                w[0, k + 1] = c[k] * psi[k]
                x += psi[k + 1].real * w[0, k + 1].real \
                    + psi[k + 1].imag * w[0, k + 1].imag
            x *= 2.0
            g = random_standard_normal(bg)
            dw = sqdt * g
            for k in range(dim):
                hx = 0
                if k > 0:
                    hx = hx + c[k - 1] * psi[k - 1]
                if k < dim - 1:
                    hx = hx + c[k] * psi[k + 1]
                w[1, k] = psi[k] \
                    + (-1j * omega * 0.5 * hx
                       - gamma * (d[k] * psi[k] - x * w[0, k]
                                  + 0.25 * x * x * psi[k])) * dt \
                    + sq2g * (w[0, k] - 0.5 * x * psi[k]) * dw
            nrm = 0
            for k in range(dim):
                nrm += w[1, k].real * w[1, k].real + w[1, k].imag * w[1, k].imag
            nrm = sqrt(nrm)
            if not (fabs(nrm - 1.0) < norm_guard):  # also catches nan
                status = 1
                break
            for k in range(dim):
                psi[k] = w[1, k] / nrm
            if record_current:
                current_out[i] = sq2g * x + g / sqdt
            if stride > 0 and (i + 1) % stride == 0:
                _record_mags(psi, c, jzd, inv_j, mags_out, r, dim)
                r += 1
    return status


# ---------------------------------------------------------------------------
# homodyne unraveling, dense generator (transformed dynamics)
# ---------------------------------------------------------------------------

def homodyne_dense_chunk(object bit_generator, double complex[::1] psi,
                         const double complex[:, ::1] a_op,
                         const double complex[:, ::1] a_dag,
                         const double complex[:, ::1] h_op,
                         const double[::1] c, const double[::1] jzd,
                         double gamma, double dt,
                         Py_ssize_t n_steps, Py_ssize_t stride, double inv_j,
                         double[:, ::1] mags_out, double[::1] xscaled_out,
                         double[::1] current_out, double xscale,
                         double norm_guard):
    """Homodyne step with dense Hamiltonian h_op and dense jump operator a_op.

    Same scheme as ``homodyne_chunk`` with x = <a_op + a_op^dag>; used for
    generators that are not tridiagonal.  Magnetizations are still
    recorded with the bare collective operators (c, jzd).  When
    ``xscaled_out`` is non-empty it receives x * xscale on the recording
    grid.

    Returns status as in ``homodyne_chunk``.
    """
    cdef Py_ssize_t dim = psi.shape[0]
    cdef cnp.ndarray scratch = np.empty((3, dim), dtype=np.complex128)
    cdef double complex[:, ::1] w = scratch
    cdef bitgen_t *bg = _get_bitgen(bit_generator)
    cdef Py_ssize_t i, k, l, r = 0
    cdef bint record_current = current_out.shape[0] > 0
    cdef bint record_x = xscaled_out.shape[0] > 0
    cdef double x, g, dw, nrm
    cdef double sq2g = sqrt(2.0 * gamma), sqdt = sqrt(dt)
    cdef double complex acc_y, acc_h, acc_z
    cdef int status = 0
    with bit_generator.lock, nogil:
        for i in range(n_steps):
            # w0 = a psi, w1 = h psi
            x = 0
            for k in range(dim):
                acc_y = 0
                acc_h = 0
                for l in range(dim):
                    acc_y = acc_y + a_op[k, l] * psi[l]
                    acc_h = acc_h + h_op[k, l] * psi[l]
                w[0, k] = acc_y
                w[1, k] = acc_h
                x += psi[k].real * acc_y.real + psi[k].imag * acc_y.imag
            x *= 2.0
            g = random_standard_normal(bg)
            dw = sqdt * g
            for k in range(dim):
                acc_z = 0
                for l in range(dim):
                    acc_z = acc_z + a_dag[k, l] * w[0, l]
                w[2, k] = psi[k] \
                    + (-1j * w[1, k]
                       - gamma * (acc_z - x * w[0, k]
                                  + 0.25 * x * x * psi[k])) * dt \
                    + sq2g * (w[0, k] - 0.5 * x * psi[k]) * dw
            nrm = 0
            for k in range(dim):
                nrm += w[2, k].real * w[2, k].real + w[2, k].imag * w[2, k].imag
            nrm = sqrt(nrm)
            if not (fabs(nrm - 1.0) < norm_guard):  # also catches nan
                status = 1
                break
            for k in range(dim):
                psi[k] = w[2, k] / nrm
            if record_current:
                current_out[i] = sq2g * x + g / sqdt
            if stride > 0 and (i + 1) % stride == 0:
                _record_mags(psi, c, jzd, inv_j, mags_out, r, dim)
                if record_x:
                    # recompute from the updated state; x above is pre-step
                    x = 0
                    for k in range(dim):
                        acc_y = 0
                        for l in range(dim):
                            acc_y = acc_y + a_op[k, l] * psi[l]
                        x += psi[k].real * acc_y.real \
                            + psi[k].imag * acc_y.imag
                    xscaled_out[r] = 2.0 * x * xscale
                r += 1
    return status
