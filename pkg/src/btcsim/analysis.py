"""Trajectory analysis: slip events, lifetime scaling, spectra, dwells.

Below and at threshold the conditioned magnetization m_y dwells near its
locked value and occasionally slips through a full revolution.  Slips
are detected with a hysteresis rule (cross below ``threshold`` while
armed, re-arm at ``rearm``), the mean time between slips defines the
metastable lifetime tau, and tau(N) is summarized by a log-log power-law
fit.  Spectral and dwell statistics characterize the oscillating phase
above threshold.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .spinops import CollectiveSpinSystem, magnetization, spin_coherent_state
from .unravel import P_GUARD, BinnedSignal, default_jump_dt
from .util import NumericsError

__all__ = [
    "EventSeries",
    "detect_events",
    "HysteresisDetector",
    "PowerLawFit",
    "fit_power_law",
    "TauScalingResult",
    "tau_scaling",
    "count_spectrum",
    "DwellStats",
    "dwell_stats",
]

THRESHOLD = 0.8
REARM = 0.9
BURN_IN = 50.0
MIN_RELIABLE_EVENTS = 10


@dataclass
class EventSeries:
    """Detected slip times for one trajectory (burn-in already applied)."""

    times: np.ndarray
    threshold: float
    rearm: float
    burn_in: float
    t_final: float

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def reliable(self) -> bool:
        return self.n_events >= MIN_RELIABLE_EVENTS

    def tau(self) -> float:
        """Mean gap between successive events (needs >= 2 events)."""
        if self.n_events < 2:
            raise ValueError("tau needs at least two events")
        return float(np.mean(np.diff(self.times)))


class HysteresisDetector:
    """Streaming hysteresis detector over chunked, uniformly sampled y(t).

    The detector is armed while y has visited ``rearm`` since the last
    event; an event fires at the first sample strictly below
    ``threshold`` after a sample at or above it.  Events at or before
    ``burn_in`` are dropped (the state machine still advances).  Feed
    consecutive chunks to :meth:`update`; sample i of the first chunk is
    at time t0 + (i + 1) dt when ``first_sample_index`` = 1.

    With a ``confirm`` level (confirm < threshold) a crossing is only a
    candidate: it commits, timestamped at the crossing, once y reaches
    ``confirm`` before re-arming, and is discarded if y re-arms first.
    This separates completed excursions from shallow dips that graze the
    threshold and immediately recover.
    """

    def __init__(self, threshold: float, rearm: float, dt: float,
                 burn_in: float, y0: float, first_sample_index: int = 1,
                 confirm: float | None = None):
        if not threshold < rearm:
            raise ValueError("need threshold < rearm for hysteresis")
        if confirm is not None and not confirm < threshold:
            raise ValueError("need confirm < threshold")
        self.threshold = threshold
        self.rearm = rearm
        self.confirm = confirm
        self.dt = dt
        self.burn_in = burn_in
        self.armed = bool(y0 >= rearm)
        self.pending = False
        self.pending_time = 0.0
        self.yprev = float(y0)
        self.next_index = first_sample_index
        self.times: list[float] = []

    def update(self, values: np.ndarray) -> None:
        y = np.asarray(values, dtype=float)
        n = len(y)
        if n == 0:
            return
        prev = np.concatenate([[self.yprev], y[:-1]])
        down = np.nonzero((prev >= self.threshold) & (y < self.threshold))[0]
        pos = 0
        while pos < n:
            if self.armed:
                nxt = down[np.searchsorted(down, pos)] if (
                    np.searchsorted(down, pos) < len(down)
                ) else None
                if nxt is None:
                    break
                t = (self.next_index + nxt) * self.dt
                self.armed = False
                if t > self.burn_in:
                    if self.confirm is None:
                        self.times.append(t)
                    else:
                        self.pending = True
                        self.pending_time = t
                pos = nxt + 1
            elif self.pending:
                # first of: confirmation depth reached, or re-arm (discard)
                seg = y[pos:]
                hit = (seg <= self.confirm) | (seg >= self.rearm)
                rel = int(np.argmax(hit))
                if not hit[rel]:
                    break
                self.pending = False
                if seg[rel] <= self.confirm:
                    self.times.append(self.pending_time)
                else:
                    self.armed = True
                pos = pos + rel + 1
            else:
                above = y[pos:] >= self.rearm
                rel = int(np.argmax(above))
                if not above[rel]:
                    break
                self.armed = True
                pos = pos + rel + 1
        self.yprev = float(y[-1])
        self.next_index += n


def detect_events(
    values: np.ndarray,
    dt: float,
    threshold: float = THRESHOLD,
    rearm: float = REARM,
    burn_in: float = 0.0,
    confirm: float | None = None,
) -> EventSeries:
    """Detect slips on a uniformly sampled signal.

    values[0] is the initial sample at t = 0 and seeds the detector
    state; events are reported at i * dt for the first below-threshold
    sample i of each slip.  ``confirm`` (optional) requires the
    excursion to reach that level before re-arming for the slip to
    count.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise ValueError("values must be a 1-d signal with >= 2 samples")
    det = HysteresisDetector(threshold, rearm, dt, burn_in, values[0],
                             confirm=confirm)
    det.update(values[1:])
    return EventSeries(
        times=np.array(det.times),
        threshold=threshold,
        rearm=rearm,
        burn_in=burn_in,
        t_final=(len(values) - 1) * dt,
    )


@dataclass
class PowerLawFit:
    """Least-squares power law y = amplitude * x**exponent in log-log."""

    exponent: float
    amplitude: float
    stderr: float
    n_points: int


def fit_power_law(x: np.ndarray, y: np.ndarray) -> PowerLawFit:
    """Unweighted log-log fit; stderr is from the residual covariance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 4:
        raise ValueError("power-law fit needs >= 4 points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    coeffs, cov = np.polyfit(np.log(x), np.log(y), 1, cov=True)
    return PowerLawFit(
        exponent=float(coeffs[0]),
        amplitude=float(np.exp(coeffs[1])),
        stderr=float(np.sqrt(cov[0, 0])),
        n_points=len(x),
    )


@dataclass
class TauScalingResult:
    """Lifetime-versus-size summary: per-size rows plus the log-log fit.

    fit is None when fewer than 4 sizes are reliable.
    """

    rows: list[dict]
    fit: PowerLawFit | None
    params: dict = field(default_factory=dict)


class _PhaseStream:
    """One persistent phase-model realization with inline detection."""

    def __init__(self, index, master_seed, phi0, omega, kappa, n_atoms, dt,
                 threshold, rearm, confirm, burn_in_steps):
        self.bg = np.random.PCG64(master_seed + index)
        self.phi = float(phi0)
        self.armed = np.sin(phi0) >= rearm
        self.pending = False
        self.pending_time = 0.0
        self.yprev = float(np.sin(phi0))
        self.offset = 0
        self.times: list[float] = []
        conf = math.nan if confirm is None else float(confirm)
        self.args = (omega, kappa, n_atoms, dt, threshold, rearm, conf,
                     burn_in_steps)

    def extend(self, n_steps: int) -> None:
        (omega, kappa, n_atoms, dt, threshold, rearm, conf,
         burn_in_steps) = self.args
        cap = max(1024, int(n_steps * dt / 2.0))
        buf = np.empty(cap)
        (n_ev, self.phi, self.armed, self.pending, self.pending_time,
         self.yprev, overflow) = kernels.phase_events(
            self.bg, self.phi, omega, kappa, n_atoms, dt, n_steps,
            threshold, rearm, conf, burn_in_steps, self.offset, self.armed,
            self.pending, self.pending_time, self.yprev, buf,
        )
        if overflow:
            raise NumericsError("event buffer overflow: events denser than 2/kappa")
        self.times.extend(buf[:n_ev].tolist())
        self.offset += n_steps


class _JumpStream:
    """One persistent quantum-jump realization with streaming detection."""

    def __init__(self, index, master_seed, system, dt, stride, threshold,
                 rearm, confirm, burn_in):
        self.bg = np.random.PCG64(master_seed ^ index)
        self.psi = spin_coherent_state(system, np.pi / 2, np.pi / 2)
        self.system = system
        self.dt = dt
        self.stride = stride
        y0 = magnetization(system, self.psi)[1]
        self.detector = HysteresisDetector(
            threshold, rearm, stride * dt, burn_in, y0, confirm=confirm
        )

    def extend(self, n_steps: int) -> None:
        system = self.system
        rows = n_steps // self.stride
        mags = np.empty((rows, 3))
        buf = np.empty(n_steps)
        _, status = kernels.jump_chunk(
            self.bg, self.psi, system.ladder, system.jpjm_diag,
            system.jz_diag, system.omega, system.kappa / system.N, self.dt,
            n_steps, self.stride, 1.0 / system.j, mags, buf, 0.0, P_GUARD,
        )
        if status:
            raise NumericsError(f"jump probability guard tripped at dt = {self.dt}")
        self.detector.update(mags[:, 1])

    @property
    def times(self) -> list[float]:
        return self.detector.times


def _pooled_tau(streams) -> tuple[float, float, int, int]:
    gaps = []
    n_events = 0
    for st in streams:
        times = np.asarray(st.times)
        n_events += len(times)
        if len(times) >= 2:
            gaps.append(np.diff(times))
    if not gaps:
        raise NumericsError("no event gaps collected; extend the runs")
    gaps = np.concatenate(gaps)
    tau = float(np.mean(gaps))
    stderr = float(np.std(gaps, ddof=1) / math.sqrt(len(gaps))) if len(gaps) > 1 else math.inf
    return tau, stderr, n_events, len(gaps)


def tau_scaling(
    model: str,
    n_values,
    omega: float,
    kappa: float = 1.0,
    events_target: int = 10000,
    master_seed: int = 0,
    workers: int = 1,
    threshold: float = THRESHOLD,
    rearm: float = REARM,
    burn_in: float = BURN_IN,
    confirm: float | None | str = "auto",
    phi0: float = np.pi / 2,
    dt: float | None = None,
    streams: int | None = None,
    round_t: float | None = None,
    max_rounds: int = 400,
) -> TauScalingResult:
    """Metastable lifetime tau versus system size with a power-law fit.

    model 'phase' runs the phase Langevin equation (noise 2/N, stream i
    seeded master_seed + i); model 'jump' runs quantum-jump trajectories
    from the transverse coherent state (stream i seeded master_seed ^ i).
    Events are m_y slips below ``threshold`` with hysteresis; the first
    ``burn_in`` of every stream is excluded.  A fixed set of persistent
    streams per size is extended in rounds of ``round_t`` until at least
    ``events_target`` events are pooled; tau is the pooled mean gap.

    ``confirm`` 'auto' resolves per model.  Phase-model slips are full
    revolutions, so a crossing only counts once m_y reaches -0.5: the
    shallow barrier recrossings that dip past the threshold and climb
    straight back are fluctuation noise with the opposite size trend,
    and at small N they dominate the raw crossing rate.  Conditioned
    quantum-jump trajectories at accessible sizes rarely swing that
    deep, so there the armed crossings themselves are the events and
    'auto' disables confirmation.

    Sizes with fewer than 10 events are marked unreliable and excluded
    from the fit.  Results are independent of ``workers``.
    """
    if model not in ("phase", "jump"):
        raise ValueError(f"model must be 'phase' or 'jump', got {model!r}")
    if isinstance(confirm, str):
        if confirm != "auto":
            raise ValueError(f"confirm must be a level, None or 'auto', "
                             f"got {confirm!r}")
        confirm = -0.5 if model == "phase" else None
    n_values = [float(n) for n in n_values]
    if sorted(n_values) != n_values:
        raise ValueError("n_values must be increasing")
    rows = []
    for n_atoms in n_values:
        if model == "phase":
            step = dt if dt is not None else 1e-3 / kappa
            n_streams = streams if streams is not None else 64
            per_round = round_t if round_t is not None else 2000.0 / kappa
            burn_steps = round(burn_in / step)
            pool = [
                _PhaseStream(i, master_seed, phi0, omega, kappa, n_atoms,
                             step, threshold, rearm, confirm, burn_steps)
                for i in range(n_streams)
            ]
        else:
            if int(n_atoms) != n_atoms:
                raise ValueError("jump model needs integer sizes")
            system = CollectiveSpinSystem(int(n_atoms), omega, kappa)
            step = dt if dt is not None else default_jump_dt(system)
            stride = max(1, round(0.01 / (kappa * step)))
            n_streams = streams if streams is not None else 16
            per_round = round_t if round_t is not None else 500.0 / kappa
            pool = [
                _JumpStream(i, master_seed, system, step, stride, threshold,
                            rearm, confirm, burn_in)
                for i in range(n_streams)
            ]
        round_steps = round(per_round / step)
        if model == "jump":
            stride = pool[0].stride
            round_steps = (round_steps // stride) * stride
        total = 0
        rounds = 0
        while total < events_target:
            if rounds >= max_rounds:
                raise NumericsError(
                    f"n_atoms = {n_atoms}: {total} events after {rounds} rounds; "
                    "events too rare for this budget"
                )
            _extend_all(pool, round_steps, workers, model)
            total = sum(len(st.times) for st in pool)
            rounds += 1
        tau, stderr, n_events, n_gaps = _pooled_tau(pool)
        rows.append(
            {
                "n_atoms": n_atoms,
                "tau": tau,
                "tau_stderr": stderr,
                "n_events": n_events,
                "n_gaps": n_gaps,
                "total_time": rounds * per_round * n_streams,
                "reliable": n_events >= MIN_RELIABLE_EVENTS,
            }
        )
    usable = [r for r in rows if r["reliable"]]
    fit = None
    if len(usable) >= 4:
        fit = fit_power_law(
            [r["n_atoms"] for r in usable], [r["tau"] * kappa for r in usable]
        )
    return TauScalingResult(
        rows=rows,
        fit=fit,
        params={
            "model": model, "omega": omega, "kappa": kappa,
            "events_target": events_target, "master_seed": master_seed,
            "threshold": threshold, "rearm": rearm, "burn_in": burn_in,
            "confirm": confirm,
        },
    )


def _extend_all(pool, round_steps, workers, model):
    if model == "phase" and kernels.BACKEND == "numpy":
        # lockstep batch: all streams share offsets and step counts
        first = pool[0]
        (omega, kappa, n_atoms, dt, threshold, rearm, conf,
         burn_steps) = first.args
        phi = np.array([st.phi for st in pool])
        armed = np.array([st.armed for st in pool])
        pending = np.array([st.pending for st in pool])
        pending_time = np.array([st.pending_time for st in pool])
        yprev = np.array([st.yprev for st in pool])
        events = [st.times for st in pool]
        kernels.phase_events_batch(
            [st.bg for st in pool], phi, omega, kappa, n_atoms, dt,
            round_steps, threshold, rearm, conf, burn_steps, first.offset,
            armed, pending, pending_time, yprev, events,
        )
        for i, st in enumerate(pool):
            st.phi = float(phi[i])
            st.armed = bool(armed[i])
            st.pending = bool(pending[i])
            st.pending_time = float(pending_time[i])
            st.yprev = float(yprev[i])
            st.offset += round_steps
        return
    if model == "jump" and kernels.BACKEND == "numpy":
        first = pool[0]
        system = first.system
        psis = np.stack([st.psi for st in pool])
        rows = round_steps // first.stride
        mags = np.empty((len(pool), rows, 3))
        status = kernels.jump_chunk_batch(
            [st.bg for st in pool], psis, system.ladder, system.jpjm_diag,
            system.jz_diag, system.omega, system.kappa / system.N, first.dt,
            round_steps, first.stride, 1.0 / system.j, mags, None, 0.0,
            P_GUARD,
        )
        if status:
            raise NumericsError(f"jump probability guard tripped at dt = {first.dt}")
        for i, st in enumerate(pool):
            st.psi[:] = psis[i]
            st.detector.update(mags[i, :, 1])
        return
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as tpe:
            list(tpe.map(lambda st: st.extend(round_steps), pool))
    else:
        for st in pool:
            st.extend(round_steps)


def count_spectrum(
    binned: BinnedSignal, big_omega: float
) -> tuple[np.ndarray, np.ndarray]:
    """DFT magnitudes of the mean-removed count signal.

    Frequencies are returned in units of ``big_omega`` (the semiclassical
    revolution rate sqrt(omega^2 - kappa^2)), so a time-crystalline
    signal peaks at 1.  Requires at least 2**10 uniform samples and a
    positive big_omega.

    Returns (freq_over_omega, magnitude) for the non-negative
    frequencies.
    """
    if big_omega <= 0:
        raise ValueError("big_omega must be positive (above-threshold drive)")
    values = np.asarray(binned.values, dtype=float)
    if len(values) < 2**10:
        raise ValueError(f"need >= {2**10} samples, got {len(values)}")
    dts = np.diff(binned.times)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        raise ValueError("binned signal must be uniformly sampled")
    spectrum = dft_magnitudes(values - values.mean())
    n = len(values)
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=dts[0]) / big_omega
    half = n // 2 + 1
    return freqs, spectrum[:half]


def dft_magnitudes(values: np.ndarray) -> np.ndarray:
    """|DFT| with the plain unnormalized convention.

    Satisfies Parseval in the form sum |F_k|^2 = n sum |v_i|^2.
    """
    return np.abs(np.fft.fft(np.asarray(values, dtype=float)))


@dataclass
class DwellStats:
    """Sign statistics of a scalar signal after burn-in."""

    positive_fraction: float
    switch_count: int
    mean_dwell: float
    total_time: float


def dwell_stats(values: np.ndarray, dt: float, burn_in: float = 0.0) -> DwellStats:
    """Fraction of time positive, sign switches, and mean dwell length.

    Measures spontaneous symmetry breaking of m_x in single trajectories:
    long dwells at one sign with rare switches give positive_fraction far
    from 1/2 on ergodic-time scales, while the ensemble average stays 0.
    """
    values = np.asarray(values, dtype=float)
    start = round(burn_in / dt)
    sel = values[start:]
    if len(sel) < 2:
        raise ValueError("signal too short after burn-in")
    signs = sel > 0
    switches = int(np.count_nonzero(signs[1:] != signs[:-1]))
    total = len(sel) * dt
    return DwellStats(
        positive_fraction=float(np.mean(signs)),
        switch_count=switches,
        mean_dwell=total / (switches + 1),
        total_time=total,
    )
