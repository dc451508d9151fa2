"""Event detection, lifetime scaling, spectra and dwell statistics."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from btcsim import (
    BinnedSignal,
    detect_events,
    dwell_stats,
    fit_power_law,
    simulate_phase,
    tau_scaling,
)
from btcsim import _kernels as kernels
from btcsim.analysis import HysteresisDetector, count_spectrum, dft_magnitudes


def _pulse(depth, n=4000, dt=0.01):
    """m_y-like signal at 1 with two square dips to ``depth``."""
    t = np.arange(n) * dt
    y = np.ones(n)
    y[(t > 10) & (t < 12)] = depth
    y[(t > 25) & (t < 27)] = depth
    return y, dt


def test_constant_signal_has_no_events():
    ev = detect_events(np.ones(1000), 0.01)
    assert ev.n_events == 0
    assert ev.t_final == pytest.approx(9.99)


def test_square_pulse_gives_one_event_per_dip():
    y, dt = _pulse(0.5)
    ev = detect_events(y, dt)
    assert ev.n_events == 2
    # timestamped at the first below-threshold sample of each dip
    assert_allclose(ev.times, [10.01, 25.01], atol=1e-12)
    assert ev.threshold == 0.8
    assert ev.rearm == 0.9


def test_no_rearm_no_second_event():
    y, dt = _pulse(0.5)
    t = np.arange(len(y)) * dt
    y[(t >= 12) & (t <= 25)] = 0.85
    # recovery only reaches 0.85 < rearm, so the second dip is silent
    ev = detect_events(y, dt)
    assert ev.n_events == 1


def test_confirmation_level_rejects_shallow_dips():
    y, dt = _pulse(0.5)
    assert detect_events(y, dt, confirm=-0.5).n_events == 0
    deep, _ = _pulse(-0.7)
    ev = detect_events(deep, dt, confirm=-0.5)
    assert ev.n_events == 2
    assert_allclose(ev.times, [10.01, 25.01], atol=1e-12)  # crossing time
    with pytest.raises(ValueError):
        detect_events(y, dt, confirm=0.85)  # confirm >= threshold


def test_burn_in_drops_early_events_but_advances_state():
    y, dt = _pulse(0.5)
    ev = detect_events(y, dt, burn_in=15.0)
    assert ev.n_events == 1
    assert ev.times[0] == pytest.approx(25.01)


def test_streaming_chunks_match_offline():
    rng = np.random.default_rng(4)
    y = np.clip(np.cumsum(rng.normal(scale=0.1, size=20000)) % 4 - 1.5,
                -1.0, 1.0)
    dt = 0.01
    for confirm in (None, -0.3):
        ref = detect_events(y, dt, confirm=confirm)
        det = HysteresisDetector(0.8, 0.9, dt, 0.0, y[0], confirm=confirm)
        pos = 1
        for size in (1, 7, 1000, 4, 12000, len(y)):  # ragged chunking
            det.update(y[pos:pos + size])
            pos += size
            if pos >= len(y):
                break
        assert len(det.times) == ref.n_events
        assert_allclose(det.times, ref.times, atol=1e-12)


def test_inline_kernel_detection_matches_offline():
    # the tau pipeline detects inside the stepping kernel; the offline
    # detector on the recorded path must see exactly the same events
    n_steps, dt, n_atoms = 400_000, 1e-3, 150.0
    out = np.empty(n_steps)
    kernels.phase_path(np.random.PCG64(99), np.pi / 2, 1.0, 1.0, n_atoms,
                       dt, n_steps, 1, out)
    y = np.concatenate([[1.0], np.sin(out)])
    for confirm in (None, -0.5):
        ref = detect_events(y, dt, confirm=confirm)
        buf = np.empty(4096)
        conf = math.nan if confirm is None else confirm
        n_ev, *_ = kernels.phase_events(
            np.random.PCG64(99), np.pi / 2, 1.0, 1.0, n_atoms, dt, n_steps,
            0.8, 0.9, conf, 0, 0, True, False, 0.0, 1.0, buf)
        assert n_ev == ref.n_events
        assert_allclose(buf[:n_ev], ref.times, atol=1e-12)


def test_events_coincide_with_full_phase_revolutions():
    # at threshold drive the unwrapped phase descends one 2 pi step per
    # slip; confirmed events must count those steps exactly
    path = simulate_phase(np.pi / 2, 200, 1.0, 1.0, t_final=4000.0,
                          dt=1e-3, seed=21)
    y = np.sin(path.phi)
    ev = detect_events(y, 1e-3, confirm=-0.5)
    level0 = math.asin(0.8)
    n_revs = int(np.ceil((level0 - path.phi.min()) / (2 * np.pi)))
    assert ev.n_events == n_revs
    # each event sits at a crossing of its own shifted threshold level
    for k, t in enumerate(ev.times):
        idx = round(t / 1e-3)
        assert path.phi[idx] < level0 - 2 * np.pi * k + 1e-9
        assert path.phi[idx] > level0 - 2 * np.pi * (k + 1)


def test_event_times_scale_with_sample_spacing():
    y, dt = _pulse(0.5)
    a = detect_events(y, dt)
    b = detect_events(y, 2 * dt)
    assert_allclose(b.times, 2 * a.times, atol=1e-12)
    assert b.t_final == pytest.approx(2 * a.t_final)


def test_rearm_level_barely_moves_tau():
    # with confirmation, re-arm only gates duplicate counting, so tau is
    # insensitive to the exact level
    taus = {}
    for rearm in (0.85, 0.90, 0.95):
        res = tau_scaling("phase", [100.0], 1.0, events_target=2000,
                          master_seed=3, rearm=rearm)
        assert res.fit is None  # single size: no power law
        taus[rearm] = res.rows[0]["tau"]
    base = taus[0.90]
    for rearm, tau in taus.items():
        assert abs(tau - base) / base < 0.03


def test_fit_power_law_recovers_exact_law():
    x = np.array([3.0, 7.0, 20.0, 55.0, 140.0])
    fit = fit_power_law(x, 2.5 * x**0.75)
    assert fit.exponent == pytest.approx(0.75, abs=1e-12)
    assert fit.amplitude == pytest.approx(2.5, rel=1e-12)
    assert fit.stderr < 1e-12
    assert fit.n_points == 5


def test_fit_power_law_validation():
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3], [1, 2, 3])  # too few points
    with pytest.raises(ValueError):
        fit_power_law([1, 2, 3, -4], [1, 2, 3, 4])


def test_dft_parseval():
    rng = np.random.default_rng(8)
    v = rng.normal(size=4096)
    mags = dft_magnitudes(v)
    lhs = np.sum(mags**2)
    rhs = len(v) * np.sum(v**2)
    assert abs(lhs - rhs) < 1e-8 * rhs


def test_count_spectrum_peaks_at_planted_frequency():
    dt = 0.01
    t = np.arange(20_000) * dt
    nu = 1.1
    rng = np.random.default_rng(5)
    values = 10.0 + 3.0 * np.sin(nu * t) + rng.normal(scale=0.3, size=len(t))
    binned = BinnedSignal(times=t, values=values, window=0.5, mode="sliding")
    freqs, mags = count_spectrum(binned, big_omega=nu)
    peak = freqs[1:][np.argmax(mags[1:])]
    df = freqs[1] - freqs[0]
    assert abs(peak - 1.0) <= df + 1e-12
    assert len(freqs) == len(mags) == len(t) // 2 + 1


def test_count_spectrum_validation():
    t = np.arange(2048) * 0.01
    good = BinnedSignal(times=t, values=np.ones_like(t), window=0.5,
                        mode="sliding")
    with pytest.raises(ValueError):
        count_spectrum(good, big_omega=0.0)
    short = BinnedSignal(times=t[:100], values=np.ones(100), window=0.5,
                         mode="sliding")
    with pytest.raises(ValueError):
        count_spectrum(short, big_omega=1.0)
    ragged = BinnedSignal(times=np.cumsum(np.abs(np.sin(t)) + 0.01),
                          values=np.ones_like(t), window=0.5, mode="sliding")
    with pytest.raises(ValueError):
        count_spectrum(ragged, big_omega=1.0)


def test_dwell_stats_hand_example():
    dt = 0.5
    v = np.array([1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0])
    st = dwell_stats(v, dt)
    assert st.positive_fraction == pytest.approx(5 / 8)
    assert st.switch_count == 2
    assert st.mean_dwell == pytest.approx(8 * dt / 3)
    assert st.total_time == pytest.approx(4.0)
    late = dwell_stats(v, dt, burn_in=2.5)
    assert late.positive_fraction == pytest.approx(1.0)
    assert late.switch_count == 0


def test_tau_scaling_worker_independence_and_params():
    kwargs = dict(events_target=150, master_seed=7, streams=8,
                  round_t=500.0)
    a = tau_scaling("phase", [60, 80, 100, 120], 1.0, workers=1, **kwargs)
    b = tau_scaling("phase", [60, 80, 100, 120], 1.0, workers=3, **kwargs)
    for ra, rb in zip(a.rows, b.rows):
        assert ra == rb
    assert a.fit.exponent == b.fit.exponent
    assert a.params["confirm"] == -0.5  # 'auto' resolved for the phase model
    assert all(r["reliable"] for r in a.rows)
    assert all(r["n_events"] >= 150 for r in a.rows)


def test_tau_scaling_validation():
    with pytest.raises(ValueError):
        tau_scaling("drift", [10, 20, 40, 80], 1.0)
    with pytest.raises(ValueError):
        tau_scaling("phase", [80, 40, 20, 10], 1.0)
    with pytest.raises(ValueError):
        tau_scaling("jump", [10.5, 20, 40, 80], 1.0, events_target=1)
    with pytest.raises(ValueError):
        tau_scaling("phase", [10, 20, 40, 80], 1.0, confirm="deep")


def test_two_halves_of_a_stream_agree_on_tau():
    path = simulate_phase(np.pi / 2, 120, 1.0, 1.0, t_final=30000.0,
                          dt=1e-3, seed=2, record_dt=0.01)
    ev = detect_events(np.sin(path.phi), 0.01, burn_in=50.0, confirm=-0.5)
    gaps = np.diff(ev.times)
    half = len(gaps) // 2
    a, b = gaps[:half], gaps[half:]
    se = math.hypot(a.std(ddof=1) / math.sqrt(len(a)),
                    b.std(ddof=1) / math.sqrt(len(b)))
    assert abs(a.mean() - b.mean()) < 3 * se
