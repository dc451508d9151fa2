"""Command-line interface.

Subcommands produce CSV tables plus a JSON manifest per output
directory; every stochastic run is fully determined by the resolved
configuration and seed, independent of the worker count.  Exit codes:
0 success, 1 usage error, 2 numerical failure.

A plain-text config file (``key = value`` per line, ``#`` comments) can
preset any long option; explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import _io, analysis, largedev, mastereq, semiclassical, spinops, unravel
from .util import NumericsError

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_grid(text: str) -> np.ndarray:
    """Grid syntax: 'start:stop:step' (inclusive stop) or 'a,b,c'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"bad grid {text!r}")
        n = int(round((stop - start) / step))
        return start + step * np.arange(n + 1)
    return np.array([float(p) for p in text.split(",")])


def _load_config(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags (argparse defaults are None)."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        config = _load_config(args.config)
        unknown = set(config) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key, text in config.items():
            ref = defaults[key]
            if isinstance(ref, bool):
                merged[key] = text.lower() in ("1", "true", "yes")
            elif isinstance(ref, int) and not isinstance(ref, bool):
                merged[key] = int(text)
            elif isinstance(ref, float):
                merged[key] = float(text)
            else:
                merged[key] = text
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _write_record(out, rec: unravel.TrajectoryRecord) -> None:
    _io.write_columns_csv(
        out / "trajectory.csv",
        ["t", "m_x", "m_y", "m_z"],
        [rec.times] + [rec.magnetizations[:, i] for i in range(3)],
    )
    if rec.jump_times is not None:
        _io.write_columns_csv(out / "jumps.csv", ["t"], [rec.jump_times])
    if rec.raw_current is not None:
        times = (np.arange(len(rec.raw_current)) + 1) * rec.current_dt
        _io.write_columns_csv(
            out / "current.csv", ["t", "i_x"], [times, rec.raw_current]
        )
    if rec.xtilde is not None:
        _io.write_columns_csv(
            out / "xtilde.csv", ["t", "x_over_n"], [rec.times, rec.xtilde]
        )


def cmd_steady(args) -> int:
    cfg = _resolve(args, {
        "n": 100, "omega_grid": "0.1:2.0:0.1", "kappa": 1.0,
        "out": "steady_out", "force": False,
    })
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    rows = mastereq.stationary_scan(cfg["n"], _parse_grid(cfg["omega_grid"]),
                                    cfg["kappa"])
    _io.write_csv(
        out / "steady_scan.csv",
        ["n_atoms", "omega_over_kappa", "m_x", "m_y", "m_z", "purity",
         "rmax", "beta"],
        rows,
    )
    _io.write_manifest(out, "steady", cfg)
    print(f"steady: wrote {len(rows)} rows to {out}")
    return 0


def cmd_traj(args) -> int:
    cfg = _resolve(args, {
        "scheme": "jump", "n": 100, "omega": 1.0, "kappa": 1.0,
        "t_final": 50.0, "dt": 0.0, "seed": 0, "theta0": math.pi / 2,
        "phi0": math.pi / 2, "bin_window": 0.5, "skip_current": False,
        "out": "traj_out", "force": False,
    })
    if cfg["scheme"] not in ("jump", "homodyne"):
        raise ValueError(f"scheme must be jump or homodyne, got {cfg['scheme']!r}")
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    system = spinops.CollectiveSpinSystem(cfg["n"], cfg["omega"] * cfg["kappa"],
                                          cfg["kappa"])
    psi0 = spinops.spin_coherent_state(system, cfg["theta0"], cfg["phi0"])
    dt = cfg["dt"] if cfg["dt"] > 0 else None
    if cfg["scheme"] == "jump":
        rec = unravel.jump_trajectory(
            system, psi0, cfg["t_final"], dt=dt, seed=cfg["seed"]
        )
        binned = unravel.bin_counts(
            rec.jump_times, cfg["t_final"], window=cfg["bin_window"]
        )
        _io.write_columns_csv(
            out / "counts.csv", ["t", "count"], [binned.times, binned.values]
        )
    else:
        rec = unravel.homodyne_trajectory(
            system, psi0, cfg["t_final"], dt=dt, seed=cfg["seed"],
            record_current=not cfg["skip_current"],
        )
        if rec.raw_current is not None:
            smooth = unravel.smooth_current(
                rec.raw_current, rec.current_dt, system.N,
                window=cfg["bin_window"],
            )
            _io.write_columns_csv(
                out / "current_smooth.csv", ["t", "i_x_scaled"],
                [smooth.times, smooth.values],
            )
    _write_record(out, rec)
    cfg["dt"] = rec.params["dt"]
    _io.write_manifest(out, "traj", cfg)
    print(f"traj: {cfg['scheme']} run ({system.N} atoms, T = {cfg['t_final']}) in {out}")
    return 0


def cmd_tilt(args) -> int:
    cfg = _resolve(args, {
        "n": 50, "omega_grid": "0.5", "s_grid": "-0.5:0.5:0.05",
        "kappa": 1.0, "skip_k": False, "out": "tilt_out", "force": False,
    })
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    rows = largedev.theta_scan(
        cfg["n"], _parse_grid(cfg["s_grid"]), _parse_grid(cfg["omega_grid"]),
        kappa=cfg["kappa"], compute_k=not cfg["skip_k"],
    )
    _io.write_csv(
        out / "theta_scan.csv",
        ["omega_over_kappa", "s", "theta", "k", "converged", "residual"],
        rows,
    )
    _io.write_manifest(out, "tilt", cfg)
    bad = sum(1 for r in rows if not r["converged"])
    print(f"tilt: {len(rows)} points ({bad} unconverged) in {out}")
    return 0


def cmd_doob(args) -> int:
    cfg = _resolve(args, {
        "n": 30, "omega": 1.5, "kappa": 1.0, "s": -0.1, "t_final": 200.0,
        "dt": 1e-4, "seed": 0, "skip_current": False,
        "out": "doob_out", "force": False,
    })
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    system = spinops.CollectiveSpinSystem(cfg["n"], cfg["omega"] * cfg["kappa"],
                                          cfg["kappa"])
    mat = largedev.build_tilted(system, cfg["s"])
    sol = largedev.leading_eigenpair(mat, bias=cfg["s"])
    k = largedev.activity(sol, system)
    doob = largedev.doob_transform(sol, system)
    rec = largedev.doob_homodyne_trajectory(
        doob, t_final=cfg["t_final"], dt=cfg["dt"], seed=cfg["seed"],
        record_current=not cfg["skip_current"],
    )
    _write_record(out, rec)
    _io.write_csv(
        out / "tilt_summary.csv",
        ["s", "theta", "k", "residual", "tp_residual"],
        [{"s": cfg["s"], "theta": sol.scgf, "k": k,
          "residual": sol.residual, "tp_residual": doob.tp_residual}],
    )
    _io.write_manifest(out, "doob", cfg)
    print(f"doob: s = {cfg['s']}, theta = {sol.scgf:.6g}, k = {k:.6g} in {out}")
    return 0


def cmd_scaling(args) -> int:
    cfg = _resolve(args, {
        "model": "phase", "n_list": "50,100,200,400,800,1600,3200",
        "omega": 1.0, "kappa": 1.0, "events_target": 10000, "seed": 0,
        "workers": 1, "threshold": analysis.THRESHOLD, "rearm": analysis.REARM,
        "burn_in": analysis.BURN_IN, "confirm": "auto", "dt": 0.0,
        "out": "scaling_out", "force": False,
    })
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    confirm = cfg["confirm"]
    if confirm != "auto":
        confirm = float(confirm)
        if confirm <= -1.0:  # below the range of m_y: confirmation off
            confirm = None
    result = analysis.tau_scaling(
        cfg["model"], [float(v) for v in cfg["n_list"].split(",")],
        cfg["omega"] * cfg["kappa"], kappa=cfg["kappa"],
        events_target=cfg["events_target"], master_seed=cfg["seed"],
        workers=cfg["workers"], threshold=cfg["threshold"],
        rearm=cfg["rearm"], burn_in=cfg["burn_in"], confirm=confirm,
        dt=cfg["dt"] if cfg["dt"] > 0 else None,
    )
    _io.write_csv(
        out / "tau_scaling.csv",
        ["n_atoms", "tau", "tau_stderr", "n_events", "n_gaps", "total_time",
         "reliable"],
        result.rows,
    )
    fit = result.fit
    if fit is None:
        fit_row = {"exponent": math.nan, "stderr": math.nan,
                   "amplitude": math.nan, "n_points": 0}
        summary = "fit skipped (fewer than 4 reliable sizes)"
    else:
        fit_row = {"exponent": fit.exponent, "stderr": fit.stderr,
                   "amplitude": fit.amplitude, "n_points": fit.n_points}
        summary = (f"tau ~ N^{fit.exponent:.3f} +- {fit.stderr:.3f} "
                   f"({fit.n_points} sizes)")
    _io.write_csv(
        out / "fit.csv",
        ["exponent", "stderr", "amplitude", "n_points"],
        [fit_row],
    )
    _io.write_manifest(out, "scaling", cfg)
    print(f"scaling: {summary} in {out}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = _resolve(args, {
        "run": "", "bin_window": 0.5, "grid_dt": 0.01,
        "out": "spectrum_out", "force": False,
    })
    if not cfg["run"]:
        raise ValueError("--run DIR (a jump-trajectory output) is required")
    manifest = _io.read_manifest(cfg["run"])
    run_cfg = manifest["config"]
    if manifest["command"] != "traj" or run_cfg.get("scheme") != "jump":
        raise ValueError(f"{cfg['run']} is not a jump trajectory run")
    omega = run_cfg["omega"] * run_cfg["kappa"]
    kappa = run_cfg["kappa"]
    if omega <= kappa:
        raise ValueError(
            "spectrum needs an above-threshold run (omega > kappa)"
        )
    jumps = _io.read_columns_csv(f"{cfg['run']}/jumps.csv")["t"]
    binned = unravel.bin_counts(
        jumps, run_cfg["t_final"], window=cfg["bin_window"], mode="sliding",
        grid_dt=cfg["grid_dt"],
    )
    big_omega = math.sqrt(omega**2 - kappa**2)
    freqs, mags = analysis.count_spectrum(binned, big_omega)
    out = _io.prepare_outdir(cfg["out"], cfg["force"])
    _io.write_columns_csv(
        out / "spectrum.csv", ["freq_over_bigomega", "magnitude"], [freqs, mags]
    )
    cfg["source_seed"] = run_cfg["seed"]
    _io.write_manifest(out, "spectrum", cfg)
    peak = freqs[1:][np.argmax(mags[1:])]
    print(f"spectrum: peak at freq/Omega = {peak:.4f} in {out}")
    return 0


def cmd_validate(args) -> int:
    checks = _validation_checks()
    failed = 0
    for name, fn in checks:
        try:
            fn()
            print(f"PASS {name}")
        except Exception as exc:  # noqa: BLE001 - report any failure
            failed += 1
            print(f"FAIL {name}: {exc}")
    if failed:
        print(f"validate: {failed}/{len(checks)} checks failed")
        return 2
    print(f"validate: all {len(checks)} checks passed")
    return 0


def _validation_checks():
    def commutators():
        system = spinops.CollectiveSpinSystem(16, 1.0)
        jx, jy, jz = system.jx, system.jy, system.jz
        assert np.allclose(jx @ jy - jy @ jx, 1j * jz, atol=1e-12)
        assert np.allclose(
            jx @ jx + jy @ jy + jz @ jz,
            system.j * (system.j + 1) * np.identity(system.dim), atol=1e-10,
        )

    def coherent():
        system = spinops.CollectiveSpinSystem(24, 1.0)
        theta, phi = 1.1, 2.3
        psi = spinops.spin_coherent_state(system, theta, phi)
        expected = [
            math.sin(theta) * math.cos(phi),
            math.sin(theta) * math.sin(phi),
            math.cos(theta),
        ]
        assert np.allclose(spinops.magnetization(system, psi), expected,
                           atol=1e-10)

    def stationary():
        system = spinops.CollectiveSpinSystem(40, 0.5)
        rho = mastereq.stationary_state(system)
        mags = spinops.magnetization(system, rho)
        assert abs(mags[1] - 0.5) < 0.05, f"m_y = {mags[1]}"

    def mean_field():
        m0 = np.array([0.1, 0.3, -0.9])
        m0 /= np.linalg.norm(m0)
        _, path = semiclassical.integrate_mf(m0, 0.7, 1.0, 20.0)
        norms = np.linalg.norm(path, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-8

    def analytic_orbit():
        m0 = np.array([0.0, 1.0, 0.0])
        times, path = semiclassical.integrate_mf(m0, 1.5, 1.0, 20.0,
                                                 record_dt=0.1)
        exact = semiclassical.mf_analytic(m0, 1.5, 1.0, times)
        assert np.max(np.abs(path - exact)) < 1e-6

    def phase_lock():
        path = semiclassical.simulate_phase(
            np.pi / 2, math.inf, 0.5, 1.0, t_final=60.0, record_dt=1.0
        )
        locked = np.pi - math.asin(0.5)
        assert abs(path.phi[-1] - locked) < 1e-6

    def events():
        t = np.arange(0.0, 200.0, 0.01)
        y = np.cos(2 * np.pi * t / 20.0)  # dips below 0.8 every 20
        series = analysis.detect_events(y, 0.01)
        assert series.n_events == 10, f"{series.n_events} events"
        assert abs(series.tau() - 20.0) < 1e-9

    def power_law():
        x = np.array([50.0, 100, 200, 400, 800])
        fit = analysis.fit_power_law(x, 3.0 * x**0.36)
        assert abs(fit.exponent - 0.36) < 1e-12

    def backend_parity():
        from ._kernels import _fallback
        from . import _kernels

        system = spinops.CollectiveSpinSystem(10, 1.0)
        res = {}
        for name, mod in (("active", _kernels), ("fallback", _fallback)):
            psi = spinops.spin_coherent_state(system, np.pi / 2, np.pi / 2)
            mags = np.empty((200, 3))
            status = mod.homodyne_chunk(
                np.random.PCG64(7), psi, system.ladder, system.jpjm_diag,
                system.jz_diag, system.omega, system.kappa / system.N,
                1e-4, 200, 1, 1.0 / system.j, mags, np.empty(0),
                unravel.NORM_GUARD,
            )
            assert status == 0, f"{name} guard tripped"
            res[name] = mags
        diff = np.max(np.abs(res["active"] - res["fallback"]))
        assert diff < 1e-9, f"backends differ by {diff}"

    def jump_cascade():
        system = spinops.CollectiveSpinSystem(6, 0.0)
        psi0 = np.zeros(system.dim, dtype=complex)
        psi0[0] = 1.0
        rec = unravel.jump_trajectory(system, psi0, t_final=200.0, seed=3)
        assert len(rec.jump_times) == system.N

    return [
        ("collective operator algebra", commutators),
        ("spin coherent magnetization", coherent),
        ("stationary drive lock", stationary),
        ("mean-field norm conservation", mean_field),
        ("analytic orbit vs integrator", analytic_orbit),
        ("phase-model locking", phase_lock),
        ("hysteresis event detection", events),
        ("power-law fit recovery", power_law),
        ("kernel backend parity", backend_parity),
        ("decay cascade jump count", jump_cascade),
    ]


def _add_common(sub, *names):
    flags = {
        "n": lambda: sub.add_argument("--n", type=int),
        "omega": lambda: sub.add_argument("--omega", type=float,
                                          help="drive in units of kappa"),
        "kappa": lambda: sub.add_argument("--kappa", type=float),
        "t_final": lambda: sub.add_argument("--t-final", type=float),
        "dt": lambda: sub.add_argument("--dt", type=float),
        "seed": lambda: sub.add_argument("--seed", type=int),
        "workers": lambda: sub.add_argument("--workers", type=int),
        "out": lambda: sub.add_argument("--out"),
    }
    for name in names:
        flags[name]()
    sub.add_argument("--config", help="key = value preset file")
    sub.add_argument("--force", action="store_true", default=None,
                     help="overwrite an existing output directory")


def main(argv=None) -> int:
    parser = _Parser(prog="btcsim", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("steady", help="stationary-state scan over the drive")
    _add_common(sub, "n", "kappa", "out")
    sub.add_argument("--omega-grid", help="start:stop:step or comma list")
    sub.set_defaults(fn=cmd_steady)

    sub = subs.add_parser("traj", help="single stochastic trajectory")
    _add_common(sub, "n", "omega", "kappa", "t_final", "dt", "seed", "out")
    sub.add_argument("--scheme", choices=["jump", "homodyne"])
    sub.add_argument("--theta0", type=float)
    sub.add_argument("--phi0", type=float)
    sub.add_argument("--bin-window", type=float)
    sub.add_argument("--skip-current", action="store_true", default=None)
    sub.set_defaults(fn=cmd_traj)

    sub = subs.add_parser("tilt", help="tilted-generator spectrum scan")
    _add_common(sub, "n", "kappa", "out")
    sub.add_argument("--omega-grid")
    sub.add_argument("--s-grid")
    sub.add_argument("--skip-k", action="store_true", default=None)
    sub.set_defaults(fn=cmd_tilt)

    sub = subs.add_parser("doob", help="biased-ensemble trajectory")
    _add_common(sub, "n", "omega", "kappa", "t_final", "dt", "seed", "out")
    sub.add_argument("--s", type=float, help="bias conjugate to the current")
    sub.add_argument("--skip-current", action="store_true", default=None)
    sub.set_defaults(fn=cmd_doob)

    sub = subs.add_parser("scaling", help="lifetime tau versus system size")
    _add_common(sub, "omega", "kappa", "dt", "seed", "workers", "out")
    sub.add_argument("--model", choices=["phase", "jump"])
    sub.add_argument("--n-list")
    sub.add_argument("--events-target", type=int)
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--rearm", type=float)
    sub.add_argument("--burn-in", type=float)
    sub.add_argument("--confirm",
                     help="slip confirmation level: 'auto', or a number "
                          "(<= -1 disables)")
    sub.set_defaults(fn=cmd_scaling)

    sub = subs.add_parser("spectrum", help="count-signal spectrum of a jump run")
    _add_common(sub, "out")
    sub.add_argument("--run", help="directory of a 'traj --scheme jump' run")
    sub.add_argument("--bin-window", type=float)
    sub.add_argument("--grid-dt", type=float)
    sub.set_defaults(fn=cmd_spectrum)

    sub = subs.add_parser("validate", help="run built-in quick checks")
    sub.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValueError as exc:
        print(f"btcsim: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"btcsim: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
