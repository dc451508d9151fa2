"""Trajectory and large-deviation toolkit for a driven collective spin.

The model is N two-level atoms with a collective coherent drive and
collective decay at rate kappa/N, whose dissipative dynamics supports a
boundary time crystal above the drive threshold omega = kappa.  The
package covers the master equation and its stationary state, mean-field
and phase-Langevin reductions, quantum-jump and homodyne trajectory
unravelings, photocount/current statistics through tilted generators,
and the Doob auxiliary dynamics that realizes biased ensembles.
"""

from ._kernels import BACKEND
from .analysis import (
    DwellStats,
    EventSeries,
    PowerLawFit,
    TauScalingResult,
    count_spectrum,
    detect_events,
    dwell_stats,
    fit_power_law,
    tau_scaling,
)
from .largedev import (
    DoobSystem,
    TiltedSolution,
    activity,
    build_tilted,
    check_convexity,
    doob_homodyne_trajectory,
    doob_transform,
    leading_eigenpair,
    leading_eigenpair_dense,
    theta_scan,
)
from .mastereq import (
    StationaryDiagnostics,
    diagnostics,
    evolve_me,
    liouvillian_apply,
    liouvillian_matrix,
    stationary_scan,
    stationary_state,
    trace_distance,
)
from .semiclassical import (
    PhasePath,
    integrate_mf,
    mf_analytic,
    mf_rhs,
    phase_to_magnetization,
    simulate_phase,
)
from .spinops import (
    CollectiveSpinSystem,
    build_collective_ops,
    magnetization,
    spin_coherent_state,
)
from .unravel import (
    BinnedSignal,
    TrajectoryRecord,
    bin_counts,
    default_jump_dt,
    ensemble_states,
    homodyne_trajectory,
    jump_trajectory,
    smooth_current,
)
from .util import NumericsError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "NumericsError",
    "CollectiveSpinSystem",
    "build_collective_ops",
    "spin_coherent_state",
    "magnetization",
    "liouvillian_apply",
    "liouvillian_matrix",
    "evolve_me",
    "stationary_state",
    "stationary_scan",
    "StationaryDiagnostics",
    "diagnostics",
    "trace_distance",
    "mf_rhs",
    "integrate_mf",
    "mf_analytic",
    "PhasePath",
    "simulate_phase",
    "phase_to_magnetization",
    "TrajectoryRecord",
    "BinnedSignal",
    "default_jump_dt",
    "jump_trajectory",
    "homodyne_trajectory",
    "ensemble_states",
    "bin_counts",
    "smooth_current",
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
    "EventSeries",
    "detect_events",
    "PowerLawFit",
    "fit_power_law",
    "TauScalingResult",
    "tau_scaling",
    "count_spectrum",
    "DwellStats",
    "dwell_stats",
]
