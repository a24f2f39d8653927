"""Performance models for battery swapping and charging stations.

The exact finite CTMC (``bscs.ctmc``), closed-form planning bounds
(``bscs.bounds``), matrix-geometric asymptotics for large battery populations
(``bscs.qbd``) and a discrete-event simulator (``bscs.simulator``).
"""
from .bounds import Mode, ModeReport, c_limiting_lower_bound, c_limiting_threshold, classify_mode, mmsn_blocking
from .config import StationConfig, ValidatedConfig, load_station_config, reference_config, validate
from .ctmc import (
    MetricsReport, SteadyState, blocking_probability, build_generator, extract_blocks,
    occupancy_metrics, solve, solve_steady_state,
)
from .errors import (
    BandTooNarrow, BoundaryError, BscsError, ConfigError, DomainError, MassDeficit, NoConvergence,
    NotPositiveRecurrent, ShapeMismatch, SingularMatrix, StateSpaceTooLarge,
)
from .qbd import (
    Orientation, Verdict, asymptotic_solution, build_subnetwork, drift_check, solve_boundary,
    solve_rate_matrix, solve_subnetwork,
)

__version__ = "0.1.0"


def __getattr__(name):
    # keep numba out of the import path unless the simulator is used
    if name in {"SimConfig", "SimEstimate", "simulate"}:
        from . import simulator
        return getattr(simulator, name)
    raise AttributeError(name)
