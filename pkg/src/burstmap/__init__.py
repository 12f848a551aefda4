"""Phase-resetting analysis of an elliptic burster.

The package splits into a closed-form layer (cycle geometry and the
piecewise kick map), a direct-simulation layer (adaptive integration
with impulses and noise), and analysis tools built on the map (orbit
diagrams, Lyapunov exponents, invariant measures, synchrony scores,
slow-passage statistics, and kick-train composition).
"""

from .model import (BursterParams, Geometry, PRESETS, preset,
                    make_geometry, stable_radius, unstable_radius,
                    rest_y, rest_time, jump_up, active_clock,
                    weak_cutoff_y, weak_cutoff_phase,
                    Y_FOLD, Y_HOPF)
from .integrate import (simulate, period_stats, simulate_population,
                        cycle_anchor, state_at_phase, rng_stream,
                        Simulation, PeriodStats)

__version__ = "0.1.0"

__all__ = [
    "BursterParams", "Geometry", "PRESETS", "preset", "make_geometry",
    "stable_radius", "unstable_radius", "rest_y", "rest_time", "jump_up",
    "active_clock", "weak_cutoff_y", "weak_cutoff_phase", "Y_FOLD",
    "Y_HOPF", "simulate", "period_stats", "simulate_population",
    "cycle_anchor", "state_at_phase", "rng_stream", "Simulation",
    "PeriodStats", "__version__",
]
