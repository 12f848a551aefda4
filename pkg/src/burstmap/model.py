"""Closed-form geometry of the elliptic burster's slow-fast cycle.

The fast subsystem is a planar normal form with a subcritical Hopf
bifurcation whose periodic branches fold back; the slow variable ``y``
drags the fast subsystem around a hysteresis loop between a rest state
(``z = 0``) and a finite-amplitude spiking state.  Everything in this
module is exact algebra on that skeleton: branch radii, passage-time
maps along the rest and active branches, and the delayed jump-up point
of the slow passage.  No ODE integration happens here.

Conventions: the fold of the spiking branches sits at ``y = -1``, the
rest state destabilizes at ``y = 0``, and cycle time ``t = 0`` is the
jump-down (end of spiking).  Phases on the unit circle are cycle time
divided by ``Geometry.period``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Y_FOLD = -1.0
Y_HOPF = 0.0

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class BursterParams:
    """Parameters of the slow-fast burster.

    eps   slow/fast timescale ratio
    w     fast rotation frequency
    a     slow-drive target (rest branch drifts toward y = a/b)
    b     slow relaxation rate; b = 0 gives a constant upward drift
    """

    eps: float = 0.01
    w: float = 1.0
    a: float = 0.8
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.eps <= 0.0:
            raise ValueError("eps must be positive")
        if self.a <= 0.0:
            raise ValueError("a must be positive for a bursting cycle")
        if self.b < 0.0:
            raise ValueError("b must be nonnegative")


def stable_radius(y: float) -> float:
    """Radius of the stable (outer) spiking orbit at slow value y >= -1."""
    return math.sqrt(1.0 + math.sqrt(y + 1.0))


def unstable_radius(y: float) -> float:
    """Radius of the unstable (separatrix) orbit, defined on -1 <= y <= 0."""
    return math.sqrt(1.0 - math.sqrt(y + 1.0))


def rest_y(t: float, params: BursterParams, y0: float = Y_FOLD) -> float:
    """Slow value after drifting along the rest branch for time t from y0."""
    a, b, eps = params.a, params.b, params.eps
    if b == 0.0:
        return y0 + eps * a * t
    return a / b + (y0 - a / b) * math.exp(-eps * b * t)

def rest_time(y: float, params: BursterParams, y0: float = Y_FOLD) -> float:
    """Inverse of :func:`rest_y`: drift time from y0 to y on the rest branch."""
    a, b, eps = params.a, params.b, params.eps
    if b == 0.0:
        return (y - y0) / (eps * a)
    num = a - b * y
    den = a - b * y0
    if num <= 0.0 or den <= 0.0:
        raise ValueError("y outside the reachable range of the rest drift")
    return -math.log(num / den) / (eps * b)


def rest_y_slope(t: float, params: BursterParams, y0: float = Y_FOLD) -> float:
    """d/dt of :func:`rest_y`."""
    a, b, eps = params.a, params.b, params.eps
    if b == 0.0:
        return eps * a
    return eps * (a - b * rest_y(t, params, y0))


def rest_time_slope(y: float, params: BursterParams) -> float:
    """d/dy of :func:`rest_time` (reciprocal drift speed at y)."""
    return 1.0 / (params.eps * (params.a - params.b * y))


def lambert_w0(x: float, tol: float = 1e-12, max_iter: int = 50) -> float:
    """Principal branch of the Lambert W function, W0(x) for x >= -1/e.

    Halley iteration from a piecewise initial guess: series around the
    branch point for x near -1/e, a Taylor start for moderate x, and the
    two-log asymptotic for large x.  Converges to ``tol`` (mixed
    absolute/relative on the update) in a handful of steps.
    """
    if x < -_INV_E:
        if x < -_INV_E - 1e-12:
            raise ValueError(f"lambert_w0 defined for x >= -1/e, got {x}")
        x = -_INV_E
    if x == 0.0:
        return 0.0
    if x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0)))
    elif x < 1.0:
        w = x * (1.0 + x * (-1.0 + x * 1.5))
    else:
        l1 = math.log(x)
        l2 = math.log(l1) if l1 > 1.0 else 0.0
        w = l1 - l2 + (l2 / l1 if l1 > 1.0 else 0.0)
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        # Halley step for f(w) = w e^w - x
        delta = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= delta
        if abs(delta) <= tol * (1.0 + abs(w)):
            return w
    raise RuntimeError("lambert_w0 failed to converge")


def jump_up(y_start: float, params: BursterParams) -> float:
    """Slow value at which a rest-branch passage started at y_start escapes.

    The rest state is only weakly unstable past the Hopf threshold, so a
    trajectory entering the rest branch at ``y_start < 0`` sticks to it
    until the accumulated contraction has been undone; the escape
    ("jump-up") happens where the integral of the rest-state growth rate
    along the drift vanishes.  For b = 0 that is exactly ``-y_start``;
    for b > 0 it solves a transcendental balance handled by the Lambert
    function.
    """
    if not Y_FOLD <= y_start < Y_HOPF:
        raise ValueError("jump_up expects a start on the stable rest branch, "
                         f"-1 <= y < 0, got {y_start}")
    a, b = params.a, params.b
    if b == 0.0:
        return -y_start
    arg = -(a - b * y_start) * math.exp((b / a) * y_start - 1.0) / a
    return (a / b) * (lambert_w0(arg) + 1.0)


def jump_up_slope(y_start: float, params: BursterParams) -> float:
    """Derivative of the jump-up value with respect to the start value.

    Implicit differentiation of the contraction balance gives the ratio
    ``(y e^{(b/a) y}) / (y' e^{(b/a) y'})`` with y' the jump-up value;
    for b = 0 this collapses to -1.
    """
    y_end = jump_up(y_start, params)
    r = params.b / params.a
    return (y_start * math.exp(r * y_start)) / (y_end * math.exp(r * y_end))


def _active_speed(y: float, params: BursterParams) -> float:
    """dy/dt on the active branch (strictly negative on -1 <= y <= y_jump)."""
    a, b, eps = params.a, params.b, params.eps
    return eps * (a - 1.0 - math.sqrt(y + 1.0) - b * y)


def _active_antiderivative(y: float, params: BursterParams) -> float:
    """Antiderivative of 1/dy-dt along the active branch (no calibration).

    Closed form from partial fractions in u = sqrt(y+1).  For b > 0 the
    shape depends on the sign of disc = 1 + 4b(a-1) + 4b^2: both real
    log form (disc > 0) and arctan form (disc < 0) are covered; the
    degenerate disc = 0 case falls through the log branch, which stays
    finite in the limit.
    """
    a, b, eps = params.a, params.b, params.eps
    u = math.sqrt(y + 1.0)
    if b == 0.0:
        return -(2.0 / eps) * ((a - 1.0) * math.log(1.0 - a + u) + u)
    disc = 1.0 + 4.0 * b * (a - 1.0) + 4.0 * b * b
    s = 2.0 * b * u + 1.0
    lin = math.log(b * y + u + 1.0 - a)
    if disc > 0.0:
        d = math.sqrt(disc)
        osc = math.log(abs(s - d) / (s + d)) / d
    else:
        d = math.sqrt(-disc)
        osc = 2.0 * math.atan(s / d) / d
    return (osc - lin) / (eps * b)


def active_speed_valid(params: BursterParams, y_max: float) -> bool:
    """True when the active branch drifts downward everywhere on [-1, y_max]."""
    n = 64
    return all(
        _active_speed(Y_FOLD + i * (y_max - Y_FOLD) / n, params) < 0.0
        for i in range(n + 1)
    )


@dataclass(frozen=True)
class Geometry:
    """Derived constants of one burst cycle.

    y_jump       escape point of the unperturbed slow passage
    t_silent     rest-branch passage time, fold -> y_jump
    t_active     active-branch passage time, y_jump -> fold
    cycle_time   t_silent + t_active (closed-form cycle length)
    period       phase-normalization period; equals cycle_time unless a
                 simulation-calibrated value is supplied (see PRESETS)
    active_shift calibration constant making active_clock(y_jump) == t_silent
    """

    params: BursterParams
    y_jump: float
    t_silent: float
    t_active: float
    cycle_time: float
    period: float
    active_shift: float

    @property
    def silent_phase(self) -> float:
        """Fraction of the period spent on the rest branch."""
        return self.t_silent / self.period


def make_geometry(params: BursterParams, period: float | None = None) -> Geometry:
    yj = jump_up(Y_FOLD, params)
    t_sil = rest_time(yj, params)
    if not active_speed_valid(params, yj):
        raise ValueError("parameters do not produce a relaxation cycle: "
                         "active branch is not uniformly downward-drifting")
    shift = t_sil - _active_antiderivative(yj, params)
    t_act = _active_antiderivative(Y_FOLD, params) + shift - t_sil
    cycle = t_sil + t_act
    return Geometry(
        params=params,
        y_jump=yj,
        t_silent=t_sil,
        t_active=t_act,
        cycle_time=cycle,
        period=cycle if period is None else period,
        active_shift=shift,
    )


def active_clock(y: float, geom: Geometry) -> float:
    """Cycle time at which the active-branch passage reaches y.

    Runs from ``t_silent`` at the jump-up down to ``cycle_time`` at the
    fold; strictly decreasing in y.
    """
    return _active_antiderivative(y, geom.params) + geom.active_shift


def active_clock_slope(y: float, geom: Geometry) -> float:
    """d/dy of :func:`active_clock` (reciprocal of the branch speed)."""
    return 1.0 / _active_speed(y, geom.params)


def weak_cutoff_y(amplitude: float) -> float:
    """Smallest rest-branch y from which a kick of this size clears the
    separatrix.

    The separatrix radius shrinks like sqrt(1 - sqrt(y+1)); a horizontal
    displacement of ``amplitude`` clears it for y above this value.
    Amplitudes >= 1 clear it everywhere (returns the fold value).
    """
    if amplitude <= 0.0:
        raise ValueError("kick amplitude must be positive")
    if amplitude >= 1.0:
        return Y_FOLD
    q = 1.0 - amplitude * amplitude
    return q * q - 1.0


def weak_cutoff_phase(amplitude: float, geom: Geometry) -> float:
    """Phase of :func:`weak_cutoff_y` on the unit circle."""
    return rest_time(weak_cutoff_y(amplitude), geom.params) / geom.period


# ---------------------------------------------------------------------------
# shipped parameter sets

#: Calibration notes: the "b0" period is the mean jump-down interval of a
#: long unperturbed simulation (see burstmap.integrate.period_stats); the
#: closed-form cycle length for that parameter set is 449.31, and phases
#: here are normalized by the simulated period instead.  The "b05" set
#: keeps the closed-form period.
PRESETS: dict[str, Geometry] = {
    "b0": make_geometry(BursterParams(eps=0.01, w=1.0, a=0.8, b=0.0),
                        period=463.8276),
    "b05": make_geometry(BursterParams(eps=0.01, w=1.0, a=0.4, b=0.5)),
}


def preset(name: str) -> Geometry:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
