"""Closed-form return map of a single horizontal impulse.

A kick of amplitude A delivered at phase theta of the burst cycle lands
the trajectory in one of three regimes, and the new asymptotic phase is
piecewise closed-form in theta:

``hold``     the kick changes nothing observable (during spiking, or, in
             the noisy variant, so early in the rest passage that noise
             erases the perturbation before it can matter); F(theta) =
             theta.
``delayed``  a sub-threshold kick on the rest branch; the stored
             contraction is reset, moving the escape point, so the next
             burst is late but the orbit is otherwise unchanged.
``reset``    the kick clears the separatrix and ignites spiking on the
             spot; the phase jumps onto the active-branch clock.

Branch intervals partition [0, 1) and each branch owns its left
endpoint.  Map values are returned unwrapped (they stay inside [0, 1)
for sensible geometries); iteration with a drive offset applies mod 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import (Geometry, Y_FOLD, active_clock, active_clock_slope,
                    jump_up, jump_up_slope, rest_time, rest_time_slope,
                    rest_y, rest_y_slope, weak_cutoff_phase)


@dataclass(frozen=True)
class Branch:
    lo: float
    hi: float
    kind: str  # "hold" | "delayed" | "reset"


@dataclass(frozen=True)
class KickMap:
    geom: Geometry
    amplitude: float
    head_phase: float
    branches: tuple[Branch, ...]

    def __call__(self, theta):
        return map_phase(self, theta)


def build_kick_map(geom: Geometry, amplitude: float,
                   head_phase: float = 0.0) -> KickMap:
    """Assemble the branch partition for one kick amplitude.

    ``head_phase`` carves an extra ``hold`` interval out of [0,
    head_phase); it is 0 for the deterministic map and positive for the
    noisy variant, where early-kick memory does not survive to the jump.
    """
    if amplitude < 0.0:
        raise ValueError("kick amplitude must be >= 0")
    if not 0.0 <= head_phase < 1.0:
        raise ValueError("head_phase must lie in [0, 1)")
    th_s = geom.silent_phase
    if amplitude == 0.0:
        base = [(0.0, 1.0, "hold")]
    elif amplitude >= 1.0:
        base = [(0.0, th_s, "reset"), (th_s, 1.0, "hold")]
    else:
        th_w = weak_cutoff_phase(amplitude, geom)
        base = [(0.0, th_w, "delayed"), (th_w, th_s, "reset"),
                (th_s, 1.0, "hold")]
    if head_phase > 0.0:
        clipped = [(0.0, head_phase, "hold")]
        for lo, hi, kind in base:
            lo = max(lo, head_phase)
            if hi > lo:
                clipped.append((lo, hi, kind))
        base = clipped
    branches = tuple(Branch(lo, hi, kind) for lo, hi, kind in base
                     if hi > lo)
    return KickMap(geom=geom, amplitude=amplitude, head_phase=head_phase,
                   branches=branches)


def _branch_of(km: KickMap, theta: float) -> Branch:
    for br in km.branches:
        if br.lo <= theta < br.hi:
            return br
    return km.branches[-1]


def _phase_scalar(km: KickMap, theta: float) -> float:
    geom = km.geom
    p = geom.params
    th = theta % 1.0
    br = _branch_of(km, th)
    if br.kind == "hold":
        return th
    t = th * geom.period
    y = rest_y(t, p)
    if br.kind == "delayed":
        y_esc = jump_up(y, p)
        return th + (active_clock(y_esc, geom)
                     - rest_time(y_esc, p)) / geom.period
    return active_clock(y, geom) / geom.period


def _slope_scalar(km: KickMap, theta: float) -> float:
    geom = km.geom
    p = geom.params
    th = theta % 1.0
    br = _branch_of(km, th)
    if br.kind == "hold":
        return 1.0
    t = th * geom.period
    y = rest_y(t, p)
    if br.kind == "delayed":
        y_esc = jump_up(y, p)
        inner = active_clock_slope(y_esc, geom) - rest_time_slope(y_esc, p)
        return 1.0 + inner * jump_up_slope(y, p) * rest_y_slope(t, p)
    return active_clock_slope(y, geom) * rest_y_slope(t, p)


def map_phase(km: KickMap, theta):
    """New asymptotic phase after a kick at phase theta (array-capable)."""
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        return _phase_scalar(km, float(arr))
    flat = [_phase_scalar(km, v) for v in arr.ravel()]
    return np.array(flat).reshape(arr.shape)


def map_slope(km: KickMap, theta):
    """dF/dtheta of :func:`map_phase` on the branch interiors."""
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        return _slope_scalar(km, float(arr))
    flat = [_slope_scalar(km, v) for v in arr.ravel()]
    return np.array(flat).reshape(arr.shape)


def tip_clearance(km: KickMap) -> float:
    """Headroom between the map's highest point and a full wrap.

    The supremum of F sits at the left end of the reset branch (the
    active clock decreases along it); the clearance is 1 minus that
    value.  A uniform drive offset up to the clearance keeps every image
    below 1, which is what confines orbits left of the reset tip.  With
    no reset branch the map is the identity and the clearance is 0.
    """
    for br in km.branches:
        if br.kind == "reset":
            return 1.0 - _phase_scalar(km, br.lo)
    return 0.0


def expansion_cutoff_phase(geom: Geometry) -> float:
    """Phase below which the reset branch is expanding (|slope| > 1).

    The reset-branch slope magnitude falls toward the jump-up end; this
    returns the phase of the crossing through 1, the boundary of the
    chaos-generating part of the rest passage.  Returns 0 if the branch
    never expands and the full silent fraction if it always does.
    """
    p = geom.params

    def mag(y: float) -> float:
        return abs(active_clock_slope(y, geom)
                   * p.eps * (p.a - p.b * y)) - 1.0

    lo = Y_FOLD + 1e-12
    hi = geom.y_jump
    ys = np.linspace(lo, hi, 65)
    vals = [mag(v) for v in ys]
    if all(v < 0.0 for v in vals):
        return 0.0
    if all(v > 0.0 for v in vals):
        return geom.silent_phase
    for i in range(len(ys) - 1):
        if vals[i] == 0.0:
            y_c = ys[i]
            break
        if vals[i] * vals[i + 1] < 0.0:
            y_c = brentq(mag, ys[i], ys[i + 1], xtol=1e-14)
            break
    return rest_time(y_c, p) / geom.period


def classify_region(km: KickMap, tau: float) -> str:
    """Drive-offset regime of the kicked-at-interval-(1+tau)T system.

    "I"   tau at or below the tip clearance: orbits pile up against the
          reset tip and lock.
    "II"  tau reaches past the clearance by less than the wider of the
          weak-cutoff phase and the expansion cutoff: wrapped orbits
          land back on delayed/expanding territory and mix.
    "III" larger tau: wrapped orbits overshoot the interesting part of
          the rest passage and the drive mostly rotates them.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must lie in [0, 1)")
    t_c = tip_clearance(km)
    if km.amplitude < 1.0 and km.amplitude > 0.0:
        th_w = weak_cutoff_phase(km.amplitude, km.geom)
    else:
        th_w = 0.0
    hi = t_c + max(th_w, expansion_cutoff_phase(km.geom))
    if tau <= t_c:
        return "I"
    if tau < hi:
        return "II"
    return "III"
