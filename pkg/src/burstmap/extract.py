"""Kick-map extraction from direct simulation.

The closed-form map has an independent measurement counterpart: place a
cell on the (possibly noisy) cycle at a chosen phase, kick it once, let
it relax for two full periods, and read its new phase against the event
train of an unkicked reference sharing the same noise.  The phase of
the kick time within the kicked cell's settled event train is the map
output; averaging over noise realizations uses the circular mean.

Bursters have no true limit cycle, only a metastable one, so the
readout compares event times instead of isochrons; after the
relaxation horizon the offset between the kicked and reference trains
is constant to well below the grid resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrate import cycle_anchor, rng_stream, simulate
from .kickmap import KickMap, map_phase
from .model import BursterParams, weak_cutoff_phase


@dataclass
class MapSample:
    """One measured point of the kick map."""

    theta_in: float
    theta_out: float
    n_realizations: int
    dispersion: float
    valid: bool = True
    reason: str = ""


def default_theta_grid(amplitude: float, geom, n_base: int = 200,
                       refine: int = 4, margin: float = 0.05) -> np.ndarray:
    """Uniform grid with extra density where the map has fine structure.

    The sub-threshold part of the rest passage (plus a margin past the
    cutoff) carries the steep branch, so its spacing is ``refine`` times
    finer than the base grid.
    """
    base = np.arange(n_base) / n_base
    if 0.0 < amplitude < 1.0:
        hi = min(weak_cutoff_phase(amplitude, geom) + margin, 1.0)
    elif amplitude >= 1.0:
        hi = margin
    else:
        hi = 0.0
    extra = []
    step = 1.0 / n_base
    for k in range(1, refine):
        pts = base + k * step / refine
        extra.append(pts[pts < hi])
    grid = np.concatenate([base] + extra) if extra else base
    return np.sort(grid)


def _clean_probe(params, anchor, armed0, period, theta, amplitude,
                 horizon: float, readout: str):
    """Kick at phase theta of the settled cycle; return the post-kick
    phase of the kick time, or None if too few events followed.

    ``readout="termination"`` reads the settled event train directly;
    ``readout="last_spike"`` quantizes both the anchor and the readout
    to the final spike peak of each burst (voltage-trace convention).
    """
    t_kick = theta * period
    if readout == "last_spike":
        phi0 = np.arctan2(anchor[1], anchor[0])
        t_kick -= (phi0 % (2 * np.pi)) / params.w
        if t_kick < 0.0:
            t_kick += period
    sim = simulate(params, t_kick + horizon, state0=anchor, armed=armed0,
                   kick_times=np.array([t_kick]),
                   kick_amps=np.array([amplitude]))
    keep = sim.event_times > t_kick + 1e-9
    if keep.sum() < 2:
        return None
    if readout == "last_spike":
        ref_times = sim.spike_times(params.w)[keep]
    else:
        ref_times = sim.event_times[keep]
    return ((t_kick - ref_times[-1]) / period) % 1.0


def _noisy_probe(params, anchor, armed0, period, theta, amplitude, eta,
                 make_rng, horizon: float, settle: float, readout: str):
    """One noisy realization: the kicked run and its reference share the
    same noise train (the substream is replayed), and the kick time is
    anchored to the reference's own settled event."""
    duration = settle + 1.5 * period + horizon
    ref = simulate(params, duration, state0=anchor, armed=armed0,
                   eta=eta, rng=make_rng())
    if readout == "last_spike":
        ref_anchor_times = ref.spike_times(params.w)
    else:
        ref_anchor_times = ref.event_times
    sel = ref_anchor_times[ref.event_times > settle]
    if len(sel) == 0:
        return None
    t_kick = sel[0] + theta * period
    kicked = simulate(params, duration, state0=anchor, armed=armed0,
                      eta=eta, rng=make_rng(),
                      kick_times=np.array([t_kick]),
                      kick_amps=np.array([amplitude]))
    keep = kicked.event_times > t_kick + 1e-9
    if keep.sum() < 2:
        return None
    if readout == "last_spike":
        out_times = kicked.spike_times(params.w)[keep]
    else:
        out_times = kicked.event_times[keep]
    return ((t_kick - out_times[-1]) / period) % 1.0


def _circular_stats(phases: np.ndarray) -> tuple[float, float]:
    z = np.exp(2j * np.pi * phases)
    mean = np.angle(z.mean()) / (2 * np.pi) % 1.0
    r = min(abs(z.mean()), 1.0)
    std = np.sqrt(max(-2.0 * np.log(max(r, 1e-300)), 0.0)) / (2 * np.pi)
    return float(mean), float(std)


def extract_map(params: BursterParams,
                amplitude: float,
                theta_grid,
                eta: float = 0.0,
                n_realizations: int | None = None,
                period: float | None = None,
                master_seed: int = 0,
                relax_periods: float = 2.0,
                readout: str = "termination") -> list[MapSample]:
    """Measure the kick map on a phase grid from direct simulation.

    For ``eta > 0`` the stated ``period`` should be the measured noisy
    mean (the phase-normalization constant); each grid point is averaged
    over ``n_realizations`` independent noise realizations (default 10;
    the noiseless default is 1).  ``readout`` selects the event
    convention: amplitude-threshold burst terminations (default) or the
    last spike peak of each burst; the latter reproduces the staircase
    texture a spike-train recording shows, which the rotationally
    symmetric amplitude events average away.
    """
    if readout not in ("termination", "last_spike"):
        raise ValueError(f"unknown readout {readout!r}")
    theta_grid = np.asarray(theta_grid, float)
    if np.any((theta_grid < 0) | (theta_grid >= 1)):
        raise ValueError("theta grid must lie in [0, 1)")
    if n_realizations is None:
        n_realizations = 10 if eta > 0 else 1
    anchor, period_meas, armed0 = cycle_anchor(params)
    if period is None:
        period = period_meas
    horizon = (relax_periods + 0.6) * period
    samples: list[MapSample] = []
    for i, th in enumerate(theta_grid):
        outs = []
        for r in range(n_realizations):
            if eta > 0:
                def make_rng(i=i, r=r):
                    return rng_stream(master_seed, f"extract/{i}/{r}")
                val = _noisy_probe(params, anchor, armed0, period, th,
                                   amplitude, eta, make_rng, horizon,
                                   settle=1.5 * period_meas,
                                   readout=readout)
            else:
                val = _clean_probe(params, anchor, armed0, period, th,
                                   amplitude, horizon, readout)
            if val is not None:
                outs.append(val)
        if not outs:
            samples.append(MapSample(float(th), np.nan, 0, np.nan, False,
                                     "fewer than two events after the kick"))
            continue
        mean, std = _circular_stats(np.asarray(outs))
        samples.append(MapSample(float(th), mean, len(outs), std))
    return samples


def _plateau_runs(samples: list[MapSample],
                  branch_interval: tuple[float, float],
                  level_tol: float,
                  jump_floor: float) -> list[tuple[float, float]]:
    """Flat runs of the output sequence delimited by genuine jumps.

    A plateau is a maximal run of at least two consecutive valid samples
    whose outputs all stay within ``level_tol`` of each other, bounded
    on both sides by a single-step output jump of at least
    ``jump_floor`` (branch ends also count as delimiters).  The jump
    requirement is what tells a staircase from a smooth shallow branch:
    a smooth branch never produces a large single-step jump, no matter
    the grid density, so its within-tolerance runs end by slope
    accumulation and are not counted.
    """
    lo, hi = branch_interval
    sel = [s for s in samples if s.valid and lo <= s.theta_in < hi]
    sel.sort(key=lambda s: s.theta_in)
    outs = [s.theta_out for s in sel]
    ths = [s.theta_in for s in sel]
    runs = []
    i = 0
    left_delim = True
    while i < len(sel):
        j = i
        run_lo = run_hi = outs[i]
        right_delim = True
        while j + 1 < len(sel):
            step = abs(outs[j + 1] - outs[j])
            if step >= jump_floor:
                break
            nlo = min(run_lo, outs[j + 1])
            nhi = max(run_hi, outs[j + 1])
            if nhi - nlo >= level_tol:
                right_delim = False
                break
            run_lo, run_hi = nlo, nhi
            j += 1
        if j > i and left_delim and right_delim:
            runs.append((ths[i], ths[j]))
        left_delim = right_delim
        i = j + 1
    return runs


def plateau_census(samples: list[MapSample],
                   branch_interval: tuple[float, float],
                   level_tol: float = 1e-3,
                   jump_floor: float = 5e-3) -> int:
    """Count output plateaus among the samples inside one branch."""
    lo, hi = branch_interval
    n_in = sum(1 for s in samples
               if s.valid and lo <= s.theta_in < hi)
    if n_in < 400:
        raise ValueError("plateau census needs >= 400 samples in the "
                         f"branch, got {n_in}")
    return len(_plateau_runs(samples, branch_interval, level_tol,
                             jump_floor))


def plateau_arc_length(samples: list[MapSample],
                       branch_interval: tuple[float, float],
                       level_tol: float = 1e-3,
                       jump_floor: float = 5e-3) -> float:
    """Total theta-width covered by plateaus (see :func:`plateau_census`)."""
    return sum(b - a for a, b in
               _plateau_runs(samples, branch_interval, level_tol,
                             jump_floor))


def samples_from_map(km: KickMap, theta_grid) -> list[MapSample]:
    """Closed-form map evaluated in the sample format (for overlays and
    census cross-checks)."""
    return [MapSample(float(t), float(map_phase(km, t)) % 1.0, 1, 0.0)
            for t in np.asarray(theta_grid, float)]


@dataclass
class AgreementReport:
    """Closed-form vs measured map comparison."""

    n_compared: int
    n_within: int
    fraction_within: float
    max_error: float
    tol: float


def map_agreement(km: KickMap, samples: list[MapSample],
                  tol: float = 0.05,
                  exclude_radius: float = 0.0) -> AgreementReport:
    """Fraction of valid samples within ``tol`` of the closed form.

    ``exclude_radius`` drops samples within that distance of a branch
    border, where a measured point may legitimately sit on either side
    of the discontinuity.
    """
    borders = [br.lo for br in km.branches] + [1.0]
    n = 0
    good = 0
    worst = 0.0
    for s in samples:
        if not s.valid:
            continue
        if exclude_radius > 0.0:
            d = min(min(abs(s.theta_in - b), 1.0 - abs(s.theta_in - b))
                    for b in borders)
            if d < exclude_radius:
                continue
        pred = float(map_phase(km, s.theta_in)) % 1.0
        err = abs((s.theta_out - pred + 0.5) % 1.0 - 0.5)
        n += 1
        worst = max(worst, err)
        if err <= tol:
            good += 1
    return AgreementReport(n_compared=n, n_within=good,
                           fraction_within=good / n if n else 0.0,
                           max_error=worst, tol=tol)


def count_spikes_per_burst(params: BursterParams,
                           m_floor: float = 0.25,
                           sample_dt: float = 0.4) -> int:
    """Spikes in one unperturbed burst, counted from a sampled trajectory.

    A spike is an upward zero crossing of the imaginary fast component
    at positive real part while the fast amplitude is high; the count is
    taken between two settled jump-down events.
    """
    from .model import make_geometry
    cycle = make_geometry(params).cycle_time
    anchor, period, armed0 = cycle_anchor(params)
    n_steps = int(np.ceil(1.2 * period / sample_dt))
    states = np.empty((n_steps + 1, 3))
    state = np.asarray(anchor, float)
    states[0] = state
    events = []
    t = 0.0
    armed = armed0
    hint = 0.05
    for i in range(n_steps):
        sim = simulate(params, sample_dt, state0=state, t0=t, armed=armed,
                       step_hint=hint)
        state = sim.state
        armed = sim.armed
        hint = sim.step_hint
        t += sample_dt
        states[i + 1] = state
        events.extend(sim.event_times)
    if len(events) < 1:
        raise RuntimeError("no complete burst in the sampling window")
    t_end = events[0]
    times = np.arange(n_steps + 1) * sample_dt
    x1, x2 = states[:, 0], states[:, 1]
    m = x1 * x1 + x2 * x2
    inside = times <= t_end
    count = 0
    for i in range(1, len(times)):
        if not inside[i]:
            break
        if (x2[i - 1] < 0.0 <= x2[i] and x1[i] > 0.0
                and m[i] > m_floor):
            count += 1
    if count == 0:
        raise RuntimeError("sampling too coarse to resolve spikes")
    return count
