"""Gaussian moment transport along the silent branch and the noise buffer.

Linearized around the silent branch, the fast subsystem is a rotating
scalar contraction whose strength follows the slow drift.  Because the
Jacobian family commutes with itself, mean and covariance of a noisy
ensemble admit closed forms up to one scalar time integral.  Comparing
the transported distribution of kicked cells against the unkicked one
yields a divergence profile whose threshold crossing marks the buffer
point: the earliest slow value from which a kick survives to the
instability onset instead of drowning in the accumulated noise.  The
buffer point in turn truncates the sub-threshold branch of the kick
map, giving the noisy map variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .integrate import geometry_from_measurement, period_stats, rng_stream
from .kickmap import KickMap, build_kick_map
from .model import (
    BursterParams,
    Y_FOLD,
    Y_HOPF,
    rest_time,
    stable_radius,
)

DIVERGENCE_THRESHOLD = 10.0
_DOMAIN_TOL = 1e-9


@dataclass
class GaussianState:
    """Mean and covariance of the planar fast variable."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, float).reshape(2)
        self.sigma = np.asarray(self.sigma, float).reshape(2, 2)
        if not np.all(np.abs(self.sigma - self.sigma.T) <= 1e-14):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(self.sigma).min() < -1e-14:
            raise ValueError("covariance must be positive semi-definite")


def _slow_value(y_i: float, t: float, params: BursterParams) -> float:
    """Slow variable after time ``t`` of silent drift from ``y_i``."""
    ea = params.eps * params.a
    if params.b == 0.0:
        return y_i + ea * t
    yinf = params.a / params.b
    return yinf + (y_i - yinf) * math.exp(-params.eps * params.b * t)


def _slow_area(y_i: float, t: float, params: BursterParams) -> float:
    """Integral of the slow variable over [0, t] from ``y_i``."""
    if params.b == 0.0:
        return y_i * t + 0.5 * params.eps * params.a * t * t
    eb = params.eps * params.b
    yinf = params.a / params.b
    return yinf * t + (y_i - yinf) * (1.0 - math.exp(-eb * t)) / eb


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _check_domain(y_i: float, t: float, params: BursterParams) -> None:
    if t < 0.0:
        raise ValueError("propagation time must be >= 0")
    y_end = _slow_value(y_i, t, params)
    if y_i < Y_FOLD - _DOMAIN_TOL or y_end > Y_HOPF + _DOMAIN_TOL:
        raise ValueError(
            "linearization domain violated: slow drift covers "
            f"[{y_i:.6g}, {y_end:.6g}], outside [{Y_FOLD}, {Y_HOPF}]")


def _adaptive_simpson(f, a: float, b: float, tol_abs: float) -> np.ndarray:
    """Adaptive Simpson quadrature for a vector-valued integrand.

    Refines until the Richardson error estimate drops below the
    absolute tolerance, which the caller sets from a rough estimate of
    the full integral so that negligible subintervals terminate early.
    """
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, m, b, fa, fm, fb, whole, tol, depth):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = np.abs(left + right - whole).max()
        if depth >= 48 or err <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
                + recurse(m, rm, b, fm, frm, fb, right, 0.5 * tol,
                          depth + 1))

    return recurse(a, m, b, fa, fm, fb, whole, tol_abs, 0)


def propagate_gaussian(initial: GaussianState, y_i: float, t: float,
                       params: BursterParams,
                       eta: float) -> GaussianState:
    """Transport a Gaussian fast-variable state along the silent branch.

    The mean follows the noise-free linear flow: scalar contraction by
    the exponentiated slow-variable area times a rotation.  The
    covariance adds the noise accumulated en route, an integral over
    injection times of the squared contraction applied to a rotating
    rank-one forcing, evaluated by adaptive Simpson quadrature at
    1e-12 relative tolerance.
    """
    _check_domain(y_i, t, params)
    if t == 0.0:
        return GaussianState(initial.mu.copy(), initial.sigma.copy())
    w = params.w
    area = _slow_area(y_i, t, params)
    E = math.exp(area) * _rotation(w * t)
    mu = E @ initial.mu
    sigma = E @ initial.sigma @ E.T
    if eta > 0.0:

        def integrand(s):
            decay = math.exp(2.0 * (area - _slow_area(y_i, s, params)))
            phi = w * (t - s)
            c, sn = math.cos(phi), math.sin(phi)
            return decay * np.array([c * c, c * sn, sn * sn])

        half = math.pi / w if w > 0 else t
        n_seg = max(1, int(math.ceil(t / half)))
        edges = np.linspace(0.0, t, n_seg + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        widths = np.diff(edges)
        rough = sum(wd * np.abs(integrand(md))
                    for md, wd in zip(mids, widths))
        tol_abs = 1e-12 * max(float(rough.max()), 1e-300) / n_seg
        acc = np.zeros(3)
        for lo, hi in zip(edges[:-1], edges[1:]):
            acc += _adaptive_simpson(integrand, lo, hi, tol_abs)
        sigma = sigma + eta * eta * np.array([[acc[0], acc[1]],
                                              [acc[1], acc[2]]])
    sigma = 0.5 * (sigma + sigma.T)
    return GaussianState(mu, sigma)


def natural_distribution(params: BursterParams, eta: float) -> GaussianState:
    """Unkicked ensemble at the instability onset.

    Cells land on the silent branch at the fold with zero mean and
    isotropic variance set by the squared orbit radius there, then
    drift to the instability onset while accumulating noise.
    """
    if eta < 0.0:
        raise ValueError("eta must be >= 0")
    r2 = stable_radius(Y_FOLD) ** 2
    start = GaussianState(np.zeros(2), r2 * np.eye(2))
    t_full = rest_time(Y_HOPF, params)
    return propagate_gaussian(start, Y_FOLD, t_full, params, eta)


def kicked_distribution(params: BursterParams, eta: float, amplitude: float,
                        y: float,
                        natural: GaussianState | None = None) -> GaussianState:
    """Ensemble kicked at slow value ``y``, seen at the instability onset.

    The kick displaces the settled ensemble by ``amplitude`` along the
    real fast axis; the displaced Gaussian then rides the remaining
    silent drift.  Passing a precomputed ``natural`` state avoids
    recomputing its covariance in scans.
    """
    if not Y_FOLD <= y < Y_HOPF:
        raise ValueError("kick slow value must lie in [fold, onset)")
    if natural is None:
        natural = natural_distribution(params, eta)
    start = GaussianState(np.array([amplitude, 0.0]), natural.sigma.copy())
    t_rem = rest_time(Y_HOPF, params) - rest_time(y, params)
    return propagate_gaussian(start, y, t_rem, params, eta)


def kl_symmetric(p: GaussianState, q: GaussianState) -> float:
    """Symmetrized Gaussian divergence: the mean of both KL directions."""
    reg = 1e-300 * np.eye(2)
    s_p = p.sigma + reg
    s_q = q.sigma + reg
    if np.linalg.eigvalsh(s_p).min() <= 0 or np.linalg.eigvalsh(s_q).min() <= 0:
        raise ValueError("covariances must be positive definite")
    dmu = p.mu - q.mu

    def kl(mu_d, s_a, s_b):
        s_b_inv = np.linalg.inv(s_b)
        tr = float(np.trace(s_b_inv @ s_a))
        quad = float(mu_d @ s_b_inv @ mu_d)
        logdet = math.log(np.linalg.det(s_b) / np.linalg.det(s_a))
        return 0.5 * (tr + quad - 2.0 + logdet)

    return 0.5 * (kl(dmu, s_p, s_q) + kl(dmu, s_q, s_p))


@dataclass
class BufferResult:
    """First slow value whose kick outlives the accumulated noise."""

    y_buffer: float
    theta_buffer: float
    d_curve: np.ndarray = field(repr=False)
    period: float
    crossed: bool


def buffer_point(params: BursterParams, eta: float, amplitude: float,
                 n_grid: int = 400, period: float | None = None,
                 master_seed: int = 0,
                 threshold: float = DIVERGENCE_THRESHOLD) -> BufferResult:
    """Scan the silent branch for the divergence threshold crossing.

    The divergence between kicked and natural ensembles is sampled on a
    uniform slow-value grid and the first upward crossing of
    ``threshold`` is refined by bisection to 1e-6.  The crossing value
    converts to a phase through the rest clock, normalized by the mean
    noisy period (measured when not supplied).  Without a crossing the
    buffer is inactive: the fold value and phase zero are returned.
    """
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    if not 0.0 < amplitude < 1.0:
        raise ValueError("amplitude must lie in (0, 1)")
    if period is None:
        stats = period_stats(params, n_cycles=50, eta=eta,
                             rng=rng_stream(master_seed, "buffer-period"))
        period = stats.mean
    natural = natural_distribution(params, eta)

    def d_of(y):
        kicked = kicked_distribution(params, eta, amplitude, y,
                                     natural=natural)
        return kl_symmetric(kicked, natural)

    ys = np.linspace(Y_FOLD, Y_HOPF, n_grid, endpoint=False)
    ds = np.array([d_of(y) for y in ys])
    curve = np.column_stack([ys, ds])
    above = np.nonzero(ds >= threshold)[0]
    if len(above) == 0 or above[0] == 0:
        crossed = len(above) > 0
        y_b = Y_FOLD
        theta_b = 0.0
        return BufferResult(y_buffer=y_b, theta_buffer=theta_b,
                            d_curve=curve, period=period, crossed=crossed)
    lo, hi = ys[above[0] - 1], ys[above[0]]
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if d_of(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    y_b = hi
    theta_b = rest_time(y_b, params) / period
    return BufferResult(y_buffer=y_b, theta_buffer=theta_b, d_curve=curve,
                        period=period, crossed=True)


def build_noisy_kick_map(params: BursterParams, eta: float, amplitude: float,
                         master_seed: int = 0, n_cycles: int = 50,
                         cv_max: float = 2e-2) -> KickMap:
    """Kick map for the noisy burster.

    Burst statistics are measured first; if the period's coefficient of
    variation exceeds ``cv_max`` the cycle is too irregular for a phase
    description and the construction refuses.  Otherwise the branch
    geometry is rebuilt around the measured jump-up value and mean
    period, and the sub-threshold branch is truncated at the buffer
    phase, below which kicks are indistinguishable from noise and act
    as the identity.
    """
    stats = period_stats(params, n_cycles=n_cycles, eta=eta,
                         rng=rng_stream(master_seed, "noisy-period"))
    if stats.cv > cv_max:
        raise RuntimeError(
            "phase reduction invalid: period CV "
            f"{stats.cv:.3e} exceeds {cv_max:.1e}")
    geom = geometry_from_measurement(params, stats.jump_y_median, stats.mean)
    buf = buffer_point(params, eta, amplitude, period=stats.mean,
                       master_seed=master_seed)
    return build_kick_map(geom, amplitude, head_phase=buf.theta_buffer)
