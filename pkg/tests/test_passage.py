"""Stochastic rest-passage analysis: Gaussian transport, divergence."""

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from burstmap.model import rest_y
from burstmap.passage import (GaussianState, buffer_point,
                              build_noisy_kick_map, kicked_distribution,
                              kl_symmetric, natural_distribution,
                              propagate_gaussian)


def test_gaussian_state_validation():
    with pytest.raises(ValueError, match="must be symmetric"):
        GaussianState(np.zeros(2), np.array([[1.0, 0.2], [0.1, 1.0]]))
    with pytest.raises(ValueError, match="positive semi-definite"):
        GaussianState(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
    ok = GaussianState(np.array([0.1, 0.2]), np.eye(2) * 1e-4)
    assert ok.mu.shape == (2,)


def _moment_oracle(init, y_i, t_end, p, eta):
    """First and second moments by direct integration of the linear
    drift, the independent route the closed form must match."""

    def rhs(t, s):
        y = rest_y(t, p, y0=y_i)
        a_mat = np.array([[y, -p.w], [p.w, y]])
        mu = s[:2]
        cov = np.array([[s[2], s[3]], [s[3], s[4]]])
        dmu = a_mat @ mu
        dcov = a_mat @ cov + cov @ a_mat.T
        dcov[0, 0] += eta * eta
        return [dmu[0], dmu[1], dcov[0, 0], dcov[0, 1], dcov[1, 1]]

    s0 = [init.mu[0], init.mu[1], init.sigma[0, 0], init.sigma[0, 1],
          init.sigma[1, 1]]
    sol = solve_ivp(rhs, (0.0, t_end), s0, rtol=1e-12, atol=1e-20)
    mu = sol.y[:2, -1]
    cov = np.array([[sol.y[2, -1], sol.y[3, -1]],
                    [sol.y[3, -1], sol.y[4, -1]]])
    return mu, cov


@pytest.mark.parametrize("name,y_i,t_end,eta", [
    ("b0", -0.9, 50.0, 0.05),
    ("b0", -0.3, 35.0, 0.0),
    ("b05", -0.8, 30.0, 0.02),
])
def test_propagation_matches_the_moment_equations(geom_b0, geom_b05, name,
                                                  y_i, t_end, eta):
    geom = {"b0": geom_b0, "b05": geom_b05}[name]
    init = GaussianState(np.array([0.03, -0.02]),
                         np.array([[4e-4, 1e-4], [1e-4, 3e-4]]))
    out = propagate_gaussian(init, y_i, t_end, geom.params, eta)
    mu_o, cov_o = _moment_oracle(init, y_i, t_end, geom.params, eta)
    scale = max(np.abs(cov_o).max(), 1e-30)
    assert np.abs(out.mu - mu_o).max() < 1e-8
    assert np.abs(out.sigma - cov_o).max() / scale < 1e-8


def test_propagation_contracts_and_rotates_the_mean(geom_b0):
    p = geom_b0.params
    y_i, t_end = -0.7, 80.0
    init = GaussianState(np.array([0.05, 0.0]), np.eye(2) * 1e-6)
    out = propagate_gaussian(init, y_i, t_end, p, 0.0)
    area, _ = quad(lambda s: rest_y(s, p, y0=y_i), 0.0, t_end)
    gain = np.exp(area)
    ang = p.w * t_end
    expected = gain * np.array([
        0.05 * np.cos(ang), 0.05 * np.sin(ang)])
    assert np.abs(out.mu - expected).max() < 1e-10 * max(gain, 1.0)


def test_noise_variance_scales_with_eta_squared(geom_b0):
    p = geom_b0.params
    init = GaussianState(np.zeros(2), np.zeros((2, 2)))
    s1 = propagate_gaussian(init, -0.9, 50.0, p, 0.01).sigma
    s2 = propagate_gaussian(init, -0.9, 50.0, p, 0.02).sigma
    assert s2[0, 0] / s1[0, 0] == pytest.approx(4.0, rel=1e-10)
    assert s2[1, 1] / s1[1, 1] == pytest.approx(4.0, rel=1e-10)


def test_propagation_domain_errors(geom_b0):
    init = GaussianState(np.zeros(2), np.eye(2) * 1e-6)
    p = geom_b0.params
    with pytest.raises(ValueError, match="propagation time must be"):
        propagate_gaussian(init, -0.5, -1.0, p, 0.0)
    with pytest.raises(ValueError, match="linearization domain violated"):
        propagate_gaussian(init, -0.5, 1e4, p, 0.0)


def test_kl_identity_and_symmetry():
    pg = GaussianState(np.array([0.1, -0.05]),
                       np.array([[2e-3, 5e-4], [5e-4, 1e-3]]))
    qg = GaussianState(np.array([0.16, 0.02]),
                       np.array([[1e-3, -2e-4], [-2e-4, 3e-3]]))
    assert kl_symmetric(pg, pg) == 0.0
    assert kl_symmetric(pg, qg) == pytest.approx(kl_symmetric(qg, pg),
                                                 abs=1e-12)
    # a covariance with a (numerically) negative eigenvalue passes the
    # looser state check but is useless for a divergence
    flat = GaussianState(np.zeros(2),
                         np.array([[1e-15, 2e-15], [2e-15, 1e-15]]))
    with pytest.raises(ValueError, match="positive definite"):
        kl_symmetric(pg, flat)


def test_kl_matches_monte_carlo():
    pg = GaussianState(np.array([0.1, -0.05]),
                       np.array([[2e-3, 5e-4], [5e-4, 1e-3]]))
    qg = GaussianState(np.array([0.16, 0.02]),
                       np.array([[1e-3, -2e-4], [-2e-4, 3e-3]]))
    rng = np.random.default_rng(11)

    def mc_direction(a, b, n=400_000):
        x = rng.multivariate_normal(a.mu, a.sigma, size=n)
        ia, ib = np.linalg.inv(a.sigma), np.linalg.inv(b.sigma)
        da, db = x - a.mu, x - b.mu
        la = (-0.5 * np.einsum("ni,ij,nj->n", da, ia, da)
              - 0.5 * np.log(np.linalg.det(a.sigma)))
        lb = (-0.5 * np.einsum("ni,ij,nj->n", db, ib, db)
              - 0.5 * np.log(np.linalg.det(b.sigma)))
        return (la - lb).mean()

    mc = 0.5 * (mc_direction(pg, qg) + mc_direction(qg, pg))
    assert kl_symmetric(pg, qg) == pytest.approx(mc, rel=0.01)


def test_natural_distribution_is_centered_noise(geom_b0):
    nat = natural_distribution(geom_b0.params, 1e-3)
    assert np.all(nat.mu == 0.0)
    assert nat.sigma[0, 0] == pytest.approx(nat.sigma[1, 1], rel=1e-6)
    eigs = np.linalg.eigvalsh(nat.sigma)
    assert eigs.min() > 0.0
    quiet = natural_distribution(geom_b0.params, 0.0)
    assert np.abs(quiet.sigma).max() < 1e-50
    with pytest.raises(ValueError, match="eta must be >= 0"):
        natural_distribution(geom_b0.params, -1e-3)


def test_kicked_distribution_domain(geom_b0):
    with pytest.raises(ValueError, match="kick slow value"):
        kicked_distribution(geom_b0.params, 1e-3, 0.5, 0.2)
    kicked = kicked_distribution(geom_b0.params, 1e-3, 0.5, -0.5)
    # the displaced mean contracts during the remaining rest passage
    assert np.hypot(*kicked.mu) < 0.5
    assert np.linalg.eigvalsh(kicked.sigma).min() > 0.0


def test_buffer_point_at_fixed_period(geom_b0):
    buf = buffer_point(geom_b0.params, 1e-3, 0.5, n_grid=80, period=450.0)
    assert buf.crossed
    assert buf.d_curve.shape == (80, 2)
    # frozen from the bisected divergence crossing of this curve
    assert buf.theta_buffer == pytest.approx(0.20818625556098086, abs=1e-6)
    assert buf.y_buffer == pytest.approx(-0.2505294799804688, abs=1e-4)
    assert buf.period == 450.0


def test_buffer_point_validation(geom_b0):
    with pytest.raises(ValueError, match="eta must be > 0"):
        buffer_point(geom_b0.params, 0.0, 0.5, period=450.0)
    with pytest.raises(ValueError, match="amplitude must lie in"):
        buffer_point(geom_b0.params, 1e-3, 1.5, period=450.0)


def test_noisy_kick_map_rejects_wide_period_jitter(geom_b0):
    with pytest.raises(RuntimeError, match="phase reduction invalid"):
        build_noisy_kick_map(geom_b0.params, 1e-3, 0.5, master_seed=0,
                             n_cycles=12, cv_max=1e-9)
