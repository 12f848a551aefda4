"""Phase-map dynamics: synchrony scores, orbits, certificates, measures."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from burstmap.compose import doublet_map
from burstmap.dynamics import (ShiftedMap, fixed_phases, iterate_population,
                               jittered_iterate, lemma1_certificate, lyapunov,
                               orbit_diagram, synchrony, ulam_matrix,
                               ulam_measure, w_bar)
from burstmap.kickmap import map_phase, map_slope


def test_shifted_map_adds_the_drive_offset(km_half):
    sm = ShiftedMap(km_half, 0.3)
    for th in (0.0, 0.1, 0.45, 0.9):
        assert sm.phase(th) == pytest.approx(
            (map_phase(km_half, th) + 0.3) % 1.0, abs=1e-12)
        assert sm.slope(th) == pytest.approx(map_slope(km_half, th),
                                             abs=1e-12)
    assert sm.borders == tuple(br.lo for br in km_half.branches)
    with pytest.raises(ValueError, match="tau must lie in"):
        ShiftedMap(km_half, 1.0)


def test_synchrony_extremes():
    tight = synchrony(np.full(30, 0.37))
    assert tight.W == pytest.approx(1.0, abs=1e-12)
    assert tight.R == pytest.approx(1.0, abs=1e-12)
    assert tight.H == pytest.approx(0.0, abs=1e-12)
    spread = synchrony((np.arange(30) + 0.5) / 30)
    assert spread.W == pytest.approx(0.0, abs=1e-12)
    assert spread.H == pytest.approx(1.0, abs=1e-12)
    assert spread.R == pytest.approx(0.0, abs=1e-12)
    single = synchrony(np.array([0.25]))
    assert single.W == 1.0


def test_synchrony_combines_spread_and_alignment():
    phases = np.array([0.02, 0.03, 0.51, 0.52, 0.53])
    s = synchrony(phases, n_bins=10)
    assert s.W == pytest.approx(0.5 * (s.R + 1.0 - s.H), abs=1e-12)


@given(
    phases=st.lists(
        st.floats(min_value=0.0, max_value=1.0, exclude_max=True),
        min_size=1, max_size=40),
    n_bins=st.one_of(st.none(), st.integers(min_value=1, max_value=60)),
)
def test_synchrony_scores_stay_in_range(phases, n_bins):
    s = synchrony(np.array(phases), n_bins=n_bins)
    assert 0.0 <= s.H <= 1.0
    assert 0.0 <= s.R <= 1.0
    assert 0.0 <= s.W <= 1.0


def test_synchrony_needs_a_phase():
    with pytest.raises(ValueError, match="need at least one phase"):
        synchrony(np.array([]))


def test_iterate_population_applies_the_map_cellwise(km_half):
    start = (np.arange(15) + 0.5) / 15
    sm = ShiftedMap(km_half, 0.2)
    trace = iterate_population(km_half, 0.2, start, 8)
    assert len(trace) == 9
    assert np.allclose(trace[0], start)
    for prev, cur in zip(trace[:-1], trace[1:]):
        assert np.allclose(cur, [sm.phase(v) for v in prev], atol=1e-12)


def test_w_bar_averages_the_late_window():
    rng = np.random.default_rng(2)
    trace = [rng.random(12) for _ in range(9)]
    for m, k in ((8, 3), (5, 2), (8, 1)):
        manual = np.mean([synchrony(trace[j]).W
                          for j in range(m - k, m + 1)])
        assert w_bar(trace, m=m, k=k) == pytest.approx(manual, abs=1e-12)
    with pytest.raises(ValueError, match="need 1 <= k <= m"):
        w_bar(trace, m=5, k=6)


def test_lyapunov_frozen_value(km_half):
    est = lyapunov(km_half, 0.1, 0.1234, n_iter=2000)
    # frozen from a 2000-step orbit of this map
    assert est.lam == pytest.approx(0.14113062733007634, abs=1e-12)
    assert est.n_terms == 2000
    assert est.excluded == 0


def test_lyapunov_is_the_mean_log_slope(km_half):
    est = lyapunov(km_half, 0.1, 0.37, n_iter=25)
    sm = ShiftedMap(km_half, 0.1)
    th, logs = 0.37, []
    for _ in range(25):
        logs.append(np.log(abs(sm.slope(th))))
        th = sm.phase(th)
    assert est.lam == pytest.approx(np.mean(logs), abs=1e-14)
    assert est.excluded == 0


def test_fixed_phases_finds_the_locked_orbit(km_half):
    fps = fixed_phases(km_half, 0.5)
    assert len(fps) == 1
    fp = fps[0]
    # frozen by bisecting the displacement of this map
    assert fp == pytest.approx(0.22371772926345587, abs=1e-9)
    sm = ShiftedMap(km_half, 0.5)
    assert sm.phase(fp) == pytest.approx(fp, abs=1e-10)
    assert sm.slope(fp) == pytest.approx(-0.7199970830433639, abs=1e-6)
    assert abs(sm.slope(fp)) < 1.0


def test_fixed_phases_strong_train(km_strong):
    fps = fixed_phases(km_strong, 0.4)
    assert len(fps) == 1
    assert fps[0] == pytest.approx(0.166974697208647, abs=1e-9)
    assert ShiftedMap(km_strong, 0.4).slope(fps[0]) == pytest.approx(
        -0.8104270311029536, abs=1e-6)


def test_fixed_phases_on_a_composed_map(geom_b0):
    d = doublet_map(1.5, 0.4, 0.5, 0.375, geom_b0)
    fps = fixed_phases(d, None)
    assert len(fps) == 2
    assert fps[0] == pytest.approx(0.241509, abs=1e-4)
    assert fps[1] == pytest.approx(0.791975, abs=1e-4)
    slopes = [d.slope(x) for x in fps]
    assert abs(slopes[0]) > 1.0  # repelling
    assert abs(slopes[1]) < 1.0  # attracting
    with pytest.raises(ValueError, match="baked into a composed map"):
        fixed_phases(d, 0.2)


def test_certificate_holds_in_the_chaotic_window(km_half):
    cert = lemma1_certificate(km_half, 0.1)
    assert cert.holds
    assert cert.failed_clause is None or cert.failed_clause == ""
    assert cert.escape_steps == 5
    # frozen from the interval slope scan of this map
    assert cert.slope_lo_expand == pytest.approx(2.4955973723975844,
                                                 abs=1e-9)
    assert cert.slope_lo_middle == pytest.approx(0.49559737239758445,
                                                 abs=1e-9)
    assert cert.lower_bound == pytest.approx(0.030362385322495116, abs=1e-12)
    expected = (np.log(cert.slope_lo_expand)
                + np.log(cert.slope_lo_middle)) / (2 + cert.escape_steps)
    assert cert.lower_bound == pytest.approx(expected, abs=1e-12)


def test_certificate_fails_when_the_wrap_overshoots(km_half):
    cert = lemma1_certificate(km_half, 0.5)
    assert not cert.holds
    assert cert.failed_clause == ("shifted reset-branch image is not "
                                  "contained in the hold interval")


def test_ulam_matrix_rows_are_distributions(km_half):
    P = ulam_matrix(km_half, 0.1, n_bins=60, samples_per_bin=50)
    assert P.shape == (60, 60)
    assert (P >= 0.0).all()
    assert np.abs(P.sum(axis=1) - 1.0).max() < 1e-12
    with pytest.raises(ValueError, match="at least 50 bins"):
        ulam_matrix(km_half, 0.1, n_bins=10)
    with pytest.raises(ValueError, match="at least 50 samples per bin"):
        ulam_matrix(km_half, 0.1, samples_per_bin=10)


def test_ulam_measure_is_stationary(km_half):
    meas = ulam_measure(km_half, 0.1, n_bins=60, samples_per_bin=50)
    pi = meas.density
    assert (pi >= 0.0).all()
    assert pi.sum() == pytest.approx(1.0, abs=1e-9)
    assert meas.residual < 1e-8
    P = ulam_matrix(km_half, 0.1, n_bins=60, samples_per_bin=50)
    assert np.abs(pi @ P - pi).sum() < 1e-8
    assert meas.support_fraction() == pytest.approx(1.0, abs=1e-12)


def test_ulam_measure_concentrates_at_the_lock(km_half):
    meas = ulam_measure(km_half, 0.5, n_bins=60, samples_per_bin=50)
    # above a floor that hides power-iteration crumbs, the support is
    # a single cell around the locked phase
    assert meas.support_fraction(1e-6) == pytest.approx(1.0 / 60, abs=1e-12)
    peak_bin = int(np.argmax(meas.density))
    lo, hi = meas.edges[peak_bin], meas.edges[peak_bin + 1]
    fp = fixed_phases(km_half, 0.5)[0]
    assert lo - 1.0 / 60 <= fp <= hi + 1.0 / 60


def test_jittered_iterate_without_jitter_is_deterministic(km_half):
    rng = np.random.default_rng(0)
    tr = np.asarray(jittered_iterate(km_half, 0.1, 0.0, 40, 30, rng))
    assert tr.shape == (31, 40)
    assert ((tr >= 0.0) & (tr < 1.0)).all()
    start = (np.arange(40) + 0.5) / 40
    det = iterate_population(km_half, 0.1, start, 30)
    assert np.allclose(tr[-1], det[-1], atol=1e-12)


def test_jittered_iterate_rejects_negative_spread(km_half):
    with pytest.raises(ValueError):
        jittered_iterate(km_half, 0.1, -0.1, 10, 5,
                         np.random.default_rng(0))


def test_orbit_diagram_separates_the_regimes(km_half):
    rows = orbit_diagram(km_half, np.array([0.1, 0.5]), n_cells=60,
                         n_iter=120, k=20)
    assert [r.tau for r in rows] == [0.1, 0.5]
    mixing, locked = rows
    assert mixing.w_bar < 0.5 < locked.w_bar
    assert mixing.lam_mean > 0.0 > locked.lam_mean
    for r in rows:
        assert len(r.phases) == 60
        assert ((r.phases >= 0.0) & (r.phases < 1.0)).all()
