"""Map extraction from simulations: sampling, census, agreement."""

import numpy as np
import pytest

from burstmap.extract import (MapSample, count_spikes_per_burst,
                              default_theta_grid, extract_map, map_agreement,
                              plateau_arc_length, plateau_census,
                              samples_from_map)


def test_default_theta_grid_covers_the_interval(geom_b0):
    grid = default_theta_grid(0.5, geom_b0)
    assert ((grid >= 0.0) & (grid < 1.0)).all()
    assert len(grid) >= 200
    assert len(np.unique(grid)) == len(grid)


def test_extracted_map_matches_the_closed_form(km_half, geom_b0):
    grid = (np.arange(101) + 0.5) / 101
    samples = extract_map(geom_b0.params, 0.5, grid)
    assert all(s.valid for s in samples)
    assert all(s.n_realizations == 1 for s in samples)
    rep = map_agreement(km_half, samples, tol=0.05, exclude_radius=0.02)
    assert rep.tol == 0.05
    assert rep.fraction_within >= 0.95


def test_extraction_readouts_differ_slightly(geom_b0):
    grid = np.array([0.25, 0.7])
    by_term = extract_map(geom_b0.params, 0.5, grid)
    by_spike = extract_map(geom_b0.params, 0.5, grid,
                           readout="last_spike")
    for a, b in zip(by_term, by_spike):
        assert a.theta_out != b.theta_out
        assert abs(a.theta_out - b.theta_out) < 0.05


def test_extract_map_validation(geom_b0):
    with pytest.raises(ValueError, match="theta grid must lie in"):
        extract_map(geom_b0.params, 0.5, np.array([0.2, 1.2]))
    with pytest.raises(ValueError):
        extract_map(geom_b0.params, 0.5, np.array([0.2]),
                    readout="midpoint")


def test_plateau_census_counts_a_staircase():
    ths = 0.2 + 0.4 * (np.arange(500) + 0.5) / 500
    stairs = 0.30 + 0.05 * np.floor((ths - 0.2) / 0.08)
    samples = [MapSample(t, o, 1, 0.0) for t, o in zip(ths, stairs)]
    assert plateau_census(samples, (0.2, 0.6)) == 5
    assert 0.38 < plateau_arc_length(samples, (0.2, 0.6)) < 0.40


def test_plateau_census_ignores_a_smooth_ramp():
    ths = 0.2 + 0.4 * (np.arange(500) + 0.5) / 500
    ramp = 0.3 + 0.5 * (ths - 0.2)
    samples = [MapSample(t, o, 1, 0.0) for t, o in zip(ths, ramp)]
    assert plateau_census(samples, (0.2, 0.6)) == 0
    assert plateau_arc_length(samples, (0.2, 0.6)) == 0.0


def test_plateau_census_needs_enough_samples():
    samples = [MapSample(t, 0.5, 1, 0.0) for t in np.linspace(0.2, 0.6, 50)]
    with pytest.raises(ValueError, match="needs >= 400 samples"):
        plateau_census(samples, (0.2, 0.6))


def test_samples_from_map_round_trip(km_half):
    grid = (np.arange(61) + 0.5) / 61
    samples = samples_from_map(km_half, grid)
    rep = map_agreement(km_half, samples, tol=0.05)
    assert rep.n_compared == 61
    assert rep.fraction_within == 1.0
    assert rep.max_error < 1e-12


def test_map_agreement_counts_disagreements_circularly(km_half):
    grid = (np.arange(50) + 0.5) / 50
    samples = samples_from_map(km_half, grid)
    # push ten outputs off by 0.2 and one by a near-full wrap, which is
    # a small distance on the circle
    for s in samples[:10]:
        s.theta_out = (s.theta_out + 0.2) % 1.0
    samples[20].theta_out = (samples[20].theta_out + 0.98) % 1.0
    rep = map_agreement(km_half, samples, tol=0.05)
    assert rep.n_within == 40
    assert rep.max_error == pytest.approx(0.2, abs=1e-9)


def test_spike_count_per_burst(geom_b0):
    # frozen from a direct spike count over one settled burst
    assert count_spikes_per_burst(geom_b0.params) == 34
