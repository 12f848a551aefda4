"""Kick-train composition: stages, doublets, validity checks."""

import numpy as np
import pytest

from burstmap.compose import ComposedMap, Stage, doublet_map
from burstmap.kickmap import map_phase


def test_doublet_equals_manual_alternation(km_half, km_strong, geom_b0):
    d = doublet_map(1.5, 0.4, 0.5, 0.375, geom_b0)
    ths = np.random.default_rng(7).random(200)
    after_strong = (map_phase(km_strong, ths) + 0.375) % 1.0
    manual = (map_phase(km_half, after_strong) + (1.4 - 0.375)) % 1.0
    via = np.array([d.phase(t) for t in ths])
    assert np.allclose(via, manual, atol=1e-12)


def test_doublet_borders(geom_b0):
    d = doublet_map(1.5, 0.4, 0.5, 0.375, geom_b0)
    # frozen from the pullback partition of this doublet
    expected = [0.0, 0.155276, 0.377779, 0.538993, 0.625, 0.776592]
    assert len(d.borders) == len(expected)
    for got, want in zip(d.borders, expected):
        assert got == pytest.approx(want, abs=1e-5)


def test_composed_slope_matches_difference(geom_b0):
    d = doublet_map(1.5, 0.4, 0.5, 0.375, geom_b0)
    h = 1e-7
    borders = np.array(list(d.borders) + [1.0])
    for th in (0.08, 0.2, 0.45, 0.58, 0.7, 0.9):
        assert np.abs(borders - th).min() > 1e-3
        fd = (d.phase(th + h) - d.phase(th - h)) / (2 * h)
        assert d.slope(th) == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_lift_reduces_to_the_phase(geom_b0):
    d = doublet_map(1.5, 0.4, 0.5, 0.375, geom_b0)
    for th in (0.1, 0.33, 0.6, 0.85):
        assert d.phase(th) == pytest.approx(d.lift(th) % 1.0, abs=1e-12)
        assert d(th) == d.phase(th)


def test_composition_rejects_a_mid_passage_kick(geom_b0):
    # a sub-threshold first kick can leave cells drifting toward an
    # early jump; a second kick before they burst is not composable
    with pytest.raises(ValueError, match="invalid composition for theta"):
        doublet_map(0.5, 0.5, 0.5, 0.05, geom_b0)
    with pytest.raises(ValueError, match="re-enter spiking"):
        doublet_map(0.5, 0.5, 0.5, 0.05, geom_b0)


def test_zero_amplitude_stages_compose_to_a_rotation(km_zero):
    full_turn = ComposedMap([Stage(km_zero, 0.3), Stage(km_zero, 0.7)])
    quarter = ComposedMap([Stage(km_zero, 0.25)])
    for th in (0.0, 0.2, 0.55, 0.99):
        assert full_turn.phase(th) == pytest.approx(th, abs=1e-12)
        assert quarter.phase(th) == pytest.approx((th + 0.25) % 1.0,
                                                  abs=1e-12)
        assert quarter.slope(th) == pytest.approx(1.0, abs=1e-12)


def test_stage_validation(km_zero):
    with pytest.raises(ValueError, match="need at least one stage"):
        ComposedMap([])
    with pytest.raises(ValueError, match="delay must be > 0"):
        ComposedMap([Stage(km_zero, 0.0)])


def test_doublet_gap_validation(geom_b0):
    with pytest.raises(ValueError, match="need 0 < tau_gap < tau_cycle"):
        doublet_map(1.5, 0.4, 0.5, 0.4, geom_b0)
