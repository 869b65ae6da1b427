"""Time grid and survival-curve container behaviour."""

import numpy as np
import pytest

from rtnsurv.grid import SurvivalCurve, TimeGrid, curve_from_cdf, curve_median, grid_for_durations


def test_grid_points_and_bins():
    g = TimeGrid(origin=0.0, resolution=5, t_max=30)
    np.testing.assert_array_equal(g.offsets(), [0, 5, 10, 15, 20, 25, 30])
    assert g.bin_index(1.0) == 1
    assert g.bin_index(5.0) == 1
    assert g.bin_index(5.1) == 2
    assert g.bin_index(400.0) == g.n_points - 1


def test_grid_rejects_bad_resolution():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 7, 30)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0, 30)


def test_grid_for_durations_adds_margin():
    g = grid_for_durations([100.0], resolution=5)
    assert g.t_max == 120
    g = grid_for_durations([99.0], resolution=1)
    assert g.t_max == int(np.ceil(99 * 1.2))


def test_curve_median_conventions():
    g = TimeGrid(0.0, 10, 20)
    c = SurvivalCurve(g, [0.0, 0.5, 0.5])
    assert curve_median(c) == 10.0

    g = TimeGrid(0.0, 1, 100)
    pmf = np.zeros(101)
    pmf[1:] = 1.0 / 100.0
    assert curve_median(SurvivalCurve(g, pmf)) == 50.0

    g = TimeGrid(0.0, 5, 45)
    pmf = np.zeros(10)
    pmf[[1, 3, 5, 7, 9]] = 0.2
    assert curve_median(SurvivalCurve(g, pmf)) == 25.0


def test_curve_invariants():
    g = TimeGrid(0.0, 1, 10)
    rng = np.random.default_rng(0)
    pmf = rng.random(11)
    pmf /= pmf.sum()
    c = SurvivalCurve(g, pmf)
    cdf = c.cdf()
    assert np.all(np.diff(cdf) >= -1e-15)
    assert cdf[-1] == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(c.survival(), 1.0 - cdf)


def test_curve_rejects_bad_mass():
    g = TimeGrid(0.0, 1, 2)
    with pytest.raises(ValueError):
        SurvivalCurve(g, [0.5, 0.6, 0.5])
    with pytest.raises(ValueError):
        SurvivalCurve(g, [-0.1, 0.6, 0.5])


def test_cdf_at_step_lookup():
    g = TimeGrid(0.0, 5, 15)
    c = SurvivalCurve(g, [0.0, 0.25, 0.25, 0.5])
    assert c.cdf_at(-1.0) == 0.0
    assert c.cdf_at(0.0) == 0.0
    assert c.cdf_at(5.0) == pytest.approx(0.25)
    assert c.cdf_at(7.0) == pytest.approx(0.25)
    assert c.cdf_at(10.0) == pytest.approx(0.5)
    assert c.cdf_at(1000.0) == pytest.approx(1.0)


def test_curve_from_cdf_absorbs_residual_mass():
    g = TimeGrid(0.0, 1, 3)
    c = curve_from_cdf(g, np.array([0.0, 0.2, 0.3, 0.6]))
    assert c.pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert c.pmf[-1] == pytest.approx(0.3 + 0.4)
