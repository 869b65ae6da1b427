"""Weekly profile construction and return-to-normal labeling."""

import numpy as np
import pytest

from rtnsurv.baseline import (
    LabeledIncident,
    build_profile,
    compute_residuals,
    detect_rtn,
    label_corpus,
    prefilter_mask,
)
from rtnsurv.datagen import MINUTES_PER_WEEK, RawSeries, SyntheticConfig, generate_corpus

W = MINUTES_PER_WEEK


def series_of(values, channel="speed", link="L000"):
    return RawSeries(link, channel, np.asarray(values, dtype=float))


def test_profile_of_constant_series():
    s = series_of(np.full(2 * W, 100.0))
    prof = build_profile(s, np.zeros(2 * W, dtype=bool))
    assert np.all(prof.slots == 100.0)


def test_profile_median_of_three_weeks():
    base = np.full(3 * W, 80.0)
    base[0], base[W], base[2 * W] = 50.0, 60.0, 70.0
    prof = build_profile(series_of(base), np.zeros(3 * W, dtype=bool))
    assert prof.slots[0] == 60.0


def test_profile_mask_removes_outlier():
    base = np.full(4 * W, 80.0)
    base[0], base[W], base[2 * W], base[3 * W] = 50.0, 60.0, 70.0, 200.0
    mask = np.zeros(4 * W, dtype=bool)
    mask[3 * W] = True
    prof = build_profile(series_of(base), mask)
    assert prof.slots[0] == 60.0


def test_profile_interpolates_empty_slots():
    base = np.full(2 * W, 100.0)
    mask = np.zeros(2 * W, dtype=bool)
    mask[5], mask[W + 5] = True, True  # slot 5 has no unmasked samples
    prof = build_profile(series_of(base), mask)
    assert prof.slots[5] == pytest.approx(100.0)
    assert prof.interpolated_slots == (5,)


def test_profile_of_periodic_series_is_one_period():
    rng = np.random.default_rng(0)
    week = rng.uniform(60.0, 120.0, W)
    s = series_of(np.tile(week, 3))
    prof = build_profile(s, np.zeros(3 * W, dtype=bool))
    np.testing.assert_allclose(prof.slots, week, atol=1e-12)


def test_profile_rejects_partial_weeks():
    with pytest.raises(ValueError):
        build_profile(series_of(np.ones(W + 10)), np.zeros(W + 10, dtype=bool))


def test_residual_identity_and_linearity():
    rng = np.random.default_rng(1)
    week = rng.uniform(60.0, 120.0, W)
    s = series_of(np.tile(week, 2))
    prof = build_profile(s, np.zeros(2 * W, dtype=bool))
    np.testing.assert_allclose(compute_residuals(s, prof), 0.0, atol=1e-12)

    shifted = series_of(np.tile(week, 2) + 5.0)
    np.testing.assert_allclose(compute_residuals(shifted, prof), 5.0, atol=1e-12)


def test_residual_subtraction():
    week = np.full(W, 100.0)
    prof = build_profile(series_of(np.tile(week, 2)), np.zeros(2 * W, dtype=bool))
    s = series_of(np.full(2 * W, 80.0))
    assert compute_residuals(s, prof)[17] == pytest.approx(-20.0)


def test_detect_rtn_run_rule():
    values = np.full(2 * W, 100.0)
    prof = build_profile(series_of(values), np.zeros(2 * W, dtype=bool))
    # drop below the shifted profile until flag+5, recover after
    values2 = values.copy()
    flag = 1000
    values2[flag:flag + 5] = 100.0 - 20.0
    rec = detect_rtn(series_of(values2), prof, flag)
    assert rec.rtn == flag + 5
    assert rec.duration == 5
    assert rec.event == 1


def test_detect_rtn_persistence_failure_censors():
    values = np.full(2 * W, 100.0)
    prof = build_profile(series_of(values), np.zeros(2 * W, dtype=bool))
    values2 = values - 20.0          # always below threshold
    flag = 500
    values2[flag + 10:flag + 12] = 100.0   # only 2 minutes above
    rec = detect_rtn(series_of(values2), prof, flag)
    assert rec.censored
    assert rec.rtn == values2.size
    assert rec.event == 0


def test_detect_rtn_translation_equivariance():
    rng = np.random.default_rng(3)
    week = rng.uniform(80.0, 120.0, W)
    base = np.tile(week, 4)
    prof = build_profile(series_of(base), np.zeros(4 * W, dtype=bool))
    values = base.copy()
    flag = 2000
    dur = 45
    values[flag:flag + dur] -= 30.0
    rec1 = detect_rtn(series_of(values), prof, flag)

    shifted = base.copy()
    shifted[flag + W:flag + W + dur] -= 30.0
    rec2 = detect_rtn(series_of(shifted), prof, flag + W)
    assert rec2.rtn == rec1.rtn + W


def test_detect_rtn_rejects_bad_flag():
    values = np.full(2 * W, 100.0)
    prof = build_profile(series_of(values), np.zeros(2 * W, dtype=bool))
    with pytest.raises(ValueError):
        detect_rtn(series_of(values), prof, 2 * W + 5)


def test_prefilter_masks_flags_and_spikes():
    rng = np.random.default_rng(4)
    values = np.full(2 * W, 100.0) + rng.normal(0, 1.0, 2 * W)
    s = series_of(values)
    flags = np.zeros(2 * W, dtype=bool)
    draft = build_profile(s, flags)

    # no flags, residuals within threshold -> empty mask
    mask = prefilter_mask(s, draft, flags)
    assert mask.sum() < 0.01 * mask.size

    # one flagged hour -> exactly those minutes masked (plus any spikes)
    flags[100:160] = True
    mask = prefilter_mask(s, draft, flags)
    assert mask[100:160].all()

    # a +6-sigma spike outside any flag gets masked
    spiked = values.copy()
    spiked[5000:5010] += 6.0 * 1.0 * 1.5
    mask = prefilter_mask(series_of(spiked), draft, np.zeros(2 * W, dtype=bool))
    assert mask[5000:5010].all()


def test_label_corpus_against_ground_truth():
    cfg = SyntheticConfig(n_links=4, weeks=4, seed=7, incident_rate=2.0)
    corpus = generate_corpus(cfg)
    result = label_corpus(corpus)
    assert len(result.incidents) == len(corpus.incidents)
    truth = {inc.incident_id: inc for inc in corpus.incidents}
    hits = 0
    observed = 0
    for rec in result.incidents:
        gt = truth[rec.incident_id]
        assert rec.start == gt.start
        if rec.event == 1:
            observed += 1
            if abs(rec.duration - gt.duration) <= 3.0:
                hits += 1
    assert observed > 0
    assert hits / observed >= 0.95
