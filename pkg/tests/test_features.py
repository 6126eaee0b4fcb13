"""Moment features: dimensions, hand-checked values, invariances."""
import numpy as np
import pytest

from aqrc.errors import TooFewShots
from aqrc.features import (
    MomentFeatureSpec, central_moments, central_moments_from_counts,
    feature_dimension, feature_names, moment_indices, outcome_counts,
    sample_distribution,
)
from aqrc.rng import generator


def test_dimension_full_and_truncated():
    assert feature_dimension(MomentFeatureSpec(max_order=3, d_h=None, m=8)) == 164
    assert feature_dimension(MomentFeatureSpec(max_order=3, d_h=3, m=8)) == 94


def test_dimension_block_sizes():
    full = [len([t for t in moment_indices(MomentFeatureSpec(3, None, 8))
                 if len(t) == p]) for p in (1, 2, 3)]
    trunc = [len([t for t in moment_indices(MomentFeatureSpec(3, 3, 8))
                  if len(t) == p]) for p in (1, 2, 3)]
    assert full == [8, 36, 120]
    assert trunc == [8, 26, 60]


def test_dimension_minimal():
    assert feature_dimension(MomentFeatureSpec(max_order=1, d_h=None, m=1)) == 1
    assert feature_dimension(MomentFeatureSpec(max_order=1, d_h=0, m=1)) == 1


def test_all_zero_records_give_zero_features():
    spec = MomentFeatureSpec(m=4)
    fv = central_moments(np.zeros((10, 4), dtype=np.uint8), spec)
    assert np.all(fv.values == 0)


def test_hand_computed_two_records():
    spec = MomentFeatureSpec(max_order=2, d_h=None, m=2)
    fv = central_moments(np.array([[0, 1], [1, 0]]), spec)
    names = feature_names(spec)
    vals = dict(zip(names, fv.values))
    assert vals["1:0"] == pytest.approx(0.5)
    assert vals["1:1"] == pytest.approx(0.5)
    assert vals["2:0,0"] == pytest.approx(0.25)
    assert vals["2:1,1"] == pytest.approx(0.25)
    assert vals["2:0,1"] == pytest.approx(-0.25)


def test_iid_bernoulli_off_diagonals_vanish():
    rng = generator(5, 3)
    n = 40_000
    x = (rng.uniform(size=(n, 8)) < 0.5).astype(np.uint8)
    spec = MomentFeatureSpec(max_order=2, d_h=None, m=8)
    fv = central_moments(x, spec)
    for name, val in zip(feature_names(spec), fv.values):
        if name.startswith("2:"):
            i, j = name[2:].split(",")
            if i != j:
                assert abs(val) < 4 / np.sqrt(n)


def test_shot_reordering_invariance():
    rng = generator(1, 2)
    x = (rng.uniform(size=(500, 8)) < 0.4).astype(np.uint8)
    spec = MomentFeatureSpec()
    a = central_moments(x, spec).values
    b = central_moments(x[::-1], spec).values
    assert np.allclose(a, b, atol=1e-14)


def test_truncated_is_subvector_of_full():
    rng = generator(2, 2)
    x = (rng.uniform(size=(300, 8)) < 0.6).astype(np.uint8)
    full_spec = MomentFeatureSpec(d_h=None)
    trunc_spec = MomentFeatureSpec(d_h=3)
    full = dict(zip(feature_names(full_spec),
                    central_moments(x, full_spec).values))
    trunc = dict(zip(feature_names(trunc_spec),
                     central_moments(x, trunc_spec).values))
    for name, val in trunc.items():
        assert val == pytest.approx(full[name], abs=1e-15)


def test_boundedness_random_records():
    for seed in range(5):
        rng = generator(seed, 8)
        x = (rng.uniform(size=(50, 8)) < rng.uniform()).astype(np.uint8)
        fv = central_moments(x, MomentFeatureSpec())
        assert np.max(np.abs(fv.values)) <= 1.0


def test_counts_path_matches_record_path():
    rng = generator(9, 4)
    x = (rng.uniform(size=(2000, 8)) < 0.3).astype(np.uint8)
    spec = MomentFeatureSpec(d_h=3)
    a = central_moments(x, spec).values
    b = central_moments_from_counts(outcome_counts(x, 8), spec).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_too_few_shots():
    with pytest.raises(TooFewShots):
        central_moments(np.zeros((1, 8), dtype=np.uint8), MomentFeatureSpec())


def test_orders_subset():
    rng = generator(4, 4)
    x = (rng.uniform(size=(400, 8)) < 0.5).astype(np.uint8)
    full = central_moments(x, MomentFeatureSpec(d_h=3)).values
    third = central_moments(x, MomentFeatureSpec(d_h=3, orders=(3,))).values
    assert len(third) == 60
    assert np.allclose(third, full[-60:])
    first = central_moments(x, MomentFeatureSpec(d_h=3, orders=(1,))).values
    assert np.allclose(first, full[:8])


def test_sample_distribution_single_record():
    dist = sample_distribution(np.array([[0, 0, 0]]), 3)
    assert dist[0] == 1.0
    assert dist.sum() == 1.0


def test_sample_distribution_msb_convention():
    dist = sample_distribution(np.array([[1, 0]]), 2)
    assert dist[2] == 1.0  # bit 0 is the most significant


def test_sample_distribution_sums_to_one():
    rng = generator(6, 6)
    x = (rng.uniform(size=(999, 5)) < 0.5).astype(np.uint8)
    assert sample_distribution(x, 5).sum() == pytest.approx(1.0, abs=0)


def test_feature_names_format():
    names = feature_names(MomentFeatureSpec(max_order=3, d_h=3, m=8))
    assert names[0] == "1:0"
    assert "2:0,1" in names
    assert "3:0,1,3" in names
    assert "3:0,1,4" not in names  # span 4 > d_h
