"""Initial sampling contracts."""

import numpy as np
import pytest

from rvbatch.ensemble import Ensemble, init_ensemble
from rvbatch.models import ModelSpec


def test_two_cluster_support():
    e = init_ensemble(ModelSpec(init="two_cluster_opinion"), 20_000, seed=3)
    a = np.abs(e.v)
    assert a.min() >= 0.25 and a.max() <= 0.75
    # equal-mass branches: binomial 3-sigma band
    frac_pos = np.mean(e.v > 0)
    assert abs(frac_pos - 0.5) < 3 * 0.5 / np.sqrt(e.n)


def test_uniform_mean_band():
    e = init_ensemble(ModelSpec(init="uniform_opinion"), 100_000, seed=0)
    # sd of the mean is 1/sqrt(3n) ~ 0.0018; 0.01 is a ~5.5 sigma band
    assert abs(e.v.mean()) <= 0.01
    assert e.v.min() >= -1 and e.v.max() <= 1
    assert e.dim_x == 0


def test_same_seed_bitwise_identical():
    m = ModelSpec(init="uniform_phase_square", dim_x=1, opinion_domain=False)
    a = init_ensemble(m, 1000, seed=42)
    b = init_ensemble(m, 1000, seed=42)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.v, b.v)
    c = init_ensemble(m, 1000, seed=43)
    assert not np.array_equal(a.v, c.v)


def test_phase_square_bounds():
    e = init_ensemble(ModelSpec(init="uniform_phase_square", dim_x=1), 5000, seed=1)
    assert e.x.shape == (5000, 1) and e.v.shape == (5000, 1)
    assert np.all(np.abs(e.x) <= 1) and np.all(np.abs(e.v) <= 1)


def test_unknown_distribution_and_empty():
    with pytest.raises(ValueError):
        init_ensemble(ModelSpec(init="mystery"), 10, seed=0)
    with pytest.raises(ValueError):
        init_ensemble(ModelSpec(), 0, seed=0)


def test_ensemble_shape_validation():
    with pytest.raises(ValueError):
        Ensemble(x=np.zeros((3, 1)), v=np.zeros((4, 1)))
    with pytest.raises(ValueError):
        Ensemble(x=np.zeros(3), v=np.zeros((3, 1)))
