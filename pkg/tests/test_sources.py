import numpy as np
import pytest

from scalealloc import synthgen
from scalealloc.curves import CurveSet, LearningCurve, ModelSpec
from scalealloc.sources import RecordedCurveSource, SyntheticCurveSource

M = ModelSpec("n1000", 1000)


def test_synthetic_curve_prefix_and_endpoint():
    src = SyntheticCurveSource(synthgen.HOFFMANN, 1e12)
    c = src.curve(M, 5e9)
    assert c.compute[-1] == 5e9 and c.compute[0] == M.step_cost
    longer = src.curve(M, 5e10)
    shared = longer.compute[longer.compute < 5e9]
    np.testing.assert_array_equal(c.compute[:-1], shared)


def test_synthetic_curve_empty_below_one_step():
    src = SyntheticCurveSource(synthgen.HOFFMANN, 1e12)
    assert len(src.curve(M, M.step_cost - 1)) == 0
    assert src.oracle(M, 10) == float("inf")


def test_noisy_prefixes_are_consistent():
    noise = synthgen.NoiseConfig("awgn", 1e-3)
    src = SyntheticCurveSource(synthgen.HOFFMANN, 1e12, noise, seed=4)
    a, b = src.curve(M, 1e10), src.curve(M, 1e11)
    k = int(np.sum(b.compute < 1e10))
    np.testing.assert_array_equal(a.loss[:k], b.loss[:k])


def test_noise_independent_of_pool_order():
    noise = synthgen.NoiseConfig("brownian", 1e-3)
    other = ModelSpec("n64", 64)
    s1 = SyntheticCurveSource(synthgen.HOFFMANN, 1e12, noise, seed=4)
    s2 = SyntheticCurveSource(synthgen.HOFFMANN, 1e12, noise, seed=4)
    s1.curve(other, 1e11)
    assert s1.curve(M, 1e11) == s2.curve(M, 1e11)


def test_oracle_is_min_up_to_horizon():
    src = SyntheticCurveSource(synthgen.HOFFMANN, 1e12)
    assert src.oracle(M, 1e11) == pytest.approx(synthgen.loss_surface(synthgen.HOFFMANN, 1000, 1e11 / 6000), rel=1e-14)


def test_recorded_source_slices():
    c = LearningCurve(M, [1.0, 2.0, 3.0, 4.0], [4.0, 3.0, 2.5, 2.4], [False, False, False, True])
    src = RecordedCurveSource(CurveSet([c]))
    assert src.curve(M, 2.5).compute.tolist() == [1.0, 2.0]
    assert src.full_compute(M) == 3.0
    assert src.oracle(M) == 2.5 and src.oracle(M, 1.5) == 4.0


def test_invalid_cmax():
    with pytest.raises(ValueError):
        SyntheticCurveSource(synthgen.HOFFMANN, 0)
