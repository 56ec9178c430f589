import io

import numpy as np
import pytest

from scalealloc.curves import (
    CurvePoint, CurveSet, LearningCurve, ModelSpec, Provenance, min_loss, read_curves, total_compute,
    write_curves,
)


def curve(mid, n, compute, loss, predicted=None):
    return LearningCurve(ModelSpec(mid, n), compute, loss, predicted)


def test_total_compute_sums_curve_ends():
    s = CurveSet([curve("a", 10, [1e15, 3e15], [5, 4]), curve("b", 20, [2e15, 7e15], [5, 3])])
    assert total_compute(s) == 1e16


def test_total_compute_empty_set_is_zero():
    assert total_compute(CurveSet([])) == 0


def test_total_compute_ignores_predicted_tail():
    c = curve("a", 10, [1e15, 5e15, 9e15], [5, 4, 3], [False, False, True])
    assert total_compute(CurveSet([c])) == 5e15


def test_total_compute_monotone_under_appending():
    c1 = curve("a", 10, [1e15, 2e15], [5, 4])
    c2 = curve("a", 10, [1e15, 2e15, 4e15], [5, 4, 3.5])
    assert total_compute(CurveSet([c2])) >= total_compute(CurveSet([c1]))


def test_min_loss_picks_lowest():
    s = CurveSet([curve("a", 10, [1, 2], [5, 4.62]), curve("b", 20, [1, 2], [5, 3.84])])
    assert min_loss(s) == ("b", 3.84)


def test_min_loss_single_curve():
    assert min_loss(CurveSet([curve("a", 10, [1, 2, 3], [5, 3, 4])])) == ("a", 3.0)


def test_min_loss_tie_prefers_smaller_model():
    s = CurveSet([curve("big", 10**9, [1, 2], [4, 3.0]), curve("small", 10**6, [1, 2], [4, 3.0])])
    assert min_loss(s)[0] == "small"


def test_min_loss_empty_set_errors():
    with pytest.raises(ValueError, match="empty curve set"):
        min_loss(CurveSet([]))


def test_min_loss_of_superset_not_above_subset():
    s = CurveSet([curve("a", 10, [1, 2], [5, 3.5]), curve("b", 20, [1, 2], [5, 3.9]), curve("c", 30, [1], [2.0])])
    winner, best = min_loss(s)
    assert best <= min_loss(s.subset([winner, "b"]))[1]


@pytest.mark.parametrize(
    "compute, loss",
    [([1, 1], [2, 1]), ([2, 1], [2, 1]), ([1, 2], [0, 1]), ([1, np.nan], [1, 1]), ([-1, 2], [1, 1])],
)
def test_invalid_curves_rejected(compute, loss):
    with pytest.raises(ValueError):
        curve("a", 10, compute, loss)


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("x", 0)
    assert ModelSpec("x", 10, 4).step_cost == 240


def test_file_round_trip_is_lossless():
    c1 = curve("a", 10, [1.1e15, 2.5e15, 9e15], [5.123456789012345, 4.2, 3.3], [False, False, True])
    c2 = LearningCurve(ModelSpec("b", 123456789, 7), [3.0, 4.0], [1 / 3, 0.25])
    s = CurveSet([c1, c2])
    buf = io.StringIO()
    write_curves(s, buf)
    back = read_curves(io.StringIO(buf.getvalue()))
    assert list(back.curves) == ["a", "b"]
    for k in s.curves:
        assert back[k] == s[k]


def test_read_rejects_missing_columns():
    with pytest.raises(ValueError, match="missing columns"):
        read_curves(io.StringIO("model_id,loss\na,1\n"))


def test_points_and_provenance():
    c = LearningCurve.from_points(
        ModelSpec("a", 10), [CurvePoint(1.0, 3.0, Provenance.TRAINED), CurvePoint(2.0, 2.0, "predicted")]
    )
    assert [p.provenance for p in c] == [Provenance.TRAINED, Provenance.PREDICTED]
    assert len(c.trained) == 1 and c.max_compute == 1.0
    assert c.min_loss() == 3.0 and c.min_loss(include_predicted=True) == 2.0


def test_with_tail_drops_overlap_and_duplicates():
    c = curve("a", 10, [1.0, 2.0], [3.0, 2.5])
    t = c.with_tail([2.0, 2.0 + 1e-12, 2.0 + 1e-12, 3.0], [2.4, 2.3, 2.3, 2.2])
    assert np.all(np.diff(t.compute) > 0)
    assert t.predicted.tolist() == [False, False, True, True]


def test_duplicate_ids_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        CurveSet([curve("a", 1, [1], [1]), curve("a", 2, [1], [1])])
