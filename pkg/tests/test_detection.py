import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ranktransfer.detection as detection_mod
from ranktransfer._validation import DegenerateDataError
from ranktransfer.data import SurvivalDataset, generate_scenario
from ranktransfer.detection import assign_folds, detect
from ranktransfer.experiments import SCENARIOS


@pytest.fixture(scope="module")
def s7():
    return generate_scenario(SCENARIOS["S7-3"], 2)


def test_fold_sizes():
    assert np.bincount(assign_folds(9, 3, 0)).tolist() == [3, 3, 3]
    assert sorted(np.bincount(assign_folds(10, 3, 0)).tolist()) == [3, 3, 4]
    assert np.array_equal(assign_folds(50, 5, 8), assign_folds(50, 5, 8))
    with pytest.raises(ValueError):
        assign_folds(2, 3, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 2**31))
def test_fold_sizes_balanced(n, folds, seed):
    folds = min(folds, n)
    sizes = np.bincount(assign_folds(n, folds, seed), minlength=folds)
    assert sizes.max() - sizes.min() <= 1 and sizes.sum() == n


def test_zero_sources(s7):
    rep = detect(s7.target, [], seed=1)
    assert rep.selected == () and rep.per_source == ()
    assert 0 <= rep.threshold <= 1


def test_source_order_invariance(s7):
    srcs = s7.sources[:4]
    a = detect(s7.target, srcs, seed=3)
    order = [2, 0, 3, 1]
    b = detect(s7.target, [srcs[k] for k in order], seed=3)
    assert a.threshold == b.threshold
    for pos, k in enumerate(order):
        sa, sb = a.per_source[k], b.per_source[pos]
        assert (sa.label, sa.c_index, sa.gain, sa.selected) == (sb.label, sb.c_index, sb.gain,
                                                                sb.selected)


def test_selection_flag_matches_gain(s7):
    rep = detect(s7.target, s7.sources, seed=0)
    for s in rep.per_source:
        assert s.selected == (s.gain > 0)
        assert s.gain == pytest.approx(s.c_index - rep.threshold)
    assert rep.fold_c_index.shape == (11, 3)
    assert rep.threshold == pytest.approx(rep.fold_c_index[0].mean())


def test_zero_gain_is_not_selected(s7, monkeypatch):
    monkeypatch.setattr(detection_mod, "c_index", lambda beta, data: 0.7)
    rep = detect(s7.target, s7.sources[:2], seed=0)
    assert all(s.gain == 0 for s in rep.per_source)
    assert rep.selected == ()


def test_degenerate_fold_is_named():
    rng = np.random.default_rng(0)
    n = 12
    event = np.zeros(n, dtype=int)
    event[0] = 1
    d = SurvivalDataset(rng.exponential(size=n), event, rng.standard_normal((n, 3)))
    with pytest.raises(DegenerateDataError, match="fold"):
        detect(d, [], seed=0)


def test_needs_two_folds(s7):
    with pytest.raises(ValueError):
        detect(s7.target, [], folds=1)


def test_report_csv_and_table(s7, tmp_path):
    rep = detect(s7.target, s7.sources[:3], seed=0)
    path = tmp_path / "det.csv"
    rep.to_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["source_label", "c_index", "threshold", "gain", "selected"]
    assert [r["source_label"] for r in rows] == ["source1", "source2", "source3"]
    assert float(rows[0]["gain"]) == rep.per_source[0].gain
    table = rep.format_table()
    for s in rep.per_source:
        assert f"{s.gain:+.3f}" in table
        assert ("selected" if s.selected else "rejected") in table
