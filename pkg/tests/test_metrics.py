from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from dialogsynth.metrics import accuracy5, distribution_distance, l1_distance, psr, ur

from .strategies import score_pairs

scores = st.lists(st.integers(0, 5), min_size=1, max_size=80)


@given(scores)
def test_psr_le_ur(s):
    assert 0 <= psr(s) <= ur(s) <= 1


def test_empty_scores_rejected():
    with pytest.raises(ValueError):
        psr([])
    with pytest.raises(ValueError):
        ur([])


def test_accuracy5_hand_enumerated():
    # (system, human)
    pairs = [(5, 5), (5, 5), (5, 5), (5, 4), (5, 2), (4, 5), (3, 3), (1, 5)]
    a = accuracy5(pairs)
    assert a.counts.pred5_pos == 3 and a.counts.pred5_neg == 2
    assert a.accuracy == 3 / (3 + 2)
    assert a.usable_among_misses == 1 / 2
    assert a.recall == 3 / 5


def test_accuracy5_without_system_fives():
    a = accuracy5([(4, 5), (3, 5)])
    assert a.accuracy is None and a.to_dict()["accuracy"] == "n/a"
    assert a.recall == 0.0


@given(score_pairs())
def test_accuracy5_bounds(pairs):
    a = accuracy5(pairs)
    for v in (a.accuracy, a.usable_among_misses, a.recall):
        assert v is None or 0 <= v <= 1


def test_l1_and_distance():
    assert l1_distance({"a": 1, "b": 1}, {"a": 3, "b": 1}) == pytest.approx(0.5)
    assert distribution_distance({"d": {"x": 1}}, {"d": {"x": 2}}) == {"d": 0.0}
    with pytest.raises(ValueError):
        distribution_distance({"d": {"x": 1}}, {"e": {"x": 1}})
