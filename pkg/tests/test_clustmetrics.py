import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_acc, brute_force_assignment
from osodd.clustmetrics import (
    cluster_scores,
    clustering_accuracy,
    contingency,
    hungarian_assign,
    mutual_information,
    nmi,
    purity,
)


def pairings(max_n=40, max_k=7):
    return st.integers(1, max_n).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, max_k - 1), min_size=n, max_size=n),
            st.lists(st.integers(0, max_k - 1), min_size=n, max_size=n),
        )
    )


# hand cases -----------------------------------------------------------------


def test_hungarian_identity_cost():
    cost = 1 - np.eye(3)
    pairs = hungarian_assign(cost)
    assert sorted(pairs) == [(0, 0), (1, 1), (2, 2)]
    assert sum(cost[i, j] for i, j in pairs) == 0


def test_hungarian_two_by_two():
    pairs = hungarian_assign([[4, 1], [2, 3]])
    assert sorted(pairs) == [(0, 1), (1, 0)]


def test_hungarian_rectangular_pads():
    cost = np.array([[3.0, 1.0, 2.0], [1.0, 5.0, 4.0]])
    pairs = hungarian_assign(cost)
    assert len(pairs) == 2
    assert sum(cost[i, j] for i, j in pairs) == brute_force_assignment(cost) == 2.0


def test_hungarian_rejects_bad_input():
    with pytest.raises(ValueError):
        hungarian_assign([[np.inf, 1.0]])
    with pytest.raises(ValueError):
        hungarian_assign([1.0, 2.0])


@pytest.mark.parametrize(
    "pred, gt, expected",
    [
        ([0, 1, 2, 2], [0, 1, 2, 2], 1.0),
        ([1, 1, 0, 0], [0, 0, 1, 1], 1.0),
        ([0, 1, 0, 1], [0, 0, 1, 1], 0.5),
    ],
)
def test_accuracy_hand_cases(pred, gt, expected):
    assert clustering_accuracy(pred, gt) == expected


def test_nmi_hand_cases():
    assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0, abs=1e-9)
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-9)
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-9)


def test_nmi_worked_value():
    # pred [0,0,1,1,1] vs gt [0,0,0,1,1]
    # H(pred) = H(gt) = -(0.4 ln 0.4 + 0.6 ln 0.6)
    # MI = 0.4 ln(0.4/(0.4*0.6)) + 0.2 ln(0.2/(0.6*0.6)) + 0.4 ln(0.4/(0.6*0.4))
    h = -(0.4 * math.log(0.4) + 0.6 * math.log(0.6))
    mi = 0.8 * math.log(0.4 / 0.24) + 0.2 * math.log(0.2 / 0.36)
    assert mutual_information([0, 0, 1, 1, 1], [0, 0, 0, 1, 1]) == pytest.approx(mi, abs=1e-12)
    assert nmi([0, 0, 1, 1, 1], [0, 0, 0, 1, 1]) == pytest.approx(mi / h, abs=1e-9)


def test_nmi_trivial_partitions():
    assert nmi([3, 3, 3], [5, 5, 5]) == 1.0


def test_purity_hand_cases():
    assert purity([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert purity([0, 0, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-9)
    assert purity([0, 1, 2, 3], [0, 0, 1, 1]) == 1.0


def test_contingency_shape_and_errors():
    table = contingency([5, 5, 9], ["a", "b", "b"])
    assert table.tolist() == [[1, 1], [0, 1]]
    with pytest.raises(ValueError):
        contingency([0, 1], [0])
    with pytest.raises(ValueError):
        contingency([], [])


def test_cluster_scores_keys():
    assert cluster_scores([0, 1], [1, 0]) == {"acc": 1.0, "nmi": 1.0, "purity": 1.0}


# oracles and properties ------------------------------------------------------


@settings(max_examples=250, deadline=None)
@given(pairings())
def test_accuracy_matches_brute_force(pair):
    pred, gt = pair
    assert clustering_accuracy(pred, gt) == brute_force_acc(pred, gt)


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_hungarian_matches_brute_force(r, c, seed):
    cost = np.random.default_rng(seed).integers(-9, 10, size=(r, c)).astype(float)
    pairs = hungarian_assign(cost)
    assert len(pairs) == min(r, c)
    assert sum(cost[i, j] for i, j in pairs) == brute_force_assignment(cost)


@settings(max_examples=300, deadline=None)
@given(pairings())
def test_metrics_bounded_and_nmi_symmetric(pair):
    pred, gt = pair
    for v in (clustering_accuracy(pred, gt), nmi(pred, gt), purity(pred, gt)):
        assert 0.0 <= v <= 1.0
    assert nmi(pred, gt) == nmi(gt, pred)


@settings(max_examples=150, deadline=None)
@given(pairings(), st.permutations(range(7)), st.permutations(range(7)))
def test_relabelling_invariance(pair, perm_p, perm_g):
    pred, gt = pair
    pred2 = [perm_p[p] + 100 for p in pred]
    gt2 = [perm_g[g] * 3 for g in gt]
    assert clustering_accuracy(pred2, gt2) == clustering_accuracy(pred, gt)
    assert purity(pred2, gt2) == purity(pred, gt)
    assert nmi(pred2, gt2) == pytest.approx(nmi(pred, gt), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=30))
def test_identical_partitions_score_one(labels):
    relabelled = [9 - x for x in labels]
    assert clustering_accuracy(relabelled, labels) == 1.0
    assert purity(relabelled, labels) == 1.0
    assert nmi(relabelled, labels) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(pairings(), st.data())
def test_purity_monotone_under_refinement(pair, data):
    pred, gt = pair
    target = data.draw(st.sampled_from(sorted(set(pred))))
    fresh = max(pred) + 1
    split = [fresh if p == target and data.draw(st.booleans()) else p for p in pred]
    assert purity(split, gt) >= purity(pred, gt)
