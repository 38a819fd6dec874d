import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import obj
from oracles import brute_force_ap
from osodd.core import BoundingBox, ClassTag, load_task_split
from osodd.detmetrics import (
    UnknownMatchCounts,
    average_precision,
    detection_scores,
    iou,
    match_detections,
    match_unknown,
    mean_ap,
    udr_udp,
    unknown_matching,
)

K = ClassTag.known
U = ClassTag.unknown


def test_iou_hand_cases():
    a = BoundingBox(0, 0, 2, 2)
    assert iou(a, a) == 1.0
    assert iou(BoundingBox(0, 0, 1, 1), BoundingBox(5, 5, 1, 1)) == 0.0
    assert iou(a, BoundingBox(1, 1, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)


boxes = st.builds(
    BoundingBox,
    st.floats(-50, 50),
    st.floats(-50, 50),
    st.floats(0.1, 40),
    st.floats(0.1, 40),
)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_iou_properties(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


def test_match_unknown_known_cover():
    gt = [obj("g1", (0, 0, 10, 10)), obj("g2", (50, 50, 10, 10))]
    dets = [obj("d1", (0, 0, 10, 10), U(), 0.9), obj("d2", (50, 50, 10, 10), K(0), 0.8)]
    assert match_unknown(dets, gt) == UnknownMatchCounts(1, 1, 1)


def test_match_unknown_perfect_and_empty():
    gt = [obj(f"g{i}", (20 * i, 0, 10, 10)) for i in range(4)]
    perfect = [obj(f"d{i}", (20 * i, 0, 10, 10), U(), 0.5) for i in range(4)]
    assert match_unknown(perfect, gt) == UnknownMatchCounts(4, 0, 0)
    assert match_unknown([], gt) == UnknownMatchCounts(0, 0, 4)


def test_one_gt_per_detection():
    gt = [obj("g1", (0, 0, 10, 10))]
    dets = [obj("d1", (0, 0, 10, 10), U(), 0.9), obj("d2", (0, 0, 10, 10), U(), 0.8)]
    m = unknown_matching(dets, gt)
    assert m.pairs == (("d1", "g1"),)


def test_match_prefers_larger_iou_then_earlier_gt():
    gt = [obj("g1", (0, 0, 10, 10)), obj("g2", (1, 0, 10, 10)), obj("g3", (1, 0, 10, 10))]
    d = obj("d", (1, 0, 10, 10), U(), 0.9)
    assert unknown_matching([d], gt).pairs == (("d", "g2"),)


def test_matching_is_per_image():
    gt = [obj("g1", (0, 0, 10, 10), image="a")]
    dets = [obj("d1", (0, 0, 10, 10), U(), 0.9, image="b")]
    assert match_unknown(dets, gt) == UnknownMatchCounts(0, 0, 1)


def test_match_detections_ignores_tags():
    gt = [obj("g1", (0, 0, 10, 10), K(3))]
    pairs = match_detections([obj("d1", (0, 0, 10, 10), U(), 0.5)], gt)
    assert [(d.object_id, g.object_id) for d, g in pairs] == [("d1", "g1")]


def test_invalid_threshold():
    with pytest.raises(ValueError):
        match_unknown([], [], iou_thresh=1.0)


@pytest.mark.parametrize(
    "counts, expected",
    [((1, 1, 1), (1.0, 0.5)), ((5, 0, 0), (1.0, 1.0)), ((0, 0, 3), (0.0, None)), ((0, 0, 0), (None, None))],
)
def test_udr_udp_hand(counts, expected):
    assert udr_udp(UnknownMatchCounts(*counts)) == expected


def test_counts_validation():
    with pytest.raises(ValueError):
        UnknownMatchCounts(0, 2, 1)
    with pytest.raises(ValueError):
        UnknownMatchCounts(-1, 0, 0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20), st.data())
def test_udr_udp_bounded(tp, fn, data):
    fn_star = data.draw(st.integers(0, fn))
    udr, udp = udr_udp(UnknownMatchCounts(tp, fn_star, fn))
    for v in (udr, udp):
        assert v is None or 0.0 <= v <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tp_plus_fn_is_gt_count(seed):
    rng = np.random.default_rng(seed)
    gt = [obj(f"g{i}", tuple(rng.uniform(0, 40, 2)) + (10, 10), image=f"i{i % 3}") for i in range(rng.integers(0, 8))]
    dets = [
        obj(f"d{i}", tuple(rng.uniform(0, 40, 2)) + (10, 10), U() if rng.random() < 0.6 else K(0),
            float(rng.random()), image=f"i{i % 3}")
        for i in range(rng.integers(0, 10))
    ]
    c = match_unknown(dets, gt)
    assert c.tp_u + c.fn_u == len(gt)


# average precision ----------------------------------------------------------


def ap_scenario():
    gt = [obj(f"g{i}", (100 * i, 0, 10, 10), K(0)) for i in range(3)]
    dets = [
        obj("d1", (0, 0, 10, 10), K(0), 0.9),
        obj("d2", (500, 500, 10, 10), K(0), 0.8),
        obj("d3", (100, 0, 10, 10), K(0), 0.7),
    ]
    return dets, gt


def test_ap_hand_case():
    dets, gt = ap_scenario()
    assert average_precision(dets, gt, 0) == pytest.approx(5 / 9, abs=1e-9)


def test_ap_perfect_and_empty():
    _, gt = ap_scenario()
    perfect = [obj(f"d{i}", (100 * i, 0, 10, 10), K(0), 0.9 - 0.1 * i) for i in range(3)]
    assert average_precision(perfect, gt, 0) == 1.0
    misses = [obj("d", (900, 900, 10, 10), K(0), 0.9)]
    assert average_precision(misses, gt, 0) == 0.0
    assert average_precision([], gt, 0) == 0.0
    assert average_precision(perfect, gt, 1) is None


def test_ap_tied_scores_form_one_point():
    gt = [obj("g0", (0, 0, 10, 10), K(0)), obj("g1", (100, 0, 10, 10), K(0))]
    dets = [obj("a", (500, 0, 10, 10), K(0), 0.5), obj("b", (0, 0, 10, 10), K(0), 0.5)]
    # one operating point: recall 1/2 at precision 1/2
    assert average_precision(dets, gt, 0) == pytest.approx(0.25)
    assert average_precision(dets, gt, 0) == pytest.approx(brute_force_ap(dets, gt, 0))


def random_instance(rng, n_det=None):
    n_gt = int(rng.integers(1, 8))
    gt = [obj(f"g{i}", tuple(rng.uniform(0, 60, 2)) + (12, 12), K(0), image=f"i{i % 2}") for i in range(n_gt)]
    n_det = int(rng.integers(0, 50)) if n_det is None else n_det
    dets = []
    for i in range(n_det):
        if rng.random() < 0.5 and gt:
            g = gt[int(rng.integers(len(gt)))]
            box = (g.box.x + rng.uniform(-3, 3), g.box.y + rng.uniform(-3, 3), 12, 12)
            img = g.image_id
        else:
            box = tuple(rng.uniform(0, 60, 2)) + (12, 12)
            img = f"i{i % 2}"
        # coarse scores so ties happen
        dets.append(obj(f"d{i:02d}", box, K(0), float(rng.integers(1, 10)) / 10, image=img))
    return dets, gt


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ap_matches_threshold_sweep_oracle(seed):
    dets, gt = random_instance(np.random.default_rng(seed))
    assert average_precision(dets, gt, 0) == pytest.approx(brute_force_ap(dets, gt, 0), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_ap_invariant_to_score_rescaling(seed, scale):
    dets, gt = random_instance(np.random.default_rng(seed))
    scaled = [d.__class__(d.image_id, d.object_id, d.box, d.tag, d.score * scale) for d in dets]
    assert average_precision(scaled, gt, 0) == average_precision(dets, gt, 0)


# mean AP and the combined score -------------------------------------------------


def test_mean_ap_task1_has_no_previous():
    split = load_task_split(1)
    dets, gt = ap_scenario()
    prev, cur = mean_ap(dets, gt, split)
    assert prev is None
    assert cur == pytest.approx(5 / 9)


def test_mean_ap_is_arithmetic_mean():
    split = load_task_split(2)
    a, b = split.class_id(split.current_known[0]), split.class_id(split.current_known[1])
    gt = [obj("ga", (0, 0, 10, 10), K(a)), obj("gb0", (100, 0, 10, 10), K(b)), obj("gb1", (200, 0, 10, 10), K(b))]
    dets = [obj("da", (0, 0, 10, 10), K(a), 0.9), obj("db", (100, 0, 10, 10), K(b), 0.9)]
    prev, cur = mean_ap(dets, gt, split)
    assert prev is None  # no previous-class ground truth
    assert cur == pytest.approx((1.0 + 0.5) / 2)


def test_mean_ap_both_groups_perfect():
    split = load_task_split(2)
    p, c = split.class_id(split.previous_known[0]), split.class_id(split.current_known[0])
    gt = [obj("gp", (0, 0, 10, 10), K(p)), obj("gc", (100, 0, 10, 10), K(c))]
    dets = [obj("dp", (0, 0, 10, 10), K(p), 0.9), obj("dc", (100, 0, 10, 10), K(c), 0.9)]
    assert mean_ap(dets, gt, split) == (1.0, 1.0)


def test_detection_scores_combines():
    split = load_task_split(1)
    u = split.class_id(split.unknown_classes[0])
    gt = [obj("gu", (0, 0, 10, 10), U(), gt_class=u), obj("gk", (100, 0, 10, 10), K(0))]
    dets = [obj("du", (0, 0, 10, 10), U(), 0.7), obj("dk", (100, 0, 10, 10), K(0), 0.9)]
    s = detection_scores(dets, gt, split)
    assert (s.udr, s.udp, s.map_previous, s.map_current) == (1.0, 1.0, None, 1.0)
