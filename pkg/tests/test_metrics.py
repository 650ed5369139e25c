import itertools
import math

import pytest

from analysis.metrics import (
    average_precision,
    interpolated_ap,
    match_class,
    mean_ap,
    mean_translation_error,
    per_class_matches,
)
from domain.boxes import Box3D, Detection


def oracle_ap(tp, n_gt):
    """Mean over true positives of the best precision at that rank or deeper."""
    precisions = [sum(tp[: j + 1]) / (j + 1) for j in range(len(tp))]
    return sum(max(precisions[i:]) for i, hit in enumerate(tp) if hit) / n_gt


def box(x, y=0.0, class_id=0):
    return Box3D((x, y, 0.8), (1.9, 4.4, 1.6), 0.0, class_id)


def test_interpolated_ap_matches_exhaustive_oracle():
    for length in range(0, 7):
        for tp in itertools.product([False, True], repeat=length):
            for n_gt in range(max(1, sum(tp)), 5):
                expected = pytest.approx(oracle_ap(tp, n_gt), abs=1e-12)
                assert interpolated_ap(list(tp), n_gt) == expected


def test_ap_without_ground_truth_is_nan():
    assert math.isnan(interpolated_ap([False, False], 0))
    assert interpolated_ap([], 3) == 0.0


def test_perfect_and_empty_detections():
    gt = [box(0.0), box(10.0)]
    perfect = [Detection(box(0.0), 0.9), Detection(box(10.0), 0.8)]
    assert average_precision(perfect, gt) == pytest.approx(1.0)
    assert average_precision([], gt) == 0.0


def test_greedy_matching_counts_duplicates_as_false_positives():
    gt = [box(0.0)]
    dets = [Detection(box(0.1), 0.6), Detection(box(0.0), 0.9), Detection(box(20.0), 0.5)]
    match = match_class([(dets, gt)])
    assert match.scores == [0.9, 0.6, 0.5]
    assert match.tp == [True, False, False]
    assert match.distances == [pytest.approx(0.0)]


def test_detections_only_match_ground_truth_of_their_frame():
    frames = [([Detection(box(0.0), 0.9)], []), ([], [box(0.0)])]
    match = match_class(frames)
    assert match.tp == [False] and match.n_gt == 1


def test_mean_ap_skips_classes_without_ground_truth():
    frames = [
        (
            [Detection(box(0.0), 0.9), Detection(box(5.0, class_id=1), 0.7)],
            [box(0.0), box(10.0, class_id=1)],
        )
    ]
    matches = per_class_matches(frames, [0, 1, 2])
    aps, m = mean_ap(matches)
    assert set(aps) == {0, 1}
    assert aps[0] == pytest.approx(1.0) and aps[1] == 0.0
    assert m == pytest.approx(0.5)
    assert mean_ap({}) == ({}, 0.0)


def test_mean_translation_error_averages_true_positive_offsets():
    frames = [([Detection(box(0.3), 0.9), Detection(box(10.0, 0.4), 0.8)], [box(0.0), box(10.0)])]
    matches = per_class_matches(frames, [0])
    assert mean_translation_error(matches) == pytest.approx(0.35)
    assert math.isnan(mean_translation_error(per_class_matches([([], [])], [0])))


def test_detections_never_match_another_class():
    gt = [box(0.0, class_id=0), box(10.0, class_id=1)]
    swapped = [Detection(box(0.0, class_id=1), 0.9), Detection(box(10.0, class_id=0), 0.8)]
    assert average_precision(swapped, gt) == 0.0
    mixed = [Detection(box(0.0, class_id=0), 0.9), Detection(box(10.0, class_id=1), 0.8)]
    assert average_precision(mixed, gt) == pytest.approx(1.0)


def test_ap_ignores_the_order_of_equal_score_detections():
    gt = [box(0.0), box(2.5), box(10.0)]
    dets = [
        Detection(box(1.2), 0.7),
        Detection(box(0.0), 0.7),
        Detection(box(20.0), 0.7),
        Detection(box(10.0), 0.9),
        Detection(box(2.5), 0.4),
    ]
    expected = average_precision(dets, gt)
    for order in itertools.permutations(range(3)):
        permuted = [dets[i] for i in order] + dets[3:]
        assert average_precision(permuted, gt) == expected
        match = match_class([(permuted, gt)])
        assert match.tp == match_class([(dets, gt)]).tp
