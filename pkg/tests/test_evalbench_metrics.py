import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from utils.errors import ArgumentError
from utils.evalbench import boundary_length, classification_error, match_clusters, onenn_baseline, relabel
from utils.grid import ImageGrid, LabelField, Mask
from utils.initialization import LabeledVoxelSet


def _labels(values, n_classes=2):
    return LabelField(np.asarray(values), n_classes)


def test_classification_error_examples():
    truth = _labels([[0, 1], [1, 0]])
    full = Mask.full(2, 2)
    assert classification_error(truth, truth, full) == 0.0
    assert classification_error(_labels([[1, 0], [0, 1]]), truth, full) == 1.0
    assert classification_error(_labels([[0, 1], [0, 1]]), truth, full) == 0.5


def test_classification_error_ignores_voxels_outside_mask():
    truth = _labels([[0, 1], [1, 0]])
    mask = Mask(np.array([[True, True], [False, False]]))
    assert classification_error(_labels([[0, 1], [0, 1]]), truth, mask) == 0.0


def test_classification_error_rejects_empty_mask():
    truth = _labels([[0, 1]])
    with pytest.raises(ArgumentError):
        classification_error(truth, truth, Mask(np.zeros((1, 2), dtype=bool)))


def test_boundary_length_examples():
    assert boundary_length(_labels(np.zeros((5, 4), dtype=int))) == 0
    assert boundary_length(_labels([[0, 1], [1, 0]])) == 4

    halves = np.zeros((6, 8), dtype=int)
    halves[:, 4:] = 1
    assert boundary_length(_labels(halves)) == 6


def test_match_clusters_identity_and_swap():
    truth = _labels([[0, 0, 1], [1, 1, 0]])
    full = Mask.full(2, 3)
    assert match_clusters(truth, truth, full) == (0, 1)

    swapped = _labels(1 - truth.labels)
    permutation = match_clusters(swapped, truth, full)
    assert permutation == (1, 0)
    assert classification_error(relabel(swapped, permutation), truth, full) == 0.0


def test_match_clusters_agrees_with_assignment_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        truth = LabelField(rng.integers(0, 3, size=(6, 6)), 3)
        pred = LabelField(rng.integers(0, 3, size=(6, 6)), 3)
        mask = Mask(rng.random((6, 6)) < 0.8)
        if not mask.values.any():
            continue

        inside = mask.values
        confusion = np.zeros((3, 3))
        np.add.at(confusion, (pred.labels[inside], truth.labels[inside]), 1)
        rows, cols = linear_sum_assignment(-confusion)
        oracle = np.empty(3, dtype=int)
        oracle[rows] = cols

        matched = classification_error(relabel(pred, match_clusters(pred, truth, mask)), truth, mask)
        expected = classification_error(relabel(pred, oracle), truth, mask)
        assert matched == pytest.approx(expected)
        assert matched <= classification_error(pred, truth, mask)


def test_match_clusters_brute_force_definition():
    rng = np.random.default_rng(4)
    truth = LabelField(rng.integers(0, 3, size=(4, 4)), 3)
    pred = LabelField(rng.integers(0, 3, size=(4, 4)), 3)
    mask = Mask.full(4, 4)
    best = min(classification_error(relabel(pred, p), truth, mask) for p in itertools.permutations(range(3)))
    assert classification_error(relabel(pred, match_clusters(pred, truth, mask)), truth, mask) == best


def test_match_clusters_refuses_more_than_eight_classes():
    labels = LabelField(np.arange(9).reshape(3, 3), 9)
    with pytest.raises(ArgumentError):
        match_clusters(labels, labels, Mask.full(3, 3))


def test_onenn_baseline_assigns_nearest_prototype():
    image = ImageGrid(np.array([[0.0, 0.2, 1.0]]))
    labeled = LabeledVoxelSet.from_pairs([(0, 0), (2, 1)], image)
    np.testing.assert_array_equal(onenn_baseline(image, labeled, 2).labels, [[0, 0, 1]])
