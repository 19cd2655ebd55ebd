import numpy as np
import pytest

from utils.errors import ArgumentError
from utils.grid import (
    ImageGrid,
    LabelField,
    ResponsibilityField,
    argmax_labels,
    check_same_shape,
    neighbor_class_counts,
    neighbor_count_map,
    neighbors,
    one_hot,
)


def test_neighbors_follow_up_down_left_right_order():
    assert neighbors(4, 3, 3) == [1, 7, 3, 5]
    assert neighbors(0, 3, 3) == [3, 1]
    assert neighbors(8, 3, 3) == [5, 7]


def test_neighbors_on_single_voxel_grid_is_empty():
    assert neighbors(0, 1, 1) == []


def test_neighbors_rejects_out_of_range_index():
    with pytest.raises(ArgumentError):
        neighbors(9, 3, 3)
    with pytest.raises(ArgumentError):
        neighbors(-1, 3, 3)


def test_neighbor_count_map_interior_edge_corner():
    expected = np.array([[2, 3, 2], [3, 4, 3], [2, 3, 2]])
    np.testing.assert_array_equal(neighbor_count_map(3, 3), expected)
    np.testing.assert_array_equal(neighbor_count_map(1, 3), [[1, 2, 1]])


def test_neighbor_class_counts_matches_brute_force():
    rng = np.random.default_rng(3)
    labels = LabelField(rng.integers(0, 3, size=(5, 7)), 3)
    counts = neighbor_class_counts(labels).values.reshape(-1, 3)
    flat = labels.labels.reshape(-1)

    for i in range(flat.size):
        expected = np.zeros(3)
        for j in neighbors(i, 5, 7):
            expected[flat[j]] += 1
        np.testing.assert_array_equal(counts[i], expected)


def test_neighbor_class_counts_of_responsibilities_sum_to_neighbor_count():
    rng = np.random.default_rng(0)
    raw = rng.random((4, 6, 3))
    rho = ResponsibilityField(raw / raw.sum(axis=2, keepdims=True))
    counts = neighbor_class_counts(rho).values
    np.testing.assert_allclose(counts.sum(axis=2), neighbor_count_map(4, 6), atol=1e-12)


def test_one_hot_has_exactly_one_entry_per_row():
    labels = LabelField(np.array([[0, 2], [1, 2]]), 3)
    encoded = one_hot(labels)
    assert encoded.dtype == np.float64
    np.testing.assert_array_equal(encoded.sum(axis=1), np.ones(4))
    np.testing.assert_array_equal(encoded.argmax(axis=1), [0, 2, 1, 2])


def test_argmax_labels_breaks_ties_to_lowest_class():
    rho = ResponsibilityField(np.full((2, 2, 3), 1.0 / 3.0))
    np.testing.assert_array_equal(argmax_labels(rho).labels, np.zeros((2, 2)))


def test_label_field_rejects_values_outside_class_range():
    with pytest.raises(ArgumentError):
        LabelField(np.array([[0, 3]]), 3)
    with pytest.raises(ArgumentError):
        LabelField(np.array([[-1, 0]]), 2)


def test_image_grid_adds_channel_axis_and_is_read_only():
    image = ImageGrid(np.zeros((2, 3)))
    assert image.data.shape == (2, 3, 1)
    assert image.flat().shape == (6, 1)
    with pytest.raises(ValueError):
        image.data[0, 0, 0] = 1.0


def test_check_same_shape_reports_mismatch():
    with pytest.raises(ArgumentError, match="do not match"):
        check_same_shape(ImageGrid(np.zeros((2, 2))), LabelField(np.zeros((2, 3), dtype=int), 1))
