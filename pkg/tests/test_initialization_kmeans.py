import numpy as np
import pytest

from utils.errors import ArgumentError
from utils.grid import ImageGrid
from utils.initialization import distance_kernel, kmeans_init


def test_single_cluster_is_global_mean():
    rng = np.random.default_rng(0)
    image = ImageGrid(rng.random((4, 5)))
    init = kmeans_init(image, 1, seed=0)
    assert init.centers[0, 0] == pytest.approx(image.data.mean())
    np.testing.assert_array_equal(init.responsibilities.values, np.ones((4, 5, 1)))


def test_two_point_masses_give_exact_centers():
    values = np.zeros((4, 4))
    values[:, 2:] = 1.0
    image = ImageGrid(values)
    init = kmeans_init(image, 2, seed=3)

    np.testing.assert_array_equal(np.sort(init.centers[:, 0]), [0.0, 1.0])
    own = np.argmin(np.abs(image.flat() - init.centers[:, 0]), axis=1)
    rho = init.responsibilities.flat()
    assert np.all(rho[np.arange(16), own] > 0.5)


def test_responsibilities_use_negative_exponential_distance():
    values = np.array([[0.0, 0.0, 1.0, 1.0]])
    init = kmeans_init(ImageGrid(values), 2, seed=1, kernel_width=1.0)
    rho = init.responsibilities.flat()
    high = 1.0 / (1.0 + np.exp(-1.0))
    np.testing.assert_allclose(np.sort(rho[0]), [1.0 - high, high])


def test_default_kernel_is_nearly_one_hot():
    values = np.array([[0.0, 0.0, 1.0, 1.0]])
    init = kmeans_init(ImageGrid(values), 2, seed=1)
    rho = init.responsibilities.flat()
    np.testing.assert_allclose(rho.max(axis=1), 1.0, rtol=0, atol=1e-12)
    assert rho[0].argmax() != rho[2].argmax()


@pytest.mark.parametrize("width", [0.0, -1.0])
def test_kernel_width_must_be_positive(width):
    with pytest.raises(ArgumentError):
        distance_kernel(np.zeros((2, 2)), width)


def test_same_seed_is_bit_identical():
    rng = np.random.default_rng(9)
    image = ImageGrid(rng.random((8, 8, 2)))
    first = kmeans_init(image, 3, seed=42)
    second = kmeans_init(image, 3, seed=42)
    np.testing.assert_array_equal(first.centers, second.centers)
    np.testing.assert_array_equal(first.responsibilities.values, second.responsibilities.values)


def test_rows_are_normalized():
    rng = np.random.default_rng(2)
    image = ImageGrid(rng.random((10, 10)))
    init = kmeans_init(image, 4, seed=2)
    assert init.responsibilities.max_normalization_error() <= 1e-12
    assert 1 <= init.iterations <= 100


def test_more_clusters_than_voxels_is_rejected():
    with pytest.raises(ArgumentError):
        kmeans_init(ImageGrid(np.zeros((2, 2))), 5, seed=0)
