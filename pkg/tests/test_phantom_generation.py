import numpy as np
import pytest

from utils.errors import ArgumentError, PhantomGenerationError
from utils.phantom import DEFAULT_MEANS, MIN_CLASS_FRACTION, PhantomSpec, generate_phantom


def test_same_seed_is_bit_identical():
    first = generate_phantom(PhantomSpec(), seed=7)
    second = generate_phantom(PhantomSpec(), seed=7)
    np.testing.assert_array_equal(first.image.data, second.image.data)
    np.testing.assert_array_equal(first.truth.labels, second.truth.labels)
    np.testing.assert_array_equal(first.mask.values, second.mask.values)


def test_different_seeds_change_geometry():
    first = generate_phantom(PhantomSpec(), seed=1)
    second = generate_phantom(PhantomSpec(), seed=2)
    assert not np.array_equal(first.truth.labels, second.truth.labels)


def test_noiseless_limit_reproduces_class_means():
    spec = PhantomSpec(stddevs=(1e-9,) * 4)
    phantom = generate_phantom(spec, seed=3)
    expected = np.asarray(DEFAULT_MEANS)[phantom.truth.labels]
    np.testing.assert_allclose(phantom.image.data[:, :, 0], expected, atol=1e-6)


def test_default_spec_class_means_match():
    phantom = generate_phantom(PhantomSpec(), seed=11)
    intensities = phantom.image.data[:, :, 0]
    for k, mean in enumerate(DEFAULT_MEANS):
        assert abs(intensities[phantom.truth.labels == k].mean() - mean) < 0.02


@pytest.mark.parametrize("seed", range(5))
def test_background_is_exactly_outside_mask_and_classes_present(seed):
    phantom = generate_phantom(PhantomSpec(), seed=seed)
    labels = phantom.truth.labels
    np.testing.assert_array_equal(labels == 0, ~phantom.mask.values)

    fractions = np.bincount(labels.reshape(-1), minlength=4) / labels.size
    assert np.all(fractions >= MIN_CLASS_FRACTION)
    assert phantom.image.data.min() >= 0.0
    assert phantom.image.data.max() <= 1.0


def test_single_class_phantom_is_valid():
    phantom = generate_phantom(PhantomSpec(n_classes=1), seed=0)
    assert phantom.truth.n_classes == 1
    assert np.all(phantom.truth.labels == 0)
    assert phantom.mask.values.all()


def test_vanishing_classes_raise_generation_error():
    with pytest.raises(PhantomGenerationError):
        generate_phantom(PhantomSpec(height=4, width=4, n_classes=8), seed=0)


def test_spec_validation():
    with pytest.raises(ArgumentError):
        PhantomSpec(n_classes=3, means=(0.1, 0.2))
    with pytest.raises(ArgumentError):
        PhantomSpec(stddevs=(0.05, 0.0, 0.05, 0.05))
    with pytest.raises(ArgumentError):
        PhantomSpec(means=(0.1, 0.2, 0.3, 1.5))


def test_spec_from_config_and_scalar_noise():
    spec = PhantomSpec.from_config({"phantom": {"height": 32, "width": 16, "classes": 3, "stddevs": 0.15}})
    assert (spec.height, spec.width, spec.n_classes) == (32, 16, 3)
    assert spec.stddevs == (0.15, 0.15, 0.15)
    assert spec.means == pytest.approx((0.05, 0.475, 0.9))
    assert spec.with_noise(0.2).stddevs == (0.2, 0.2, 0.2)
