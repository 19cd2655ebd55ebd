import math

import numpy as np
import pytest
from scipy import special

from utils.errors import DomainError, NumericError
from utils.special import (
    LOG_2PI,
    digamma,
    expect_log_det_precision,
    expect_log_gaussian,
    expect_log_mixture_weights,
    expect_quadratic,
    log_det_spd,
)

EULER_GAMMA = 0.5772156649015329


def test_digamma_matches_scipy_over_wide_range():
    x = np.concatenate([np.logspace(-3, 3, 400), [0.5, 1.0, 1.4616321449683622, 5.999, 6.0, 6.001]])
    np.testing.assert_allclose(digamma(x), special.digamma(x), rtol=1e-10, atol=1e-12)


def test_digamma_known_values():
    assert digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-13)
    assert digamma(0.5) == pytest.approx(-EULER_GAMMA - 2.0 * math.log(2.0), abs=1e-13)


def test_digamma_recurrence():
    x = np.linspace(0.1, 20.0, 50)
    np.testing.assert_allclose(digamma(x + 1.0) - digamma(x), 1.0 / x, rtol=1e-11)


def test_digamma_scalar_returns_float():
    assert isinstance(digamma(2.0), float)


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_digamma_rejects_non_positive(bad):
    with pytest.raises(DomainError):
        digamma(bad)


def test_expect_log_mixture_weights():
    np.testing.assert_allclose(expect_log_mixture_weights(np.array([1.0, 1.0])), [-1.0, -1.0], atol=1e-13)

    alpha = np.array([2.0, 3.5, 0.7])
    expected = special.digamma(alpha) - special.digamma(alpha.sum())
    np.testing.assert_allclose(expect_log_mixture_weights(alpha), expected, atol=1e-12)


def test_log_det_spd_and_failure_on_indefinite_matrix():
    assert log_det_spd(np.diag([2.0, 3.0])) == pytest.approx(math.log(6.0))
    with pytest.raises(NumericError):
        log_det_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_expect_log_det_precision_matches_formula():
    delta = np.array([[2.0, 0.3], [0.3, 1.0]])
    nu = 4.5
    expected = (
        special.digamma((nu + 1 - 1) / 2) + special.digamma((nu + 1 - 2) / 2) + 2 * math.log(2.0) + math.log(np.linalg.det(delta))
    )
    assert expect_log_det_precision(nu, delta) == pytest.approx(expected, abs=1e-12)


def test_expect_log_det_precision_requires_enough_degrees_of_freedom():
    with pytest.raises(DomainError):
        expect_log_det_precision(1.0, np.eye(2))


def test_expect_quadratic_single_and_stacked():
    delta = np.array([[4.0]])
    assert expect_quadratic(np.array([0.5]), np.array([0.2]), 2.0, 3.0, delta) == pytest.approx(0.5 + 3.0 * 4.0 * 0.09)

    stack = np.array([[0.5], [0.2]])
    np.testing.assert_allclose(expect_quadratic(stack, np.array([0.2]), 2.0, 3.0, delta), [1.58, 0.5])


def test_expect_quadratic_rejects_non_positive_gamma():
    with pytest.raises(DomainError):
        expect_quadratic(np.array([0.0]), np.array([0.0]), 0.0, 3.0, np.eye(1))


def test_expect_log_gaussian_combines_terms():
    delta = np.array([[5.0]])
    x, upsilon, gamma, nu = np.array([0.4]), np.array([0.3]), 10.0, 6.0
    expected = (
        -0.5 * LOG_2PI
        + 0.5 * expect_log_det_precision(nu, delta)
        - 0.5 * (1.0 / gamma + nu * 5.0 * 0.01)
    )
    assert expect_log_gaussian(x, upsilon, gamma, nu, delta) == pytest.approx(expected)
