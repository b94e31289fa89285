import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcert import NumericalError
from qdcert.numcore import (
    as_hermitian,
    as_matrix,
    generalized_scale_bound,
    herm_min_eig,
    hermitize,
    psd_inverse,
    psd_sqrt,
    spectral_norm,
)


def random_hermitian(seed, n=5):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def test_as_matrix_rejects_empty_and_nonfinite():
    with pytest.raises(NumericalError):
        as_matrix(np.zeros((0, 0)))
    with pytest.raises(NumericalError):
        as_matrix([[1.0, np.nan], [0.0, 1.0]])


def test_as_matrix_promotes_scalars():
    assert as_matrix(3.0).shape == (1, 1)


def test_as_hermitian_rejects_asymmetric():
    with pytest.raises(NumericalError):
        as_hermitian([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(NumericalError):
        as_hermitian(np.ones((2, 3)))


def test_herm_min_eig_diagonal():
    report = herm_min_eig(np.diag([3.0, -1e-3, 2.0]))
    assert report.min_eig == pytest.approx(-1e-3)
    assert not report.psd
    assert report.spectral_radius == pytest.approx(3.0)


def test_herm_min_eig_relative_tolerance():
    # -1e-12 is within 1e-10 * max(1, 1e3).
    assert herm_min_eig(np.diag([1e3, -1e-12])).psd
    assert not herm_min_eig(np.diag([1e3, -1e-6])).psd


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_psd_sqrt_squares_back(seed):
    h = random_hermitian(seed)
    m = h @ h
    s = psd_sqrt(m)
    assert np.allclose(s, s.conj().T)
    assert np.allclose(s @ s, m, atol=1e-8 * max(1.0, spectral_norm(m)))


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NumericalError):
        psd_sqrt(np.diag([1.0, -1.0]))


def test_psd_sqrt_clamps_small_negative_eigenvalues():
    s = psd_sqrt(np.diag([4.0, -1e-14]))
    assert np.allclose(s, np.diag([2.0, 0.0]))


def test_psd_inverse():
    m = np.array([[2.0, 1j], [-1j, 2.0]])
    inverse, cond = psd_inverse(m, 1e12)
    assert np.allclose(inverse @ m, np.eye(2))
    assert cond == pytest.approx(3.0)


@pytest.mark.parametrize(
    "m",
    [
        pytest.param(np.diag([1.0, 0.0]), id="singular"),
        pytest.param(np.diag([1.0, -1.0]), id="indefinite"),
        pytest.param(np.diag([1.0, 1e-14]), id="ill_conditioned"),
    ],
)
def test_psd_inverse_failures(m):
    with pytest.raises(NumericalError):
        psd_inverse(m, 1e12)


def test_hermitize():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.allclose(hermitize(m), [[1.0, 1.0], [1.0, 1.0]])


def test_spectral_norm():
    assert spectral_norm(np.diag([1.0, -5.0, 2.0])) == pytest.approx(5.0)


def test_generalized_scale_bound_diagonal():
    bound = generalized_scale_bound(np.diag([2.0, 3.0]), np.diag([1.0, 2.0]))
    assert bound == pytest.approx(2.0, rel=1e-9)


def test_generalized_scale_bound_zero_when_numerator_negative():
    assert generalized_scale_bound(-np.eye(3), np.eye(3)) == 0.0


def test_generalized_scale_bound_none_outside_range():
    assert generalized_scale_bound(np.diag([1.0, 1.0]), np.diag([1.0, 0.0])) is None


def test_generalized_scale_bound_dimension_mismatch():
    with pytest.raises(NumericalError):
        generalized_scale_bound(np.eye(2), np.eye(3))


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_generalized_scale_bound_is_tight(seed):
    h = random_hermitian(seed, 4)
    den = h @ h + np.eye(4)
    num = random_hermitian(seed + 1, 4)
    bound = generalized_scale_bound(num, den)
    assert bound is not None
    assert herm_min_eig(bound * den - num).psd
    if bound > 1e-6:
        assert not herm_min_eig(0.99 * bound * den - num, 1e-12).psd


@pytest.mark.parametrize("scale", [1.0, 1e6])
@pytest.mark.parametrize("seed", range(1, 11))
def test_generalized_scale_bound_meets_psd_rule(seed, scale):
    h = random_hermitian(seed, 4)
    den = scale * (h @ h + np.eye(4))
    num = scale * random_hermitian(seed + 100, 4)
    bound = generalized_scale_bound(num, den)
    assert bound is not None
    assert herm_min_eig(bound * den - num).psd


def test_generalized_scale_bound_none_on_denominator_kernel():
    num = np.array([[0.0, 0.0], [0.0, 1e-3]])
    assert generalized_scale_bound(num, np.diag([5.0, 0.0])) is None
