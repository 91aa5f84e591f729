"""Sampler statistics and determinism."""

import numpy as np
import pytest

from ictmseg.noise import (
    NoiseSpec,
    apply_multiplicative,
    apply_poisson,
    corrupt,
    sample_gamma_field,
)


def test_gamma_determinism_and_seed_sensitivity():
    a = sample_gamma_field(64, 64, 10.0, seed=7)
    b = sample_gamma_field(64, 64, 10.0, seed=7)
    c = sample_gamma_field(64, 64, 10.0, seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert (a > 0).all()


@pytest.mark.parametrize("looks", [1.0, 4.0, 10.0])
def test_gamma_moments(looks):
    eta = sample_gamma_field(1000, 1000, looks, seed=42)
    assert abs(eta.mean() - 1.0) < 0.01
    assert abs(eta.var() - 1.0 / looks) / (1.0 / looks) < 0.05


def test_gamma_unit_shape_is_exponential():
    # L=1, scale 1: CDF(1) = 1 - exp(-1)
    eta = sample_gamma_field(1000, 1000, 1.0, seed=3)
    empirical = np.mean(eta <= 1.0)
    assert abs(empirical - (1.0 - np.exp(-1.0))) < 0.01


def test_gamma_rejects_bad_shape():
    with pytest.raises(ValueError):
        sample_gamma_field(4, 4, 0.0, seed=0)
    with pytest.raises(ValueError):
        sample_gamma_field(4, 4, -2.0, seed=0)


def test_multiplicative_identity_and_zero():
    clean = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(apply_multiplicative(clean, np.ones((2, 2))), clean)
    assert not apply_multiplicative(np.zeros((2, 2)), np.full((2, 2), 9.0)).any()


def test_multiplicative_hand_product():
    clean = np.array([[1.0, 2.0], [3.0, 4.0]])
    eta = np.array([[2.0, 1.0], [1.0, 0.5]])
    assert np.array_equal(apply_multiplicative(clean, eta),
                          np.array([[2.0, 2.0], [3.0, 2.0]]))


def test_multiplicative_degree_one_homogeneous():
    rng = np.random.default_rng(5)
    clean = rng.random((6, 6))
    eta = rng.random((6, 6)) + 0.5
    assert np.allclose(apply_multiplicative(3.0 * clean, eta),
                       3.0 * apply_multiplicative(clean, eta))


def test_multiplicative_shape_mismatch():
    with pytest.raises(ValueError):
        apply_multiplicative(np.zeros((2, 2)), np.zeros((3, 2)))


def test_poisson_zero_mean_is_degenerate():
    assert not apply_poisson(np.zeros((16, 16)), seed=1).any()


def test_poisson_moments():
    field = apply_poisson(np.full((1000, 1000), 100.0), seed=11)
    assert abs(field.mean() - 100.0) / 100.0 < 0.01
    assert abs(field.var() - 100.0) / 100.0 < 0.03


def test_poisson_determinism():
    clean = np.full((32, 32), 37.0)
    assert np.array_equal(apply_poisson(clean, seed=2), apply_poisson(clean, seed=2))
    assert not np.array_equal(apply_poisson(clean, seed=2), apply_poisson(clean, seed=3))


def test_poisson_rejects_negative_means():
    with pytest.raises(ValueError):
        apply_poisson(np.array([[1.0, -0.5]]), seed=0)


def test_noise_spec_validation_and_corrupt():
    with pytest.raises(ValueError):
        NoiseSpec(kind="salt")
    with pytest.raises(ValueError):
        NoiseSpec(kind="gamma", looks=0.0)
    clean = np.full((8, 8), 50.0)
    same = corrupt(clean, NoiseSpec(kind="none"))
    assert np.array_equal(same, clean) and same is not clean
    noisy = corrupt(clean, NoiseSpec(kind="gamma", looks=10.0, seed=1))
    assert noisy.shape == clean.shape and not np.array_equal(noisy, clean)
