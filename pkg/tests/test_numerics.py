import math

import numpy as np
import pytest

from dualscale.errors import NotPositiveSemidefinite
from dualscale.numerics import (
    RngStream,
    as_hermitian,
    bessel_j0,
    clamp_psd,
    gauss_legendre,
    maximize_unimodal_1d,
    psd_sqrt,
    sample_complex_gaussian,
)


def _random_psd(gen, L=8, rank=None):
    rank = rank or L
    X = gen.standard_normal((L, rank)) + 1j * gen.standard_normal((L, rank))
    return X @ X.conj().T / rank


def test_gauss_legendre_is_exact_for_degree_2n_minus_1():
    rule = gauss_legendre(4, 0.0, 1.0)
    assert rule.integrate(lambda x: x ** 7) == pytest.approx(1.0 / 8.0, rel=1e-14)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)


def test_gauss_legendre_rejects_bad_arguments():
    with pytest.raises(ValueError):
        gauss_legendre(0, 0.0, 1.0)
    with pytest.raises(ValueError):
        gauss_legendre(8, 1.0, 1.0)


def test_bessel_j0_values():
    assert bessel_j0(0.0) == 1.0
    assert abs(bessel_j0(2.404825557695773)) < 1e-12
    with pytest.raises(ValueError):
        bessel_j0(float("nan"))


def test_rng_stream_is_a_value_type():
    a = RngStream(7).child(3).generator().standard_normal(4)
    b = RngStream(7).child(3).generator().standard_normal(4)
    c = RngStream(7).child(4).generator().standard_normal(4)
    d = RngStream(7, stream_id=1).child(3).generator().standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    with pytest.raises(ValueError):
        RngStream(-1)


def test_as_hermitian_rejects_non_square():
    with pytest.raises(ValueError):
        as_hermitian(np.zeros((2, 3)))


def test_clamp_psd_tolerance_band():
    v = np.array([1.0, 1.0j]) / math.sqrt(2.0)
    small = np.outer(v, v.conj()) * 2.0 - 1e-12 * np.eye(2)
    clamped = clamp_psd(small)
    assert np.linalg.eigvalsh(clamped)[0] >= -1e-14
    with pytest.raises(NotPositiveSemidefinite):
        clamp_psd(np.diag([1.0, -1e-6]))


def test_clamp_psd_returns_psd_input_unchanged():
    gen = np.random.default_rng(0)
    R = _random_psd(gen)
    assert np.allclose(clamp_psd(R), R, atol=1e-14)


def test_psd_sqrt_factorizes_low_rank_matrices():
    gen = np.random.default_rng(1)
    for rank in (1, 3, 8):
        R = _random_psd(gen, rank=rank)
        F = psd_sqrt(R)
        assert np.linalg.norm(F @ F.conj().T - R) / np.linalg.norm(R) < 1e-12


def test_sample_complex_gaussian_covariance():
    gen = np.random.default_rng(2)
    R = _random_psd(gen, L=4)
    x = sample_complex_gaussian(R, RngStream(3), 100_000)
    empirical = x.T @ x.conj() / x.shape[0]
    assert x.shape == (100_000, 4)
    assert np.linalg.norm(empirical - R) / np.linalg.norm(R) < 0.05
    with pytest.raises(ValueError):
        sample_complex_gaussian(R, gen, -1)


def test_maximize_unimodal_1d_finds_interior_peak():
    x, fx = maximize_unimodal_1d(lambda t: -(t - 0.3) ** 2, 0.0, 1.0, tol=1e-9)
    assert x == pytest.approx(0.3, abs=1e-6)
    assert fx == pytest.approx(0.0, abs=1e-10)


def test_maximize_unimodal_1d_grid_pass_escapes_local_peak():
    def f(t):
        return math.exp(-((t - 0.1) / 0.05) ** 2) + 2.0 * math.exp(-((t - 0.8) / 0.01) ** 2)

    grid = max(f(t) for t in np.linspace(0.0, 1.0, 1000))
    x, fx = maximize_unimodal_1d(f, 0.0, 1.0, tol=1e-9)
    assert fx >= grid
    assert x == pytest.approx(0.8, abs=1e-4)


def test_maximize_unimodal_1d_batch_matches_scalar():
    f = lambda t: math.sin(3.0 * t)
    batch = lambda xs: np.sin(3.0 * xs)
    assert maximize_unimodal_1d(f, 0.0, 2.0, 1e-9, f_batch=batch) == pytest.approx(
        maximize_unimodal_1d(f, 0.0, 2.0, 1e-9), abs=1e-9
    )


def test_maximize_unimodal_1d_edge_cases():
    assert maximize_unimodal_1d(lambda t: 5.0, 2.0, 2.0, tol=1e-6) == (2.0, 5.0)
    assert maximize_unimodal_1d(lambda t: 1.0, 0.0, 1.0, tol=1e-6) == (0.0, 1.0)
    with pytest.raises(ValueError):
        maximize_unimodal_1d(lambda t: t, 1.0, 0.0, tol=1e-6)
    with pytest.raises(ValueError):
        maximize_unimodal_1d(lambda t: t, 0.0, 1.0, tol=0.0)


def test_sample_complex_gaussian_is_white_for_identity():
    x = sample_complex_gaussian(np.eye(6), RngStream(12), 100_000)
    empirical = x.T @ x.conj() / x.shape[0]
    off_diagonal = empirical - np.diag(np.diag(empirical))
    assert np.max(np.abs(off_diagonal)) <= 0.05
    assert np.allclose(np.diag(empirical).real, 1.0, atol=0.05)
