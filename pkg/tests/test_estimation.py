import math

import numpy as np
import pytest

from dualscale.estimation import PilotConfig, estimate_channel, mmse_stats, neumann_trace_error, trace_c_h

GAMMAS = (0.1, 1.0, 10.0, 100.0)


def _random_psd_set(count=100, L=8, seed=11):
    gen = np.random.default_rng(seed)
    out = []
    for i in range(count):
        rank = L if i % 2 == 0 else 1 + i % L
        X = gen.standard_normal((L, rank)) + 1j * gen.standard_normal((L, rank))
        out.append(X @ X.conj().T / rank)
    return out


def test_trace_shortcut_matches_covariance_trace():
    for R in _random_psd_set():
        for gamma_e in GAMMAS:
            stats = mmse_stats(R, gamma_e)
            assert trace_c_h(R, gamma_e) == pytest.approx(stats.trace_c_h, rel=1e-10)


def test_mmse_covariances_split_the_prior():
    for R in _random_psd_set():
        for gamma_e in GAMMAS:
            stats = mmse_stats(R, gamma_e)
            assert np.linalg.norm(stats.C_h + stats.C_e - R) <= 1e-10 * np.linalg.norm(R)
            assert np.linalg.eigvalsh(stats.C_h)[0] >= -1e-12
            assert np.linalg.eigvalsh(stats.C_e)[0] >= -1e-12


def test_mmse_rejects_non_positive_snr():
    R = np.eye(4)
    with pytest.raises(ValueError):
        mmse_stats(R, 0.0)
    with pytest.raises(ValueError):
        trace_c_h(R, -1.0)


def test_pilot_config_snr():
    pilot = PilotConfig(M_m=9, P_m=40.0, sigma_m2=2.0)
    assert pilot.gamma_e == 180.0
    with pytest.raises(ValueError):
        PilotConfig(M_m=0, P_m=1.0, sigma_m2=1.0)


def test_estimate_channel_is_linear():
    R = _random_psd_set(count=1)[0]
    pilot = PilotConfig(M_m=9, P_m=4.0, sigma_m2=1.0)
    assert np.array_equal(estimate_channel(np.zeros(8), R, pilot), np.zeros(8))
    gen = np.random.default_rng(3)
    y = gen.standard_normal((5, 8)) + 1j * gen.standard_normal((5, 8))
    batch = estimate_channel(y, R, pilot)
    assert np.allclose(batch[2], estimate_channel(y[2], R, pilot))


def test_estimate_channel_recovers_noiseless_channel_at_high_snr():
    gen = np.random.default_rng(4)
    X = gen.standard_normal((8, 8)) + 1j * gen.standard_normal((8, 8))
    R = X @ X.conj().T / 8 + np.eye(8)
    pilot = PilotConfig(M_m=9, P_m=1.0, sigma_m2=9e-12)
    h = gen.standard_normal(8) + 1j * gen.standard_normal(8)
    y = pilot.M_m * math.sqrt(pilot.P_m) * h
    assert np.max(np.abs(estimate_channel(y, R, pilot) - h)) < 1e-6


def test_estimate_channel_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        estimate_channel(np.zeros(4), np.eye(8), PilotConfig(M_m=1, P_m=1.0, sigma_m2=1.0))


def test_neumann_approximation_is_tight_at_low_snr():
    R = _random_psd_set(count=1)[0]
    R = R / np.linalg.eigvalsh(R)[-1]
    assert neumann_trace_error(R, 0.01) < 1e-4
    assert neumann_trace_error(R, 0.01) < neumann_trace_error(R, 0.5)


def test_estimated_channel_power_grows_with_pilot_snr():
    snrs = np.logspace(-3, 4, 30)
    for R in _random_psd_set():
        traces = [mmse_stats(R, g).trace_c_h for g in snrs]
        assert all(b >= a * (1.0 - 1e-12) for a, b in zip(traces, traces[1:]))
        assert traces[-1] <= np.trace(R).real * (1.0 + 1e-12)
