import logging
import math
from dataclasses import replace

import pytest

from dualscale.montecarlo import (
    aging_indices,
    breaches,
    simulate_sinr,
    verify_aging,
    verify_delta_method,
    verify_proposition1,
)
from dualscale.numerics import RngStream
from dualscale.rate import FramePlan, SystemModel
from dualscale.scenario import build_scenario

# first zero of J0 over 2*pi: rho_1 vanishes under the Jakes model
JAKES_ZERO_FD_TB = 2.404825557695773 / (2.0 * math.pi)


def _plan(system):
    return FramePlan(sensing_time=4.0 * system.block_time, M=7, blocks=(5, 5, 5, 4, 4, 4, 4))


@pytest.fixture(scope="module")
def sinr_reports(default_system):
    return verify_proposition1(default_system, _plan(default_system), 200_000, RngStream(0, 2))


def test_aging_indices():
    assert aging_indices(5) == [1, 3, 5]
    assert aging_indices(1) == [1]
    assert aging_indices(2) == [1, 2]


def test_closed_form_sinr_matches_simulation(default_system, sinr_reports):
    assert len(sinr_reports) == default_system.K * 3
    assert {(r.k, r.n) for r in sinr_reports} == {(k, n) for k in range(default_system.K) for n in (1, 3, 5)}
    for report in sinr_reports:
        assert report.relative_error <= 0.05, (report.k, report.n)
        assert report.signal_error <= 0.02
        assert report.variance_error <= 0.05
        assert report.interference_error <= 0.05
    assert breaches(sinr_reports) == []


def test_breaches_lists_failing_pairs(sinr_reports):
    bad = replace(sinr_reports[0], sinr_empirical=sinr_reports[0].sinr_analytic * 1.2)
    assert breaches([bad] + list(sinr_reports[1:])) == [(bad.k, bad.n)]
    assert breaches([bad], tolerance=0.25) == []
    assert bad.as_dict()["relative_error"] == pytest.approx(0.2)


def test_near_perfect_csi_without_aging():
    system = SystemModel.from_scenario(build_scenario({
        "sigma_r2": 1e-12,
        "P_m_mw": 1e6,
        "temporal": {"kind": "exponential", "rho_1": 1.0},
    }))
    report = simulate_sinr(system, _plan(system), 2, 1, 100_000, RngStream(4))
    assert report.signal_analytic == pytest.approx(1.0, rel=1e-5)
    assert report.relative_error <= 0.02


def test_vanishing_temporal_correlation_kills_the_signal():
    system = SystemModel.from_scenario(build_scenario({"temporal": {"kind": "jakes", "f_d_max_Tb": JAKES_ZERO_FD_TB}}))
    report = simulate_sinr(system, _plan(system), 0, 1, 50_000, RngStream(5))
    assert report.sinr_empirical <= 1e-3
    assert report.sinr_analytic <= 1e-12


def test_noise_limited_regime_stays_consistent():
    system = SystemModel.from_scenario(build_scenario({"sigma_c2": 100.0}))
    report = simulate_sinr(system, _plan(system), 1, 4, 100_000, RngStream(6))
    assert report.relative_error <= 0.05


def test_simulation_is_seeded(small_system):
    plan = FramePlan(sensing_time=4.0 * small_system.block_time, M=2, blocks=(2, 2))
    a = simulate_sinr(small_system, plan, 0, 2, 10_000, RngStream(9))
    b = simulate_sinr(small_system, plan, 0, 2, 10_000, RngStream(9))
    c = simulate_sinr(small_system, plan, 0, 2, 10_000, RngStream(10))
    assert a == b
    assert a.sinr_empirical != c.sinr_empirical


def test_simulation_refuses_small_sample_counts(small_system):
    plan = FramePlan(sensing_time=4.0 * small_system.block_time, M=1, blocks=(4,))
    with pytest.raises(ValueError):
        simulate_sinr(small_system, plan, 0, 1, 9_999, RngStream(0))
    with pytest.raises(ValueError):
        verify_proposition1(small_system, plan, 100, RngStream(0))
    with pytest.raises(ValueError):
        simulate_sinr(small_system, plan, 0, 0, 10_000, RngStream(0))


def test_delta_method_in_the_small_error_regime(default_system):
    user = default_system.users[2]
    report = verify_delta_method(user, 1e-6, 100_000, RngStream(7))
    assert report.error <= 0.1
    assert not report.outside_taylor_regime


def test_delta_method_edge_cases(default_system, caplog):
    user = default_system.users[0]
    exact = verify_delta_method(user, 0.0, 100, RngStream(7))
    assert exact.error == 0.0
    with caplog.at_level(logging.WARNING, logger="dualscale.montecarlo"):
        coarse = verify_delta_method(user, 1e-2, 1_000, RngStream(7))
    assert coarse.outside_taylor_regime
    assert "outside_taylor_regime=1" in caplog.text
    with pytest.raises(ValueError):
        verify_delta_method(user, -1e-6, 100, RngStream(7))


def test_aging_autocorrelation(default_system):
    user = default_system.users[1]
    assert verify_aging(user, 0.9, 100_000, RngStream(8)) <= 0.05
    assert verify_aging(user, 1.0, 100_000, RngStream(8)) <= 0.05


def test_chunk_size_is_configurable(small_system, monkeypatch):
    plan = FramePlan(sensing_time=4.0 * small_system.block_time, M=1, blocks=(4,))
    monkeypatch.setenv("DUALSCALE_MC_CHUNK", "3000")
    report = simulate_sinr(small_system, plan, 1, 1, 10_000, RngStream(3))
    assert report.samples == 10_000
    assert report.relative_error <= 0.1


def test_parallel_chunks_reproduce_serial_results(small_system, monkeypatch):
    plan = FramePlan(sensing_time=4.0 * small_system.block_time, M=2, blocks=(2, 2))
    monkeypatch.setenv("DUALSCALE_MC_CHUNK", "5000")
    serial = simulate_sinr(small_system, plan, 1, 2, 20_000, RngStream(11), workers=1)
    parallel = simulate_sinr(small_system, plan, 1, 2, 20_000, RngStream(11), workers=2)
    assert parallel == serial
    user = small_system.users[0]
    assert verify_aging(user, 0.8, 20_000, RngStream(12), workers=2) == verify_aging(user, 0.8, 20_000, RngStream(12), workers=1)
    assert verify_delta_method(user, 1e-6, 20_000, RngStream(13), workers=2) == verify_delta_method(user, 1e-6, 20_000, RngStream(13), workers=1)
