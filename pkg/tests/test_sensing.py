import math

import numpy as np
import pytest

from dualscale.channel import UserGeometry, steering_rx, steering_tx
from dualscale.errors import DegenerateGeometry, InfeasibleSensing, SensingTooCoarse
from dualscale.sensing import (
    PSD_FEASIBILITY_LEVEL,
    CrbModel,
    SensingScene,
    crb_coefficient,
    effective_correlation,
    fisher_bracket,
    min_sensing_time,
    psd_margin,
    psd_sensing_time,
    sensing_error_covariance,
    user_large_scale,
)

SCENE = SensingScene(alpha=complex(1.0), G=1e3, L_r=8, sigma_r2=0.5)


def _numeric_coefficient(scene, theta, L_t, eps=1e-5):
    w = steering_tx(theta, L_t).conj()

    def echo(t):
        return steering_rx(t, scene.L_r) * (steering_tx(t, L_t) @ w)

    u = echo(theta)
    du = (echo(theta + eps) - echo(theta - eps)) / (2.0 * eps)
    bracket = np.vdot(du, du).real - abs(np.vdot(du, u)) ** 2 / np.vdot(u, u).real
    return scene.sigma_r2 / (2.0 * scene.G * scene.L_r * L_t * scene.alpha_mag2 * bracket)


@pytest.mark.parametrize("theta_deg", [0.0, 20.0, 45.0])
def test_crb_coefficient_matches_numeric_fisher_information(theta_deg):
    theta = math.radians(theta_deg)
    model = crb_coefficient(SCENE, theta, 8)
    assert model.coefficient == pytest.approx(_numeric_coefficient(SCENE, theta, 8), rel=1e-6)


@pytest.mark.parametrize("theta_deg", [0.0, 20.0, 45.0])
def test_fisher_bracket_closed_form(theta_deg):
    theta = math.radians(theta_deg)
    expected = math.pi ** 2 * math.cos(theta) ** 2 * (8 ** 2 - 1) / 12.0
    assert fisher_bracket(theta, 8, 8) == pytest.approx(expected, rel=1e-9)
    assert fisher_bracket(theta, 4, 8) == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("scale", [2.0, 10.0, 0.5])
def test_crb_scales_inversely_with_sensing_time(scale):
    model = crb_coefficient(SCENE, 0.3, 8)
    assert model.crb(scale * 140.0) * scale == pytest.approx(model.crb(140.0), rel=1e-15)


def test_crb_model_validation():
    with pytest.raises(ValueError):
        CrbModel(0.0)
    with pytest.raises(ValueError):
        CrbModel(1.0).crb(0.0)
    with pytest.raises(ValueError):
        SensingScene(alpha=1.0, G=0.0, L_r=8, sigma_r2=1.0)


def test_single_antenna_geometry_is_degenerate():
    with pytest.raises(DegenerateGeometry):
        crb_coefficient(SensingScene(alpha=1.0, G=1e3, L_r=1, sigma_r2=1.0), 0.2, 1)


def test_sensing_error_covariance_is_hermitian_rank_one():
    user = user_large_scale(UserGeometry(theta=0.5, delta_theta=0.02), SCENE, 8)
    R_r = sensing_error_covariance(user.direction, 1e-4)
    vals = np.linalg.eigvalsh(R_r)
    assert np.allclose(R_r, R_r.conj().T)
    assert vals[-1] == pytest.approx(1e-4 * np.vdot(user.derivative, user.derivative).real, rel=1e-12)
    assert np.all(np.abs(vals[:-1]) < 1e-15)
    with pytest.raises(ValueError):
        sensing_error_covariance(user.direction, -1.0)


def test_effective_correlation_rejects_coarse_sensing():
    user = user_large_scale(UserGeometry(theta=0.0, delta_theta=0.02), SCENE, 8)
    fine = effective_correlation(user.beta, user.spatial, user.error_at(1e9).covariance)
    assert np.linalg.eigvalsh(fine)[0] >= -1e-14
    with pytest.raises(SensingTooCoarse):
        effective_correlation(user.beta, user.spatial, user.error_at(1e-9).covariance)


def test_psd_sensing_time_is_the_feasibility_boundary():
    user = user_large_scale(UserGeometry(theta=math.radians(30.0), delta_theta=math.radians(1.0)), SCENE, 8)
    t_psd = psd_sensing_time(user)
    assert t_psd > 0
    assert psd_margin(user, t_psd) >= PSD_FEASIBILITY_LEVEL
    assert psd_margin(user, t_psd * (1.0 - 1e-8)) < PSD_FEASIBILITY_LEVEL
    assert psd_margin(user, 2.0 * t_psd) > psd_margin(user, t_psd)


def test_min_sensing_time_takes_the_binding_user():
    geoms = [UserGeometry(theta=math.radians(a), delta_theta=math.radians(1.0)) for a in (-30.0, 0.0, 30.0)]
    users = [user_large_scale(g, SCENE, 8) for g in geoms]
    gammas = [0.5, 1e-6, 0.5]
    req = min_sensing_time(users, gammas, block_time=70.0)
    needed = [max(c, p) for c, p in zip(req.crb_times, req.psd_times)]
    assert req.t_min == max(needed)
    assert req.binding_user == 1
    assert req.crb_times[1] == pytest.approx(users[1].crb.coefficient / 1e-6, rel=1e-15)


def test_min_sensing_time_errors():
    user = user_large_scale(UserGeometry(theta=0.0, delta_theta=0.02), SCENE, 8)
    with pytest.raises(ValueError):
        min_sensing_time([user], [0.5, 0.5], block_time=70.0)
    with pytest.raises(ValueError):
        min_sensing_time([user], [0.0], block_time=70.0)
    with pytest.raises(InfeasibleSensing) as exc:
        min_sensing_time([user], [1e-12], block_time=70.0, num_blocks=35)
    assert exc.value.binding_user == 0
    assert "user 0" in str(exc.value)


def test_looser_requirement_never_needs_longer_sensing():
    geoms = [UserGeometry(theta=math.radians(a), delta_theta=math.radians(1.0)) for a in (-60.0, -10.0, 45.0)]
    users = [user_large_scale(g, SCENE, 8) for g in geoms]
    gammas = np.logspace(-8, 0, 25)
    times = [min_sensing_time(users, [g] * len(users), block_time=70.0).t_min for g in gammas]
    assert all(b <= a for a, b in zip(times, times[1:]))
    assert times[0] > times[-1]
    assert times[-1] == pytest.approx(max(psd_sensing_time(u) for u in users), rel=1e-12)
