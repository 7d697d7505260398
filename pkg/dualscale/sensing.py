import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dualscale.channel import UserGeometry, spatial_correlation, steering_derivative, steering_rx, steering_tx
from dualscale.errors import DegenerateGeometry, InfeasibleSensing, SensingTooCoarse
from dualscale.numerics import PSD_TOLERANCE, as_hermitian, clamp_psd

LOGGER = logging.getLogger(__name__)

BRACKET_FLOOR = 1e-15
# bisection boundary sits inside the clamp band so T_l^min itself never trips it
PSD_FEASIBILITY_LEVEL = -0.5 * PSD_TOLERANCE
BISECTION_RTOL = 1e-10


@dataclass(frozen=True)
class SensingScene:
    alpha: complex
    G: float
    L_r: int
    sigma_r2: float

    def __post_init__(self):
        if not self.G > 0:
            raise ValueError(f"G must be positive, got {self.G}")
        if self.L_r < 1:
            raise ValueError(f"L_r must be >= 1, got {self.L_r}")
        if not self.sigma_r2 > 0:
            raise ValueError(f"sigma_r2 must be positive, got {self.sigma_r2}")

    @property
    def alpha_mag2(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class CrbModel:
    coefficient: float

    def __post_init__(self):
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise ValueError(f"CRB coefficient must be positive and finite, got {self.coefficient}")

    def crb(self, sensing_time: float) -> float:
        if not sensing_time > 0:
            raise ValueError(f"sensing time must be positive, got {sensing_time}")
        return self.coefficient / sensing_time


@dataclass(frozen=True)
class LargeScaleError:
    direction: NDArray[np.complex128]
    scale: float

    @property
    def covariance(self) -> NDArray[np.complex128]:
        return sensing_error_covariance(self.direction, self.scale)


@dataclass(frozen=True)
class UserLargeScale:
    theta: float
    beta: float
    spatial: NDArray[np.complex128]
    crb: CrbModel
    derivative: NDArray[np.complex128]

    @property
    def direction(self) -> NDArray[np.complex128]:
        return np.outer(self.derivative, self.derivative.conj())

    def error_at(self, sensing_time: float) -> LargeScaleError:
        return LargeScaleError(direction=self.direction, scale=self.crb.crb(sensing_time))


@dataclass(frozen=True)
class SensingRequirement:
    t_min: float
    binding_user: int
    crb_times: Tuple[float, ...]
    psd_times: Tuple[float, ...]


def fisher_bracket(theta: float, L_t: int, L_r: int) -> float:
    a = steering_tx(theta, L_t)
    a_dot = steering_derivative(theta, L_t)
    b = steering_rx(theta, L_r)
    b_dot = steering_derivative(theta, L_r)
    w = a.conj()
    A = np.outer(b, a)
    A_dot = np.outer(b_dot, a) + np.outer(b, a_dot)
    Aw = A @ w
    Adw = A_dot @ w
    return float(np.vdot(Adw, Adw).real - abs(np.vdot(Adw, Aw)) ** 2 / np.vdot(Aw, Aw).real)


def crb_coefficient(scene: SensingScene, theta_k: float, L_t: int) -> CrbModel:
    bracket = fisher_bracket(theta_k, L_t, scene.L_r)
    if bracket <= BRACKET_FLOOR:
        raise DegenerateGeometry(f"angle unidentifiable at theta={theta_k:.6f} (bracket={bracket:.3e})")
    alpha_dot2 = scene.G * scene.L_r * L_t * scene.alpha_mag2
    return CrbModel(coefficient=scene.sigma_r2 / (2.0 * alpha_dot2 * bracket))


def sensing_error_covariance(err_dir: NDArray, crb: float) -> NDArray[np.complex128]:
    if crb < 0:
        raise ValueError(f"crb must be non-negative, got {crb}")
    return as_hermitian(crb * np.asarray(err_dir))


def effective_correlation(beta: float, spatial: NDArray, R_r: NDArray) -> NDArray[np.complex128]:
    R_hat = as_hermitian(beta * np.asarray(spatial) - np.asarray(R_r))
    lowest = float(np.linalg.eigvalsh(R_hat)[0])
    if lowest < -PSD_TOLERANCE:
        raise SensingTooCoarse(f"effective correlation has eigenvalue {lowest:.3e}; sense longer")
    return clamp_psd(R_hat)


def user_large_scale(geom: UserGeometry, scene: SensingScene, L_t: int, quad_order: int = 64) -> UserLargeScale:
    return UserLargeScale(
        theta=geom.theta,
        beta=geom.beta,
        spatial=spatial_correlation(geom, L_t, quad_order),
        crb=crb_coefficient(scene, geom.theta, L_t),
        derivative=math.sqrt(geom.beta) * steering_derivative(geom.theta, L_t),
    )


def psd_margin(user: UserLargeScale, sensing_time: float) -> float:
    """Smallest eigenvalue of beta*R - CRB(T_l) f' f'^H before clamping."""
    s = user.crb.crb(sensing_time)
    return float(np.linalg.eigvalsh(as_hermitian(user.beta * user.spatial - s * user.direction))[0])


def psd_sensing_time(user: UserLargeScale) -> float:
    if float(np.vdot(user.derivative, user.derivative).real) == 0.0:
        return 0.0

    def feasible(t: float) -> bool:
        return psd_margin(user, t) >= PSD_FEASIBILITY_LEVEL

    hi = user.crb.coefficient
    for _ in range(400):
        if feasible(hi):
            break
        hi *= 2.0
    else:
        raise SensingTooCoarse(f"no sensing time makes the effective correlation PSD at theta={user.theta:.6f}")
    lo = hi
    for _ in range(400):
        lo *= 0.5
        if not feasible(lo):
            break
    else:
        return 0.0
    while hi / lo - 1.0 > BISECTION_RTOL:
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def min_sensing_time(
    users: Sequence[UserLargeScale],
    gammas: Sequence[float],
    block_time: float,
    num_blocks: Optional[int] = None,
) -> SensingRequirement:
    if len(users) != len(gammas):
        raise ValueError("one gamma per user is required")
    crb_times = []
    psd_times = []
    for k, (user, gamma) in enumerate(zip(users, gammas)):
        if not gamma > 0:
            raise ValueError(f"gamma of user {k} must be positive, got {gamma}")
        crb_times.append(user.crb.coefficient / gamma)
        psd_times.append(psd_sensing_time(user))
        LOGGER.debug("[sensing][requirement] user=%s crb_time_us=%.6f psd_time_us=%.6f", k, crb_times[-1], psd_times[-1])
    needed = [max(c, p) for c, p in zip(crb_times, psd_times)]
    binding = int(np.argmax(needed))
    t_min = needed[binding]
    if num_blocks is not None and t_min > num_blocks * block_time:
        raise InfeasibleSensing(binding, t_min, num_blocks * block_time)
    return SensingRequirement(t_min=t_min, binding_user=binding, crb_times=tuple(crb_times), psd_times=tuple(psd_times))
