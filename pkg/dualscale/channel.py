import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.typing import NDArray

from dualscale.errors import NotPositiveSemidefinite
from dualscale.numerics import RngStream, bessel_j0, clamp_psd, gauss_legendre, sample_complex_gaussian

SPEED_OF_LIGHT = 299_792_458.0
JAKES = "jakes"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class UserGeometry:
    theta: float
    delta_theta: float
    beta: float = 1.0

    def __post_init__(self):
        if not abs(self.theta) < math.pi / 2:
            raise ValueError(f"theta must satisfy |theta| < pi/2, got {self.theta}")
        if not self.delta_theta > 0:
            raise ValueError(f"delta_theta must be positive, got {self.delta_theta}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class TemporalModel:
    kind: str
    rho_1: Optional[float] = None
    f_d_max_tb: Optional[float] = None

    def __post_init__(self):
        if self.kind == EXPONENTIAL:
            if self.rho_1 is None or self.f_d_max_tb is not None:
                raise ValueError("exponential model takes rho_1 only")
            if not 0.0 < self.rho_1 <= 1.0:
                raise ValueError(f"rho_1 must lie in (0, 1], got {self.rho_1}")
        elif self.kind == JAKES:
            if self.f_d_max_tb is None or self.rho_1 is not None:
                raise ValueError("jakes model takes f_d_max_Tb only")
            if not self.f_d_max_tb >= 0.0:
                raise ValueError(f"f_d_max_Tb must be non-negative, got {self.f_d_max_tb}")
        else:
            raise ValueError(f"unknown temporal model kind: {self.kind!r}")

    @classmethod
    def exponential(cls, rho_1: float) -> "TemporalModel":
        return cls(kind=EXPONENTIAL, rho_1=rho_1)

    @classmethod
    def jakes(cls, f_d_max_tb: float) -> "TemporalModel":
        return cls(kind=JAKES, f_d_max_tb=f_d_max_tb)


def doppler_product(speed_mps: float, carrier_hz: float, block_time_s: float) -> float:
    """Maximum Doppler shift times block duration."""
    if speed_mps < 0 or carrier_hz <= 0 or block_time_s <= 0:
        raise ValueError("speed must be >= 0, carrier and block time > 0")
    return speed_mps * carrier_hz / SPEED_OF_LIGHT * block_time_s


def steering_tx(theta: float, L: int) -> NDArray[np.complex128]:
    if L < 1:
        raise ValueError(f"antenna count must be >= 1, got {L}")
    l = np.arange(L)
    return np.exp(-1j * np.pi * l * np.sin(theta)) / math.sqrt(L)


# same half-wavelength ULA at the receiver
steering_rx = steering_tx


def steering_derivative(theta: float, L: int) -> NDArray[np.complex128]:
    a = steering_tx(theta, L)
    return (-1j * np.pi * np.arange(L) * np.cos(theta)) * a


def steering_matrix(thetas: NDArray[np.float64], L: int) -> NDArray[np.complex128]:
    """Columns are steering_tx(theta_i, L)."""
    l = np.arange(L)[:, None]
    return np.exp(-1j * np.pi * l * np.sin(np.asarray(thetas))[None, :]) / math.sqrt(L)


def spatial_correlation(geom: UserGeometry, L_t: int, quad_order: int = 64) -> NDArray[np.complex128]:
    """Gain-normalized spatial correlation for a uniform angle spectrum around theta."""
    if quad_order < 8:
        raise ValueError(f"quad_order must be >= 8, got {quad_order}")
    if L_t < 1:
        raise ValueError(f"antenna count must be >= 1, got {L_t}")
    rule = gauss_legendre(quad_order, geom.theta - geom.delta_theta, geom.theta + geom.delta_theta)
    A = steering_matrix(rule.nodes, L_t)
    density = rule.weights / (2.0 * geom.delta_theta)
    R = (A * density) @ A.conj().T
    try:
        return clamp_psd(R)
    except NotPositiveSemidefinite as exc:
        raise RuntimeError(f"quadrature produced a non-PSD correlation: {exc}")


def temporal_coeff(model: TemporalModel, n: int) -> float:
    if n < 0:
        raise ValueError(f"block offset must be >= 0, got {n}")
    if n == 0:
        return 1.0
    if model.kind == JAKES:
        return bessel_j0(2.0 * math.pi * model.f_d_max_tb * n)
    return float(model.rho_1 ** n)


def age_channel(
    h1: NDArray,
    rho_n: float,
    spatial: NDArray,
    beta: float,
    rng: Union[RngStream, np.random.Generator],
) -> NDArray[np.complex128]:
    """rho_n * h1 + e with e ~ CN(0, beta (1 - rho_n^2) R); rows of a 2-D h1 age independently."""
    if abs(rho_n) > 1.0:
        raise ValueError(f"|rho_n| must be <= 1, got {rho_n}")
    h1 = np.asarray(h1, dtype=np.complex128)
    if rho_n == 1.0:
        return h1.copy()
    batch = h1.reshape(-1, h1.shape[-1])
    innovation = sample_complex_gaussian(beta * (1.0 - rho_n ** 2) * np.asarray(spatial), rng, batch.shape[0])
    return (rho_n * batch + innovation).reshape(h1.shape)
