import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from dualscale.numerics import as_hermitian, clamp_psd


@dataclass(frozen=True)
class PilotConfig:
    M_m: int
    P_m: float
    sigma_m2: float

    def __post_init__(self):
        if self.M_m < 1 or not self.P_m > 0 or not self.sigma_m2 > 0:
            raise ValueError("pilot symbols, pilot power and noise variance must be positive")

    @property
    def gamma_e(self) -> float:
        return self.M_m * self.P_m / self.sigma_m2


@dataclass(frozen=True)
class EstimatorStats:
    R_hat: NDArray[np.complex128]
    C_h: NDArray[np.complex128]
    C_e: NDArray[np.complex128]
    filter: NDArray[np.complex128]

    @property
    def trace_c_h(self) -> float:
        return float(np.trace(self.C_h).real)


def mmse_stats(R_hat: NDArray, gamma_e: float) -> EstimatorStats:
    """MMSE statistics with D = R_hat + I/gamma_e, evaluated in R_hat's eigenbasis.

    R_hat and D commute, so R_hat D^-1, (R_hat/gamma_e) D^-1 and R_hat D^-1 R_hat
    are diagonal there and stay PSD for any gamma_e.
    """
    if not gamma_e > 0:
        raise ValueError(f"gamma_e must be positive, got {gamma_e}")
    R_hat = clamp_psd(R_hat)
    vals, vecs = np.linalg.eigh(R_hat)
    vals = np.clip(vals, 0.0, None)
    shrink = vals * gamma_e / (vals * gamma_e + 1.0)

    def rebuild(diag):
        return as_hermitian((vecs * diag) @ vecs.conj().T)

    return EstimatorStats(
        R_hat=R_hat,
        C_h=rebuild(vals * shrink),
        C_e=rebuild(vals / (gamma_e * vals + 1.0)),
        filter=rebuild(shrink),
    )


def estimate_channel(y: NDArray, R_hat: NDArray, pilot: PilotConfig) -> NDArray[np.complex128]:
    """h_tilde = R_hat D^-1 y / (M_m sqrt(P_m)); rows of a 2-D y are separate observations."""
    y = np.asarray(y, dtype=np.complex128)
    R_hat = np.asarray(R_hat, dtype=np.complex128)
    if y.shape[-1] != R_hat.shape[0]:
        raise ValueError(f"observation has dimension {y.shape[-1]}, expected {R_hat.shape[0]}")
    D = R_hat + np.eye(R_hat.shape[0]) / pilot.gamma_e
    W = R_hat @ np.linalg.inv(D)
    return (y @ W.T) / (pilot.M_m * math.sqrt(pilot.P_m))


def trace_c_h(R_hat: NDArray, gamma_e: float) -> float:
    if not gamma_e > 0:
        raise ValueError(f"gamma_e must be positive, got {gamma_e}")
    R_hat = np.asarray(R_hat, dtype=np.complex128)
    L = R_hat.shape[0]
    D = R_hat + np.eye(L) / gamma_e
    return float(np.trace(R_hat).real + np.trace(np.linalg.inv(D)).real / gamma_e ** 2 - L / gamma_e)


def neumann_trace_error(R_hat: NDArray, gamma_e: float) -> float:
    """Relative error of tr(I/g - R + g R R) against (1/g^2) tr(D^-1); diagnostic only."""
    R_hat = np.asarray(R_hat, dtype=np.complex128)
    L = R_hat.shape[0]
    exact = np.trace(np.linalg.inv(R_hat + np.eye(L) / gamma_e)).real / gamma_e ** 2
    approx = (L / gamma_e - np.trace(R_hat) + gamma_e * np.trace(R_hat @ R_hat)).real
    return float(abs(approx - exact) / abs(exact))
