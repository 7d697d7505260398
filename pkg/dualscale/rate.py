import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dualscale.channel import TemporalModel, temporal_coeff
from dualscale.errors import DegenerateBeam, PlanError, SensingTooCoarse
from dualscale.estimation import EstimatorStats, mmse_stats
from dualscale.scenario import Scenario
from dualscale.sensing import (
    SensingRequirement,
    UserLargeScale,
    effective_correlation,
    min_sensing_time,
    psd_sensing_time,
    sensing_error_covariance,
    user_large_scale,
)

LOGGER = logging.getLogger(__name__)

EXACT = "exact"
LOWER_BOUND = "lower_bound"
OBJECTIVES = (EXACT, LOWER_BOUND)
# floor(T_l / T_b) guard for sensing times built as h*T_b + residual
BLOCK_EPS = 1e-9


@dataclass(frozen=True)
class FramePlan:
    sensing_time: float
    M: int
    blocks: Tuple[int, ...]

    def sensing_blocks(self, block_time: float) -> int:
        return int(math.floor(self.sensing_time / block_time + BLOCK_EPS))

    def residual(self, block_time: float) -> float:
        return max(self.sensing_time - self.sensing_blocks(block_time) * block_time, 0.0)

    def validate(self, block_time: float, num_blocks: int) -> None:
        if not self.sensing_time > 0:
            raise PlanError(f"sensing time must be positive, got {self.sensing_time}")
        if self.M < 1 or self.M > num_blocks:
            raise PlanError(f"M must lie in [1, {num_blocks}], got {self.M}")
        if len(self.blocks) != self.M:
            raise PlanError(f"{len(self.blocks)} block counts given for M={self.M}")
        if any(int(n) != n or n < 1 for n in self.blocks):
            raise PlanError(f"every block count must be a positive integer, got {list(self.blocks)}")
        if self.sensing_time > num_blocks * block_time:
            raise PlanError(f"sensing time {self.sensing_time} exceeds the subframe {num_blocks * block_time}")
        used = self.sensing_blocks(block_time) + sum(self.blocks)
        if used != num_blocks:
            raise PlanError(f"sensing blocks plus data blocks give {used}, expected {num_blocks}")

    def as_dict(self) -> dict:
        return {"T_l_us": self.sensing_time, "M": self.M, "N_m": list(self.blocks)}


@dataclass(frozen=True)
class RateReport:
    plan: FramePlan
    se: NDArray[np.float64]  # (K, max N_m), column n-1 holds aging index n
    total_rate: float
    overhead_time: float


@dataclass(frozen=True)
class LinkState:
    sensing_time: float
    stats: Tuple[EstimatorStats, ...]
    sensing_errors: Tuple[NDArray[np.complex128], ...]


@dataclass(frozen=True)
class BlockProfile:
    """Per-sensing-time sums over users: cum[:, j] = sum_k sum_{n<=j} SE_{k,n}."""

    cum: NDArray[np.float64]
    first: NDArray[np.float64]


def _trace_product(A: NDArray, B: NDArray) -> float:
    return float(np.einsum("ij,ji->", A, B).real)


def _beam_traces(stats: Sequence[EstimatorStats]) -> List[float]:
    traces = [s.trace_c_h for s in stats]
    for i, t in enumerate(traces):
        if not t > 0:
            raise DegenerateBeam(f"user {i} has trace(C_h)={t:.3e}; its beam is undefined")
    return traces


def sinr(
    k: int,
    n: int,
    powers: Sequence[float],
    stats: Sequence[EstimatorStats],
    users: Sequence[UserLargeScale],
    temporal: Sequence[TemporalModel],
    sigma_c2: float,
) -> float:
    if n < 1:
        raise ValueError(f"aging index starts at 1, got {n}")
    traces = _beam_traces(stats)
    rho = temporal_coeff(temporal[k], n)
    leak = sum(
        users[k].beta * p_i * _trace_product(users[k].spatial, s.C_h) / t
        for p_i, s, t in zip(powers, stats, traces)
    )
    return powers[k] * rho ** 2 * traces[k] / (leak + sigma_c2)


def sinr_lower_bound(
    k: int,
    n: int,
    powers: Sequence[float],
    stats: Sequence[EstimatorStats],
    users: Sequence[UserLargeScale],
    temporal: Sequence[TemporalModel],
    sigma_c2: float,
) -> float:
    if n < 1:
        raise ValueError(f"aging index starts at 1, got {n}")
    traces = _beam_traces(stats)
    rho = temporal_coeff(temporal[k], n)
    spectral_norm = float(np.linalg.eigvalsh(users[k].spatial)[-1])
    return powers[k] * rho ** 2 * traces[k] / (users[k].beta * float(sum(powers)) * spectral_norm + sigma_c2)


def spectral_efficiency(gamma: float) -> float:
    if gamma < 0:
        raise ValueError(f"SINR must be non-negative, got {gamma}")
    return math.log2(1.0 + gamma)


class _LinkKernel:
    """Closed-form per-user gains as a function of the sensing time.

    R_hat = D0 - I/g - s v v^H with D0 = beta R + I/g and s = c/T_l, so D^-1
    follows from D0^-1 by Sherman-Morrison and every trace the SINR needs is a
    scalar polynomial in s and s/(1 - s v^H D0^-1 v).
    """

    def __init__(self, users: Sequence[UserLargeScale], gamma_e: NDArray, powers: NDArray, sigma_c2: float):
        L = users[0].spatial.shape[0]
        K = len(users)
        self.coef = np.array([u.crb.coefficient for u in users])
        self.beta = np.array([u.beta for u in users])
        self.gamma_e = np.asarray(gamma_e, dtype=np.float64)
        self.powers = np.asarray(powers, dtype=np.float64)
        self.sigma_c2 = sigma_c2
        self.L = L
        self.kappa = np.empty(K)
        self.v_norm2 = np.empty(K)
        self.u_norm2 = np.empty(K)
        self.tr_d0_inv = np.empty(K)
        self.tr_r = np.empty(K)
        self.rr = np.empty((K, K))
        self.v_r_v = np.empty((K, K))
        self.r_d0_inv = np.empty((K, K))
        self.u_r_u = np.empty((K, K))
        self.tr_spatial = np.array([np.trace(u.spatial).real for u in users])
        self.spectral_norm = np.array([np.linalg.eigvalsh(u.spatial)[-1] for u in users])
        for i, ui in enumerate(users):
            d0_inv = np.linalg.inv(ui.beta * ui.spatial + np.eye(L) / self.gamma_e[i])
            v = ui.derivative
            u = d0_inv @ v
            self.kappa[i] = np.vdot(v, u).real
            self.v_norm2[i] = np.vdot(v, v).real
            self.u_norm2[i] = np.vdot(u, u).real
            self.tr_d0_inv[i] = np.trace(d0_inv).real
            self.tr_r[i] = ui.beta * self.tr_spatial[i]
            for k, uk in enumerate(users):
                self.rr[k, i] = ui.beta * _trace_product(uk.spatial, ui.spatial)
                self.v_r_v[k, i] = np.vdot(v, uk.spatial @ v).real
                self.r_d0_inv[k, i] = _trace_product(uk.spatial, d0_inv)
                self.u_r_u[k, i] = np.vdot(u, uk.spatial @ u).real

    def gains(self, sensing_time: NDArray, objective: str) -> NDArray[np.float64]:
        """SINR at rho = 1 for every (sensing time, user); shape (P, K)."""
        s = self.coef[None, :] / np.asarray(sensing_time, dtype=np.float64)[:, None]
        g = s / (1.0 - s * self.kappa[None, :])
        inv_g = 1.0 / self.gamma_e[None, :]
        tr_c = self.tr_r - s * self.v_norm2 - self.L * inv_g + (self.tr_d0_inv + g * self.u_norm2) * inv_g ** 2
        if np.any(tr_c <= 0):
            raise DegenerateBeam("a user's trace(C_h) vanished")
        if objective == LOWER_BOUND:
            denom = self.beta * self.powers.sum() * self.spectral_norm + self.sigma_c2
            return self.powers * tr_c / denom[None, :]
        cross = (
            self.rr[None]
            - s[:, None, :] * self.v_r_v[None]
            - self.tr_spatial[None, :, None] * inv_g[:, None, :]
            + (self.r_d0_inv[None] + g[:, None, :] * self.u_r_u[None]) * inv_g[:, None, :] ** 2
        )
        leak = self.beta[None, :] * np.sum(cross * (self.powers[None, :] / tr_c)[:, None, :], axis=2)
        return self.powers[None, :] * tr_c / (leak + self.sigma_c2)


class SystemModel:
    """Immutable evaluation context for one scenario."""

    def __init__(self, scenario: Scenario, users: Sequence[UserLargeScale]):
        self.scenario = scenario
        self.users = tuple(users)
        self.temporal = tuple(u.temporal for u in scenario.users)
        self.powers = np.array(scenario.powers)
        self.gamma_e = np.full(scenario.K, scenario.pilot.gamma_e)
        self.sigma_c2 = scenario.sigma_c2
        self.block_time = scenario.block_time
        self.pilot_time = scenario.pilot_time
        self.num_blocks = scenario.N
        self.rho = np.array([[temporal_coeff(m, n) for n in range(scenario.N + 1)] for m in self.temporal])
        self._kernel = _LinkKernel(self.users, self.gamma_e, self.powers, self.sigma_c2)
        self._requirement: Optional[SensingRequirement] = None
        self._psd_floor: Optional[float] = None

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "SystemModel":
        users = [
            user_large_scale(u.geometry, scenario.scene_for(k), scenario.L_t, scenario.quad_order)
            for k, u in enumerate(scenario.users)
        ]
        return cls(scenario, users)

    @property
    def K(self) -> int:
        return len(self.users)

    def requirement(self) -> SensingRequirement:
        if self._requirement is None:
            self._requirement = min_sensing_time(self.users, self.scenario.gammas, self.block_time, self.num_blocks)
            LOGGER.info(
                "[rate][requirement] t_min_us=%.6f binding_user=%s",
                self._requirement.t_min, self._requirement.binding_user,
            )
        return self._requirement

    def psd_floor(self) -> float:
        if self._psd_floor is None:
            self._psd_floor = max(psd_sensing_time(u) for u in self.users)
        return self._psd_floor

    def link_state(self, sensing_time: float) -> LinkState:
        stats = []
        errors = []
        for k, user in enumerate(self.users):
            R_r = sensing_error_covariance(user.direction, user.crb.crb(sensing_time))
            stats.append(mmse_stats(effective_correlation(user.beta, user.spatial, R_r), self.gamma_e[k]))
            errors.append(R_r)
        return LinkState(sensing_time=sensing_time, stats=tuple(stats), sensing_errors=tuple(errors))

    def sinr(self, link: LinkState, k: int, n: int, objective: str = EXACT) -> float:
        fn = sinr if objective == EXACT else sinr_lower_bound
        return fn(k, n, self.powers, link.stats, self.users, self.temporal, self.sigma_c2)

    def block_profile(self, sensing_time: NDArray, objective: str = EXACT) -> BlockProfile:
        if objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
        t = np.atleast_1d(np.asarray(sensing_time, dtype=np.float64))
        if np.any(t < self.psd_floor() * (1.0 - 1e-9)):
            raise SensingTooCoarse(f"sensing time {t.min():.6f} us is below the PSD floor {self.psd_floor():.6f} us")
        gains = self._kernel.gains(t, objective)
        rho2 = self.rho[:, 1:] ** 2
        se = np.log2(1.0 + gains[:, :, None] * rho2[None, :, :])
        per_block = se.sum(axis=1)
        cum = np.concatenate([np.zeros((t.size, 1)), np.cumsum(per_block, axis=1)], axis=1)
        return BlockProfile(cum=cum, first=per_block[:, 0])

    def segment_rates(self, profile: BlockProfile, residual: NDArray, blocks: Sequence[int]) -> NDArray[np.float64]:
        """Subframe rate for one block partition across a batch of residual sensing times."""
        weights = np.bincount(np.asarray(blocks, dtype=np.int64), minlength=profile.cum.shape[1]).astype(np.float64)
        data = profile.cum @ weights
        overhead = len(blocks) * self.pilot_time + np.asarray(residual)
        return self.block_time * data - overhead * profile.first


def frame_rate(plan: FramePlan, system: SystemModel, objective: str = EXACT) -> RateReport:
    plan.validate(system.block_time, system.num_blocks)
    link = system.link_state(plan.sensing_time)
    n_max = max(plan.blocks)
    se = np.array([
        [spectral_efficiency(system.sinr(link, k, n, objective)) for n in range(1, n_max + 1)]
        for k in range(system.K)
    ])
    cum = np.cumsum(se, axis=1)
    data = sum(float(cum[:, n - 1].sum()) for n in plan.blocks)
    overhead = plan.M * system.pilot_time + plan.residual(system.block_time)
    total = system.block_time * data - overhead * float(se[:, 0].sum())
    return RateReport(plan=plan, se=se, total_rate=total, overhead_time=overhead)
