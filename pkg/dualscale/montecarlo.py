import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dualscale.channel import age_channel, steering_matrix, steering_tx, temporal_coeff
from dualscale.config import get_int_setting, map_tasks
from dualscale.estimation import estimate_channel
from dualscale.numerics import RngStream, sample_complex_gaussian
from dualscale.rate import FramePlan, SystemModel
from dualscale.sensing import UserLargeScale

LOGGER = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
DEFAULT_CHUNK = 20_000
SINR_TOLERANCE = 0.05
TAYLOR_CRB_LIMIT = 1e-3


@dataclass(frozen=True)
class McReport:
    k: int
    n: int
    samples: int
    signal_empirical: complex
    signal_analytic: float
    variance_empirical: float
    variance_analytic: float
    interference_empirical: Tuple[float, ...]
    interference_analytic: Tuple[float, ...]
    sinr_empirical: float
    sinr_analytic: float

    @property
    def relative_error(self) -> float:
        return abs(self.sinr_empirical - self.sinr_analytic) / self.sinr_analytic

    @property
    def signal_error(self) -> float:
        return abs(self.signal_empirical.real - self.signal_analytic) / self.signal_analytic

    @property
    def variance_error(self) -> float:
        return abs(self.variance_empirical - self.variance_analytic) / self.variance_analytic

    @property
    def interference_error(self) -> float:
        errors = [
            abs(e - a) / a
            for i, (e, a) in enumerate(zip(self.interference_empirical, self.interference_analytic))
            if i != self.k
        ]
        return max(errors, default=0.0)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "samples": self.samples,
            "signal_empirical": self.signal_empirical.real,
            "signal_analytic": self.signal_analytic,
            "variance_empirical": self.variance_empirical,
            "variance_analytic": self.variance_analytic,
            "interference_empirical": list(self.interference_empirical),
            "interference_analytic": list(self.interference_analytic),
            "sinr_empirical": self.sinr_empirical,
            "sinr_analytic": self.sinr_analytic,
            "relative_error": self.relative_error,
        }


@dataclass(frozen=True)
class DeltaMethodReport:
    crb: float
    samples: int
    error: float
    outside_taylor_regime: bool


def _check_samples(samples: int) -> None:
    if samples < MIN_SAMPLES:
        raise ValueError(f"at least {MIN_SAMPLES} samples are required, got {samples}")


def _chunks(samples: int) -> Iterator[Tuple[int, int]]:
    size = max(1, get_int_setting("DUALSCALE_MC_CHUNK", DEFAULT_CHUNK))
    for j, start in enumerate(range(0, samples, size)):
        yield j, min(size, samples - start)


def _fsum_complex(values: Sequence[complex]) -> complex:
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def _sinr_chunk(task) -> Tuple[complex, NDArray[np.float64]]:
    link, pilot, k, rho, target, stream, count = task
    gen = stream.generator()
    noise_var = pilot.M_m * pilot.sigma_m2
    beams = []
    channel_k = None
    for i, stats in enumerate(link.stats):
        h_hat = sample_complex_gaussian(stats.R_hat, gen, count)
        e_r = sample_complex_gaussian(link.sensing_errors[i], gen, count)
        noise = sample_complex_gaussian(noise_var * np.eye(h_hat.shape[1]), gen, count)
        y = pilot.M_m * math.sqrt(pilot.P_m) * h_hat + noise
        beams.append(estimate_channel(y, stats.R_hat, pilot) / math.sqrt(stats.trace_c_h))
        if i == k:
            channel_k = age_channel(h_hat + e_r, rho, target.spatial, target.beta, gen)
    gains = np.stack([np.einsum("sl,sl->s", channel_k.conj(), b) for b in beams], axis=1)
    return complex(gains[:, k].sum()), np.sum(np.abs(gains) ** 2, axis=0)


def simulate_sinr(
    system: SystemModel,
    plan: FramePlan,
    k: int,
    n: int,
    samples: int,
    rng: RngStream,
    workers: Optional[int] = None,
) -> McReport:
    """Empirical SINR terms for user k in block n after an update.

    Per draw every user gets h_hat ~ CN(0, R_hat) and e_r ~ CN(0, R_r); the pilot
    observes h_hat, the MMSE estimate builds the MRT beam and user k's channel
    h_1 = h_hat + e_r is aged to block n. Chunks are independent and may run in
    worker processes; their sums are combined in chunk order.
    """
    _check_samples(samples)
    if n < 1:
        raise ValueError(f"aging index starts at 1, got {n}")
    link = system.link_state(plan.sensing_time)
    pilot = system.scenario.pilot
    traces = [s.trace_c_h for s in link.stats]
    rho = temporal_coeff(system.temporal[k], n)
    target = system.users[k]
    tasks = [(link, pilot, k, rho, target, rng.child(j), count) for j, count in _chunks(samples)]
    results = map_tasks(_sinr_chunk, tasks, workers)
    signal_sums = [r[0] for r in results]
    cross_sums = [r[1] for r in results]

    mean_signal = _fsum_complex(signal_sums) / samples
    second = np.array([math.fsum(c[i] for c in cross_sums) for i in range(system.K)]) / samples
    variance = float(second[k] - abs(mean_signal) ** 2)
    leak = sum(float(system.powers[i] * second[i]) for i in range(system.K) if i != k)
    p_k = float(system.powers[k])
    sinr_empirical = p_k * abs(mean_signal) ** 2 / (p_k * variance + leak + system.sigma_c2)

    interference_analytic = tuple(
        target.beta * float(np.einsum("ij,ji->", target.spatial, s.C_h).real) / t
        for s, t in zip(link.stats, traces)
    )
    report = McReport(
        k=k,
        n=n,
        samples=samples,
        signal_empirical=mean_signal,
        signal_analytic=rho * math.sqrt(traces[k]),
        variance_empirical=variance,
        variance_analytic=interference_analytic[k],
        interference_empirical=tuple(float(x) for x in second),
        interference_analytic=interference_analytic,
        sinr_empirical=sinr_empirical,
        sinr_analytic=system.sinr(link, k, n),
    )
    LOGGER.debug(
        "[montecarlo][sinr] k=%s n=%s samples=%s empirical=%.6g analytic=%.6g error=%.4f",
        k, n, samples, report.sinr_empirical, report.sinr_analytic, report.relative_error,
    )
    return report


def aging_indices(blocks: int) -> List[int]:
    return sorted({1, math.ceil(blocks / 2), blocks})


def verify_proposition1(
    system: SystemModel, plan: FramePlan, samples: int, rng: RngStream, workers: Optional[int] = None
) -> List[McReport]:
    _check_samples(samples)
    plan.validate(system.block_time, system.num_blocks)
    reports = []
    for k in range(system.K):
        for n in aging_indices(max(plan.blocks)):
            reports.append(simulate_sinr(system, plan, k, n, samples, rng.child(k).child(n), workers))
    failed = breaches(reports)
    LOGGER.info("[montecarlo][closed_form] reports=%s failed=%s samples=%s", len(reports), len(failed), samples)
    return reports


def breaches(reports: Sequence[McReport], tolerance: float = SINR_TOLERANCE) -> List[Tuple[int, int]]:
    return [(r.k, r.n) for r in reports if r.relative_error > tolerance]


def _delta_chunk(task) -> NDArray[np.complex128]:
    user, crb, stream, count = task
    L = user.spatial.shape[0]
    scale = math.sqrt(user.beta)
    thetas = user.theta + math.sqrt(crb) * stream.generator().standard_normal(count)
    diff = scale * (steering_matrix(thetas, L) - steering_tx(user.theta, L)[:, None])
    return diff @ diff.conj().T


def _aging_chunk(task) -> NDArray[np.complex128]:
    user, rho, stream, count = task
    gen = stream.generator()
    h1 = sample_complex_gaussian(user.beta * user.spatial, gen, count)
    hn = age_channel(h1, rho, user.spatial, user.beta, gen)
    return hn.T @ h1.conj()


def verify_delta_method(
    user: UserLargeScale, crb: float, samples: int, rng: RngStream, workers: Optional[int] = None
) -> DeltaMethodReport:
    """Frobenius-relative gap between the sampled beam-error covariance and crb * f' f'^H."""
    if crb < 0:
        raise ValueError(f"crb must be non-negative, got {crb}")
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    outside = crb > TAYLOR_CRB_LIMIT
    if outside:
        LOGGER.warning("[montecarlo][delta] crb=%.3e outside_taylor_regime=1", crb)
    if crb == 0.0:
        return DeltaMethodReport(crb=crb, samples=samples, error=0.0, outside_taylor_regime=False)
    tasks = [(user, crb, rng.child(j), count) for j, count in _chunks(samples)]
    sums = map_tasks(_delta_chunk, tasks, workers)
    empirical = np.sum(sums, axis=0) / samples
    target = crb * user.direction
    error = float(np.linalg.norm(empirical - target) / np.linalg.norm(target))
    return DeltaMethodReport(crb=crb, samples=samples, error=error, outside_taylor_regime=outside)


def verify_aging(user: UserLargeScale, rho: float, samples: int, rng: RngStream, workers: Optional[int] = None) -> float:
    """Frobenius-relative gap between the sampled E[h_n h_1^H] and rho * beta * R."""
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")
    tasks = [(user, rho, rng.child(j), count) for j, count in _chunks(samples)]
    sums = map_tasks(_aging_chunk, tasks, workers)
    empirical = np.sum(sums, axis=0) / samples
    target = rho * user.beta * user.spatial
    return float(np.linalg.norm(empirical - target) / np.linalg.norm(target))
