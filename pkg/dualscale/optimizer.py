import itertools
import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from dualscale.config import map_tasks, worker_count
from dualscale.errors import InfeasibleSensing, SegmentInfeasible, SizeLimitExceeded
from dualscale.numerics import DEFAULT_GRID_POINTS, RngStream, maximize_unimodal_1d
from dualscale.rate import EXACT, BlockProfile, FramePlan, SystemModel, frame_rate

LOGGER = logging.getLogger(__name__)

RBA_DRAWS = 50
RBA_STREAM_ID = 1
MAX_BRUTE_FORCE_BLOCKS = 40
MAX_COMPOSITION_BLOCKS = 12
# keeps h*T_b + residual strictly inside segment h
SEGMENT_TOP = 1.0 - 1e-6
INNER_TOL_FRACTION = 1e-6


class BaselineKind(str, Enum):
    SSU = "ssu"
    FSU = "fsu"
    RBA = "rba"


PROPOSED = "proposed"


@dataclass(frozen=True)
class TraceEntry:
    h: int
    M: int
    residual: float
    rate: float
    blocks: Tuple[int, ...]

    def as_dict(self) -> dict:
        return {"h": self.h, "M": self.M, "residual_us": self.residual, "rate": self.rate}


@dataclass(frozen=True)
class InnerResult:
    residual: float
    rate: float
    blocks: Tuple[int, ...]


@dataclass(frozen=True)
class SearchResult:
    plan: FramePlan
    rate: float
    trace: Tuple[TraceEntry, ...]
    t_min: float
    kind: str = PROPOSED
    draw_rates: Tuple[float, ...] = ()

    @property
    def outer_loops(self) -> int:
        return len(self.trace)


@dataclass(frozen=True)
class ConcavityReport:
    max_second_difference: float
    max_relative: float
    worst_h: int
    worst_M: int


def allocate_blocks(N_t: int, M: int) -> List[int]:
    if M < 1 or M > N_t:
        raise ValueError(f"need 1 <= M <= N_t, got M={M}, N_t={N_t}")
    q, r = divmod(N_t, M)
    return [q + 1] * r + [q] * (M - r)


def enumerate_compositions(N_t: int, M: int) -> Iterator[Tuple[int, ...]]:
    """All ordered ways to write N_t as M positive parts."""
    for cuts in itertools.combinations(range(1, N_t), M - 1):
        edges = (0,) + cuts + (N_t,)
        yield tuple(b - a for a, b in zip(edges, edges[1:]))


def random_composition(N_t: int, M: int, gen: np.random.Generator) -> List[int]:
    if M < 1 or M > N_t:
        raise ValueError(f"need 1 <= M <= N_t, got M={M}, N_t={N_t}")
    cuts = np.sort(gen.choice(np.arange(1, N_t), size=M - 1, replace=False)) if M > 1 else np.array([], dtype=int)
    return [int(x) for x in np.diff(np.concatenate([[0], cuts, [N_t]]))]


class _Segment:
    """Sensing times h*T_b + residual for one h, with the grid profile computed once."""

    def __init__(self, system: SystemModel, h: int, t_min: float, objective: str, grid_points: int):
        self.system = system
        self.h = h
        self.objective = objective
        self.lo = max(0.0, t_min - h * system.block_time)
        self.hi = system.block_time * SEGMENT_TOP
        if self.lo >= self.hi:
            raise SegmentInfeasible(f"segment h={h} lies below T_l^min={t_min:.6f} us")
        self.grid = np.linspace(self.lo, self.hi, grid_points)
        self.grid_profile = self.profile(self.grid)
        self._scalar: Dict[float, BlockProfile] = {}

    def profile(self, residual: NDArray) -> BlockProfile:
        return self.system.block_profile(self.h * self.system.block_time + residual, self.objective)

    def rate(self, residual: float, blocks: Sequence[int]) -> float:
        profile = self._scalar.get(residual)
        if profile is None:
            profile = self._scalar[residual] = self.profile(np.array([residual]))
        return float(self.system.segment_rates(profile, np.array([residual]), blocks)[0])

    def batch(self, residual: NDArray, blocks: Sequence[int]) -> NDArray[np.float64]:
        if residual.shape == self.grid.shape and np.array_equal(residual, self.grid):
            return self.system.segment_rates(self.grid_profile, self.grid, blocks)
        return self.system.segment_rates(self.profile(residual), residual, blocks)


def optimize_inner(
    system: SystemModel,
    h: int,
    M: int,
    t_min: Optional[float] = None,
    blocks: Optional[Sequence[int]] = None,
    objective: str = EXACT,
    grid_points: int = DEFAULT_GRID_POINTS,
    segment: Optional[_Segment] = None,
) -> InnerResult:
    N_t = system.num_blocks - h
    if M > N_t:
        raise ValueError(f"M={M} exceeds the {N_t} data blocks left after h={h}")
    if t_min is None:
        t_min = system.requirement().t_min
    if segment is None:
        segment = _Segment(system, h, t_min, objective, grid_points)
    blocks = tuple(allocate_blocks(N_t, M) if blocks is None else blocks)
    if len(blocks) != M or sum(blocks) != N_t or min(blocks) < 1:
        raise ValueError(f"blocks {list(blocks)} are not {M} positive parts of {N_t}")
    residual, rate = maximize_unimodal_1d(
        lambda r: segment.rate(r, blocks),
        segment.lo,
        segment.hi,
        tol=INNER_TOL_FRACTION * system.block_time,
        grid_points=grid_points,
        f_batch=lambda xs: segment.batch(xs, blocks),
    )
    if segment.lo == 0.0 and residual != 0.0:
        at_zero = segment.rate(0.0, blocks)
        if at_zero >= rate:
            residual, rate = 0.0, at_zero
    LOGGER.debug("[optimize][segment] h=%s M=%s residual_us=%.6f rate=%.6f", h, M, residual, rate)
    return InnerResult(residual=residual, rate=rate, blocks=blocks)


def _candidate_updates(mode: str, N_t: int) -> Sequence[int]:
    if mode == BaselineKind.SSU.value:
        return [1]
    if mode == BaselineKind.FSU.value:
        return [N_t]
    return range(1, N_t + 1)


def _segment_entries(task) -> List[TraceEntry]:
    system, h, t_min, mode, objective, grid_points, stream = task
    try:
        segment = _Segment(system, h, t_min, objective, grid_points)
    except SegmentInfeasible:
        LOGGER.debug("[optimize][segment] h=%s skipped=infeasible", h)
        return []
    N_t = system.num_blocks - h
    entries = []
    for M in _candidate_updates(mode, N_t):
        blocks = None
        if mode == BaselineKind.RBA.value:
            blocks = random_composition(N_t, M, stream.child(h).child(M).generator())
        inner = optimize_inner(system, h, M, t_min, blocks, objective, grid_points, segment)
        entries.append(TraceEntry(h=h, M=M, residual=inner.residual, rate=inner.rate, blocks=inner.blocks))
    return entries


def _best(entries: Sequence[TraceEntry]) -> TraceEntry:
    return max(entries, key=lambda e: (e.rate, -e.h, -e.M, -e.residual))


def _search(
    system: SystemModel,
    mode: str,
    objective: str,
    grid_points: int,
    workers: Optional[int],
    stream: Optional[RngStream] = None,
    pool: Optional[Executor] = None,
) -> SearchResult:
    requirement = system.requirement()
    t_min = requirement.t_min
    first_h = int(math.floor(t_min / system.block_time))
    tasks = [(system, h, t_min, mode, objective, grid_points, stream) for h in range(first_h, system.num_blocks)]
    trace = [e for entries in map_tasks(_segment_entries, tasks, workers, pool) for e in entries]
    if not trace:
        raise InfeasibleSensing(requirement.binding_user, t_min, system.num_blocks * system.block_time)
    best = _best(trace)
    plan = FramePlan(sensing_time=best.h * system.block_time + best.residual, M=best.M, blocks=best.blocks)
    rate = frame_rate(plan, system, objective).total_rate
    LOGGER.info(
        "[optimize][%s] loops=%s h=%s M=%s T_l_us=%.6f rate=%.6f",
        mode, len(trace), best.h, best.M, plan.sensing_time, rate,
    )
    return SearchResult(plan=plan, rate=rate, trace=tuple(trace), t_min=t_min, kind=mode)


def optimize(
    system: SystemModel,
    objective: str = EXACT,
    workers: Optional[int] = None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> SearchResult:
    """Exhaustive (h, M) search with a 1-D residual search per pair and balanced partitions."""
    return _search(system, PROPOSED, objective, grid_points, workers)


def baseline(
    system: SystemModel,
    kind: BaselineKind,
    rng: Optional[RngStream] = None,
    draws: int = RBA_DRAWS,
    objective: str = EXACT,
    workers: Optional[int] = None,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> SearchResult:
    kind = BaselineKind(kind)
    if kind is not BaselineKind.RBA:
        return _search(system, kind.value, objective, grid_points, workers)
    if draws < 1:
        raise ValueError(f"RBA needs at least one draw, got {draws}")
    stream = rng if rng is not None else RngStream(system.scenario.seed, RBA_STREAM_ID)
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [_search(system, kind.value, objective, grid_points, workers, stream.child(d), pool) for d in range(draws)]
    else:
        results = [_search(system, kind.value, objective, grid_points, workers, stream.child(d)) for d in range(draws)]
    draw_rates = tuple(r.rate for r in results)
    mean = math.fsum(draw_rates) / len(draw_rates)
    LOGGER.info("[optimize][rba] draws=%s mean_rate=%.6f", draws, mean)
    first = results[0]
    return SearchResult(plan=first.plan, rate=mean, trace=first.trace, t_min=first.t_min, kind=kind.value, draw_rates=draw_rates)


def brute_force(
    system: SystemModel,
    grid_points: int = DEFAULT_GRID_POINTS,
    all_compositions: bool = False,
    sensing_blocks: Optional[Sequence[int]] = None,
    objective: str = EXACT,
) -> SearchResult:
    """Grid-only exhaustive search; with all_compositions every partition is tried."""
    N = system.num_blocks
    if N > MAX_BRUTE_FORCE_BLOCKS:
        raise SizeLimitExceeded(f"brute force supports N <= {MAX_BRUTE_FORCE_BLOCKS}, got {N}")
    requirement = system.requirement()
    t_min = requirement.t_min
    first_h = int(math.floor(t_min / system.block_time))
    h_values = list(range(first_h, N)) if sensing_blocks is None else sorted(set(sensing_blocks))
    if all_compositions and any(N - h > MAX_COMPOSITION_BLOCKS for h in h_values):
        raise SizeLimitExceeded(f"full-composition mode supports N_t <= {MAX_COMPOSITION_BLOCKS}")
    trace = []
    for h in h_values:
        if h < first_h or h >= N:
            continue
        try:
            segment = _Segment(system, h, t_min, objective, grid_points)
        except SegmentInfeasible:
            continue
        N_t = N - h
        for M in range(1, N_t + 1):
            options = enumerate_compositions(N_t, M) if all_compositions else [tuple(allocate_blocks(N_t, M))]
            best = None
            for blocks in options:
                rates = segment.batch(segment.grid, blocks)
                i = int(np.argmax(rates))
                if best is None or rates[i] > best.rate:
                    best = TraceEntry(h=h, M=M, residual=float(segment.grid[i]), rate=float(rates[i]), blocks=tuple(blocks))
            trace.append(best)
    if not trace:
        raise InfeasibleSensing(requirement.binding_user, t_min, N * system.block_time)
    best = _best(trace)
    plan = FramePlan(sensing_time=best.h * system.block_time + best.residual, M=best.M, blocks=best.blocks)
    return SearchResult(plan=plan, rate=frame_rate(plan, system, objective).total_rate, trace=tuple(trace), t_min=t_min, kind="brute_force")


def concavity_diagnostic(system: SystemModel, points: int = 100, objective: str = EXACT) -> ConcavityReport:
    """Largest second difference of the residual objective over every (h, M)."""
    t_min = system.requirement().t_min
    first_h = int(math.floor(t_min / system.block_time))
    worst = ConcavityReport(-math.inf, -math.inf, -1, -1)
    for h in range(first_h, system.num_blocks):
        try:
            segment = _Segment(system, h, t_min, objective, points)
        except SegmentInfeasible:
            continue
        N_t = system.num_blocks - h
        for M in range(1, N_t + 1):
            rates = segment.batch(segment.grid, allocate_blocks(N_t, M))
            second = float(np.max(np.diff(rates, n=2))) if rates.size > 2 else -math.inf
            if second > worst.max_second_difference:
                worst = ConcavityReport(second, second / max(float(np.max(np.abs(rates))), 1e-300), h, M)
    if worst.max_second_difference > 1e-9:
        LOGGER.warning(
            "[optimize][concavity] max_second_difference=%.3e relative=%.3e h=%s M=%s",
            worst.max_second_difference, worst.max_relative, worst.worst_h, worst.worst_M,
        )
    return worst
