import csv
import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from dualscale.config import debug_enabled, map_tasks, worker_count
from dualscale.errors import InfeasibleSensing
from dualscale.montecarlo import breaches, verify_proposition1
from dualscale.numerics import RngStream
from dualscale.optimizer import BaselineKind, SearchResult, allocate_blocks, baseline, optimize
from dualscale.rate import FramePlan, SystemModel, frame_rate
from dualscale.scenario import Scenario, SweepSpec, gamma_in_rad2

LOGGER = logging.getLogger(__name__)

# internal rates are in us * bps/Hz
US_TO_S = 1e-6
VALIDATE_STREAM_ID = 2


def configure_logging():
    logging.basicConfig(level=(logging.DEBUG if debug_enabled() else logging.INFO), format="%(message)s")


def _bit_hz(rate: float) -> float:
    return rate * US_TO_S


def _gap(proposed: float, other: float) -> Optional[float]:
    if not other > 0:
        return None
    return (proposed - other) / other


def _result_dict(result: SearchResult, system: SystemModel, with_trace: bool = True) -> Dict:
    out = {
        "plan": result.plan.as_dict(),
        "rate_bitHz": _bit_hz(result.rate),
        "mean_se_bpsHz": result.rate / (system.num_blocks * system.block_time),
        "T_l_min_us": result.t_min,
        "outer_loops": result.outer_loops,
    }
    if with_trace:
        out["trace"] = [e.as_dict() for e in result.trace]
    if result.draw_rates:
        out["draw_rates_bitHz"] = [_bit_hz(r) for r in result.draw_rates]
    return out


def run_optimize(scenario: Scenario, workers: Optional[int] = None) -> Dict:
    system = SystemModel.from_scenario(scenario)
    result = optimize(system, workers=workers)
    return _result_dict(result, system)


def run_baselines(scenario: Scenario, workers: Optional[int] = None) -> Dict:
    system = SystemModel.from_scenario(scenario)
    proposed = optimize(system, workers=workers)
    out = {"proposed": _result_dict(proposed, system, with_trace=False)}
    gaps = {}
    for kind in BaselineKind:
        result = baseline(system, kind, workers=workers)
        out[kind.value] = _result_dict(result, system, with_trace=False)
        gaps[kind.value] = _gap(proposed.rate, result.rate)
        LOGGER.info("[jobs][baselines] kind=%s rate_bitHz=%.6f gap=%s", kind.value, _bit_hz(result.rate), gaps[kind.value])
    out["relative_gap"] = gaps
    return out


def run_validate(scenario: Scenario, samples: int, workers: Optional[int] = None) -> Dict:
    system = SystemModel.from_scenario(scenario)
    plan = optimize(system, workers=workers).plan
    reports = verify_proposition1(system, plan, samples, RngStream(scenario.seed, VALIDATE_STREAM_ID), workers)
    failures = breaches(reports)
    return {
        "plan": plan.as_dict(),
        "samples": samples,
        "reports": [r.as_dict() for r in reports],
        "failures": [list(pair) for pair in failures],
        "passed": not failures,
    }


def _gamma_row(task) -> List[Optional[float]]:
    scenario, value = task
    system = SystemModel.from_scenario(scenario.with_gamma(gamma_in_rad2(value, scenario.gamma_unit)))
    try:
        rates = [optimize(system, workers=1).rate]
        rates += [baseline(system, kind, workers=1).rate for kind in BaselineKind]
    except InfeasibleSensing as exc:
        LOGGER.warning("[jobs][sweep] axis=gamma value=%s infeasible binding_user=%s", value, exc.binding_user)
        return [value, None, None, None, None]
    return [value] + [_bit_hz(r) for r in rates]


def _update_rows(scenario: Scenario, values: Sequence[float], workers: Optional[int]) -> List[List[Optional[float]]]:
    system = SystemModel.from_scenario(scenario)
    sensing_time = optimize(system, workers=workers).plan.sensing_time
    h = FramePlan(sensing_time, 1, (1,)).sensing_blocks(system.block_time)
    rows = []
    for value in values:
        M = int(value)
        if M > system.num_blocks - h:
            rows.append([value, None, sensing_time])
            continue
        plan = FramePlan(sensing_time, M, tuple(allocate_blocks(system.num_blocks - h, M)))
        rows.append([value, _bit_hz(frame_rate(plan, system).total_rate), sensing_time])
    return rows


def _sensing_block_rows(scenario: Scenario, values: Sequence[float], fixed_M: Sequence[int]) -> List[List[Optional[float]]]:
    """Rate at T_l = h*T_b for every h on the axis; h*T_b below T_l^min is left empty."""
    system = SystemModel.from_scenario(scenario)
    t_min = system.requirement().t_min
    rows = []
    for value in values:
        h = int(value)
        sensing_time = h * system.block_time
        row: List[Optional[float]] = [value]
        for M in fixed_M:
            if sensing_time < t_min or M > system.num_blocks - h:
                row.append(None)
                continue
            plan = FramePlan(sensing_time, M, tuple(allocate_blocks(system.num_blocks - h, M)))
            row.append(_bit_hz(frame_rate(plan, system).total_rate))
        rows.append(row)
    return rows


def run_sweep(scenario: Scenario, spec: SweepSpec, workers: Optional[int] = None) -> Dict:
    """Rows ordered by axis value; None marks an infeasible cell."""
    workers = worker_count() if workers is None else workers
    if spec.axis == "gamma":
        header = ["axis_value", "proposed", "ssu", "fsu", "rba_mean"]
        rows = map_tasks(_gamma_row, [(scenario, v) for v in spec.values], workers)
    elif spec.axis == "M":
        header = ["axis_value", "rate", "T_l_us"]
        rows = _update_rows(scenario, spec.values, workers)
    else:
        header = ["axis_value"] + [f"rate_M{m}" for m in spec.fixed_M]
        rows = _sensing_block_rows(scenario, spec.values, spec.fixed_M)
    LOGGER.info("[jobs][sweep] axis=%s rows=%s", spec.axis, len(rows))
    return {"header": header, "rows": rows}


def with_seed(scenario: Scenario, seed: Optional[int]) -> Scenario:
    if seed is None:
        return scenario
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return replace(scenario, seed=seed)


def write_json(path: Union[str, Path], payload: Dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Sequence[Optional[float]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(v) for v in row])
