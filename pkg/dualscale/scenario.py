import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from dualscale.channel import TemporalModel, UserGeometry, doppler_product
from dualscale.config import read_json_object
from dualscale.errors import ScenarioError
from dualscale.estimation import PilotConfig
from dualscale.sensing import SensingScene, min_sensing_time, user_large_scale

LOGGER = logging.getLogger(__name__)

DEFAULT_ANGLES_DEG = (-60.0, -30.0, 0.0, 30.0, 60.0)
GAMMA_UNITS = {"rad2": 1.0, "deg2": (math.pi / 180.0) ** 2}
SWEEP_AXES = ("gamma", "M", "Tl")

TOP_LEVEL_KEYS = {
    "L_t", "L_r", "K", "users", "P_t_dbm", "P_m_mw", "sigma_r2", "sigma_m2", "sigma_c2",
    "T_s_us", "M_b", "M_m", "N", "G", "gamma", "gamma_unit", "temporal", "carrier_ghz",
    "quad_order", "seed", "calibration",
}
USER_KEYS = {"theta_deg", "delta_theta_deg", "beta", "alpha_mag2", "gamma", "speed_mps", "temporal"}
TEMPORAL_KEYS = {"kind", "rho_1", "f_d_max_Tb"}
CALIBRATION_KEYS = {"gamma", "blocks"}


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if not mw > 0:
        raise ValueError(f"power must be positive, got {mw}")
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class UserSpec:
    theta_deg: float
    delta_theta_deg: float
    beta: float
    alpha_mag2: float
    gamma: float  # rad^2
    temporal: TemporalModel

    @property
    def geometry(self) -> UserGeometry:
        return UserGeometry(theta=math.radians(self.theta_deg), delta_theta=math.radians(self.delta_theta_deg), beta=self.beta)


@dataclass(frozen=True)
class Scenario:
    L_t: int
    L_r: int
    users: Tuple[UserSpec, ...]
    P_t_mw: float
    P_m_mw: float
    sigma_r2: float
    sigma_m2: float
    sigma_c2: float
    T_s_us: float
    M_b: int
    M_m: int
    N: int
    G: float
    quad_order: int = 64
    seed: int = 0
    gamma_unit: str = "rad2"

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def block_time(self) -> float:
        return self.M_b * self.T_s_us

    @property
    def pilot_time(self) -> float:
        return self.M_m * self.T_s_us

    @property
    def powers(self) -> Tuple[float, ...]:
        return tuple(self.P_t_mw / self.K for _ in self.users)

    @property
    def gammas(self) -> Tuple[float, ...]:
        return tuple(u.gamma for u in self.users)

    @property
    def pilot(self) -> PilotConfig:
        return PilotConfig(M_m=self.M_m, P_m=self.P_m_mw, sigma_m2=self.sigma_m2)

    def scene_for(self, k: int) -> SensingScene:
        return SensingScene(alpha=complex(math.sqrt(self.users[k].alpha_mag2)), G=self.G, L_r=self.L_r, sigma_r2=self.sigma_r2)

    def with_gamma(self, gamma_rad2: float) -> "Scenario":
        if not gamma_rad2 > 0:
            raise ScenarioError("gamma", f"must be positive, got {gamma_rad2}")
        return replace(self, users=tuple(replace(u, gamma=gamma_rad2) for u in self.users))


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: Tuple[float, ...]
    fixed_M: Tuple[int, ...] = (1, 7, 20)

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ScenarioError("axis", f"must be one of {', '.join(SWEEP_AXES)}, got {self.axis!r}")
        if not self.values:
            raise ScenarioError("values", "must not be empty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ScenarioError("values", "must be strictly increasing")
        if self.axis in ("M", "Tl") and any(float(v) != int(v) or v < (1 if self.axis == "M" else 0) for v in self.values):
            raise ScenarioError("values", f"{self.axis} axis takes non-negative whole block counts")


def _reject_unknown(doc: Dict[str, Any], allowed, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ScenarioError(f"{where}{unknown[0]}", "unknown key")


def _number(doc: Dict[str, Any], key: str, default, where: str = "") -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}{key}", f"expected a finite number, got {value!r}")
    return float(value)


def _positive(doc: Dict[str, Any], key: str, default, where: str = "") -> float:
    value = _number(doc, key, default, where)
    if not value > 0:
        raise ScenarioError(f"{where}{key}", f"must be positive, got {value}")
    return value


def _count(doc: Dict[str, Any], key: str, default, where: str = "", minimum: int = 1) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ScenarioError(f"{where}{key}", f"expected an integer >= {minimum}, got {value!r}")
    return value


def _temporal(doc: Any, where: str) -> TemporalModel:
    if not isinstance(doc, dict):
        raise ScenarioError(where.rstrip("."), "must be an object")
    _reject_unknown(doc, TEMPORAL_KEYS, where)
    kind = doc.get("kind", "exponential")
    try:
        if kind == "exponential":
            if "f_d_max_Tb" in doc:
                raise ScenarioError(f"{where}f_d_max_Tb", "not valid for the exponential model")
            return TemporalModel.exponential(_number(doc, "rho_1", 0.98, where))
        if kind == "jakes":
            if "rho_1" in doc:
                raise ScenarioError(f"{where}rho_1", "not valid for the jakes model")
            return TemporalModel.jakes(_number(doc, "f_d_max_Tb", 0.0, where))
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}kind", str(exc))
    raise ScenarioError(f"{where}kind", f"expected 'exponential' or 'jakes', got {kind!r}")


def build_scenario(doc: Dict[str, Any]) -> Scenario:
    """Apply defaults and validation to a scenario document."""
    _reject_unknown(doc, TOP_LEVEL_KEYS, "")
    L_t = _count(doc, "L_t", 8)
    L_r = _count(doc, "L_r", 8)
    T_s = _positive(doc, "T_s_us", 1.0)
    M_b = _count(doc, "M_b", 70)
    M_m = _count(doc, "M_m", 9)
    N = _count(doc, "N", 35)
    G = _positive(doc, "G", 1e3)
    quad_order = _count(doc, "quad_order", 64, minimum=8)
    seed = _count(doc, "seed", 0, minimum=0)
    unit = doc.get("gamma_unit", "rad2")
    if unit not in GAMMA_UNITS:
        raise ScenarioError("gamma_unit", f"expected 'rad2' or 'deg2', got {unit!r}")
    to_rad2 = GAMMA_UNITS[unit]
    shared_gamma = _positive(doc, "gamma", 0.5)
    shared_temporal = _temporal(doc.get("temporal", {}), "temporal.")
    carrier_ghz = doc.get("carrier_ghz")
    if carrier_ghz is not None:
        carrier_ghz = _positive(doc, "carrier_ghz", None)

    raw_users = doc.get("users")
    if raw_users is None:
        K = _count(doc, "K", len(DEFAULT_ANGLES_DEG))
        angles = DEFAULT_ANGLES_DEG if K == len(DEFAULT_ANGLES_DEG) else tuple(np.linspace(-60.0, 60.0, K)) if K > 1 else (0.0,)
        raw_users = [{"theta_deg": float(a)} for a in angles]
    elif "K" in doc:
        raise ScenarioError("K", "give either K or users, not both")
    if not isinstance(raw_users, list) or not raw_users:
        raise ScenarioError("users", "must be a non-empty list")

    users = []
    block_time_s = M_b * T_s * 1e-6
    for k, raw in enumerate(raw_users):
        where = f"users[{k}]."
        if not isinstance(raw, dict):
            raise ScenarioError(f"users[{k}]", "must be an object")
        _reject_unknown(raw, USER_KEYS, where)
        if "theta_deg" not in raw:
            raise ScenarioError(f"{where}theta_deg", "is required")
        theta = _number(raw, "theta_deg", None, where)
        if not abs(theta) < 90.0:
            raise ScenarioError(f"{where}theta_deg", f"must satisfy |theta| < 90, got {theta}")
        temporal = shared_temporal
        if "temporal" in raw and "speed_mps" in raw:
            raise ScenarioError(f"{where}speed_mps", "give either speed_mps or temporal, not both")
        if "temporal" in raw:
            temporal = _temporal(raw["temporal"], f"{where}temporal.")
        elif "speed_mps" in raw:
            if carrier_ghz is None:
                raise ScenarioError("carrier_ghz", "required when a user sets speed_mps")
            speed = _number(raw, "speed_mps", None, where)
            if speed < 0:
                raise ScenarioError(f"{where}speed_mps", f"must be non-negative, got {speed}")
            temporal = TemporalModel.jakes(doppler_product(speed, carrier_ghz * 1e9, block_time_s))
        users.append(
            UserSpec(
                theta_deg=theta,
                delta_theta_deg=_positive(raw, "delta_theta_deg", 1.0, where),
                beta=_positive(raw, "beta", 1.0, where),
                alpha_mag2=_positive(raw, "alpha_mag2", 1.0, where),
                gamma=_positive(raw, "gamma", shared_gamma, where) * to_rad2,
                temporal=temporal,
            )
        )

    P_t = dbm_to_mw(_number(doc, "P_t_dbm", 23.0))
    P_m = doc.get("P_m_mw")
    P_m = P_t / len(users) if P_m is None else _positive(doc, "P_m_mw", None)
    sigma_r2 = doc.get("sigma_r2")
    calibration = doc.get("calibration")
    if sigma_r2 is not None and calibration is not None:
        raise ScenarioError("calibration", "give either sigma_r2 or calibration, not both")
    scenario = Scenario(
        L_t=L_t,
        L_r=L_r,
        users=tuple(users),
        P_t_mw=P_t,
        P_m_mw=P_m,
        sigma_r2=default_sigma_r2() if sigma_r2 is None else _positive(doc, "sigma_r2", None),
        sigma_m2=_positive(doc, "sigma_m2", 1.0),
        sigma_c2=_positive(doc, "sigma_c2", 1.0),
        T_s_us=T_s,
        M_b=M_b,
        M_m=M_m,
        N=N,
        G=G,
        quad_order=quad_order,
        seed=seed,
        gamma_unit=unit,
    )
    if calibration is not None:
        if not isinstance(calibration, dict):
            raise ScenarioError("calibration", "must be an object")
        _reject_unknown(calibration, CALIBRATION_KEYS, "calibration.")
        scenario = calibrate_sigma_r2(
            scenario,
            gamma_rad2=_positive(calibration, "gamma", 0.5, "calibration."),
            blocks=_positive(calibration, "blocks", 3.5, "calibration."),
        )
    return scenario


def calibrate_sigma_r2(scenario: Scenario, gamma_rad2: float = 0.5, blocks: float = 3.5) -> Scenario:
    """Rescale sigma_r2 so that T_l^min at `gamma_rad2` equals `blocks` block durations.

    Every user's CRB coefficient is proportional to sigma_r2, and so are both the
    CRB-driven and the PSD-driven sensing times, so one reference evaluation at
    sigma_r2 = 1 fixes the constant.
    """
    reference = replace(scenario, sigma_r2=1.0)
    users = [
        user_large_scale(u.geometry, reference.scene_for(k), reference.L_t, reference.quad_order)
        for k, u in enumerate(reference.users)
    ]
    requirement = min_sensing_time(users, [gamma_rad2] * len(users), reference.block_time)
    sigma_r2 = blocks * reference.block_time / requirement.t_min
    LOGGER.info(
        "[scenario][calibration] gamma_rad2=%s blocks=%s reference_t_min_us=%.9g sigma_r2=%.9g",
        gamma_rad2, blocks, requirement.t_min, sigma_r2,
    )
    return replace(scenario, sigma_r2=sigma_r2)


@lru_cache(maxsize=None)
def default_sigma_r2() -> float:
    """sigma_r2 used whenever a document sets neither sigma_r2 nor calibration.

    Fixed once from the default geometry (five users at -60..60 deg, G = 1e3,
    L_t = L_r = 8, unit reflection, 1 deg spread) so that T_l^min at
    Gamma = 0.5 rad^2 is 3.5 blocks. Other scenarios keep this noise level, so
    their own G, L_r and alpha_mag2 move T_l^min.
    """
    reference = build_scenario({"sigma_r2": 1.0})
    return calibrate_sigma_r2(reference, gamma_rad2=0.5, blocks=3.5).sigma_r2


def default_scenario() -> Scenario:
    return build_scenario({})


def load_scenario(path: Optional[Union[str, Path]]) -> Scenario:
    if path is None:
        return default_scenario()
    return build_scenario(read_json_object(path))


def parse_values(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ScenarioError("values", f"expected a comma-separated list of numbers, got {text!r}")


def parse_counts(text: str, field: str) -> Tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ScenarioError(field, f"expected a comma-separated list of integers, got {text!r}")


def gamma_in_rad2(value: float, unit: str) -> float:
    return value * GAMMA_UNITS[unit]

