from typing import Optional, Sequence, Tuple


class ScenarioError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class PlanError(ValueError):
    pass


class NotPositiveSemidefinite(ValueError):
    pass


class DegenerateGeometry(ValueError):
    pass


class DegenerateBeam(ValueError):
    pass


class SensingTooCoarse(ValueError):
    """R_hat = beta*R - R_r has a negative eigenvalue beyond tolerance."""


class SegmentInfeasible(ValueError):
    pass


class SizeLimitExceeded(ValueError):
    pass


class InfeasibleSensing(RuntimeError):
    def __init__(self, binding_user: int, required_time: float, horizon: float):
        super().__init__(
            f"sensing requirement of user {binding_user} needs T_l={required_time:.6f} us "
            f"but the subframe holds {horizon:.6f} us"
        )
        self.binding_user = binding_user
        self.required_time = required_time
        self.horizon = horizon


class ValidationBreach(RuntimeError):
    def __init__(self, failures: Sequence[Tuple[int, int]], tolerance: float, detail: Optional[str] = None):
        pairs = ", ".join(f"(k={k}, n={n})" for k, n in failures)
        message = f"relative SINR error above {tolerance:.0%} at {pairs}"
        if detail:
            message = f"{message}; {detail}"
        super().__init__(message)
        self.failures = list(failures)
        self.tolerance = tolerance
