import json
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from dualscale.errors import ScenarioError

_RUNTIME_CONFIG: Dict[str, Any] = {}


def set_runtime_config(overrides: Dict[str, Any]) -> None:
    if not isinstance(overrides, dict):
        raise TypeError("overrides must be a dict")
    _RUNTIME_CONFIG.update(overrides)


def clear_runtime_config() -> None:
    _RUNTIME_CONFIG.clear()


def get_setting(key: str, default=None):
    if key in _RUNTIME_CONFIG:
        value = _RUNTIME_CONFIG.get(key)
        return default if value is None else value
    v = os.environ.get(key)
    return default if v is None else v


def get_int_setting(key: str, default: int) -> int:
    raw = get_setting(key, default)
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise RuntimeError(f"{key} must be an integer, got {raw!r}")


def worker_count() -> int:
    return max(1, get_int_setting("DUALSCALE_WORKERS", 1))


def map_tasks(fn: Callable, tasks: Sequence, workers: Optional[int] = None, pool: Optional[Executor] = None) -> List:
    """Apply fn to every task and return results in task order.

    An open pool is reused; otherwise a process pool is started for this call
    when more than one worker and task are present.
    """
    if pool is not None and len(tasks) > 1:
        return list(pool.map(fn, tasks))
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, tasks))


def debug_enabled() -> bool:
    return str(get_setting("DUALSCALE_DEBUG", "0")) == "1"


def read_json_object(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("scenario", f"cannot read {path}: {exc}")
    try:
        doc = json.loads(raw) if raw.strip() else {}
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"invalid JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ScenarioError("scenario", "top level must be a JSON object")
    return doc
