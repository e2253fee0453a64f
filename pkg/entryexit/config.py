import os
import threading
from typing import Any, Callable, Dict, NamedTuple, Optional, Set

from entryexit import (
    DEFAULT_DERIV_TOL,
    DEFAULT_EXTRAPOLATION,
    DEFAULT_EXTRAPOLATION_WINDOW,
    DEFAULT_GRID_POINTS,
    DEFAULT_ODE_TOL,
    DEFAULT_ZERO_TOL,
    MIN_GRID_POINTS,
)
from entryexit.exceptions import ConfigException
from entryexit.utils.constant import Extrapolation

ENV_PREFIX = "ENTRYEXIT_"


class ConfigItem(NamedTuple):
    cast: type
    default: Any
    # returns an error message for an out-of-range value
    check: Optional[Callable[[Any], Optional[str]]] = None


def _positive(value) -> Optional[str]:
    return None if value > 0 else "must be positive"


def _at_least(bound: int) -> Callable[[Any], Optional[str]]:
    return lambda value: None if value >= bound else f"must be at least {bound}"


def _one_of(*choices: str) -> Callable[[Any], Optional[str]]:
    return lambda value: None if value in choices else f"must be one of {', '.join(choices)}"


class _EntryExitConfigLoader:
    """
    Numerical settings: environment variables prefixed ENTRYEXIT_ over built-in defaults, masked per thread by
    ``with EntryExitConfig(KEY=value):``
    """

    items = {
        # absolute and relative local error bound of the adaptive integrator
        "ODE_TOL": ConfigItem(float, DEFAULT_ODE_TOL, _positive),
        # zero tolerance is ZERO_TOL * (1 + max|F|)
        "ZERO_TOL": ConfigItem(float, DEFAULT_ZERO_TOL, _positive),
        # |dF/dt| below this marks a root as degenerate
        "DERIV_TOL": ConfigItem(float, DEFAULT_DERIV_TOL, _positive),
        "GRID_POINTS": ConfigItem(int, DEFAULT_GRID_POINTS, _at_least(MIN_GRID_POINTS)),
        # search span is SPAN_FACTOR times the doubled first sign change of the integrand
        "SPAN_FACTOR": ConfigItem(float, 4.0, _positive),
        # initial probe length for the span estimate, doubled until a sign change shows up
        "PROBE_SPAN": ConfigItem(float, 1.0, _positive),
        "MAX_DOUBLINGS": ConfigItem(int, 16, _at_least(0)),
        "EXTRAPOLATION": ConfigItem(
            str,
            DEFAULT_EXTRAPOLATION,
            _one_of(Extrapolation.NONE, Extrapolation.LINEAR, Extrapolation.QUADRATIC),
        ),
        "EXTRAPOLATION_WINDOW": ConfigItem(int, DEFAULT_EXTRAPOLATION_WINDOW, _at_least(3)),
        # worker threads used by parameter sweeps, rows are always reported in input order
        "SWEEP_WORKERS": ConfigItem(int, 1, _at_least(1)),
    }

    def __init__(self) -> None:
        self._overrides: Dict[int, Dict[str, Any]] = {}
        self._entered: Set[int] = set()

    def __getattr__(self, item: str):
        if item not in self.items:
            return super().__getattribute__(item)
        local = self._overrides.get(threading.get_ident(), {})
        if item in local:
            return local[item]
        env_value = os.environ.get(ENV_PREFIX + item)
        if env_value is None:
            return self.items[item].default
        return self.parse_value(item, env_value)

    def __setattr__(self, key, value) -> None:
        if key in self.items:
            raise ConfigException(
                "EntryExitConfig is read-only. Use context manager to update thread level config."
            )
        super().__setattr__(key, value)

    def __call__(self, **kwargs) -> "_EntryExitConfigLoader":
        # parse everything first so a bad key leaves the thread untouched
        parsed = {}
        for key, value in kwargs.items():
            if key not in self.items:
                raise ConfigException(f"Invalid config key: {key}")
            parsed[key] = self.parse_value(key, value)
        self._overrides.setdefault(threading.get_ident(), {}).update(parsed)
        return self

    def __enter__(self) -> "_EntryExitConfigLoader":
        thread_id = threading.get_ident()
        if thread_id in self._entered:
            raise ConfigException("EntryExitConfig context manager is not reentrant")
        self._entered.add(thread_id)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        thread_id = threading.get_ident()
        self._overrides.pop(thread_id, None)
        self._entered.discard(thread_id)

    def parse_value(self, key: str, value) -> Any:
        """
        cast value to the key's type and check its range.
        """
        item = self.items[key]
        try:
            parsed = item.cast(value.strip() if isinstance(value, str) else value)
        except ValueError as e:
            raise ConfigException(f"{key}: cannot parse {value!r} as {item.cast.__name__}") from e
        if item.check is not None and (problem := item.check(parsed)) is not None:
            raise ConfigException(f"{key} {problem}, got {parsed!r}")
        return parsed

    def resolved(self) -> Dict[str, Any]:
        """
        all config items as seen by the current thread
        """
        return {key: getattr(self, key) for key in self.items}


EntryExitConfig = _EntryExitConfigLoader()
