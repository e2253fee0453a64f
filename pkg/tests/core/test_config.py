import concurrent.futures
import os
import random
import time
from unittest.mock import patch

import pytest

from entryexit.config import EntryExitConfig
from entryexit.core.exits import predict_exit
from entryexit.core.flows.solid_body import SolidBodyModel
from entryexit.core.models import BalanceKind
from entryexit.exceptions import ConfigException


@patch.dict(
    os.environ,
    {
        "ENTRYEXIT_GRID_POINTS": "501",
        "ENTRYEXIT_ZERO_TOL": "1e-8",
        "ENTRYEXIT_EXTRAPOLATION": "linear",
    },
)
def test_config():
    assert type(EntryExitConfig.GRID_POINTS) is int
    assert EntryExitConfig.GRID_POINTS == 501

    assert type(EntryExitConfig.ZERO_TOL) is float
    assert EntryExitConfig.ZERO_TOL == 1e-8

    assert type(EntryExitConfig.EXTRAPOLATION) is str
    assert EntryExitConfig.EXTRAPOLATION == "linear"


@patch.dict(os.environ, {"ENTRYEXIT_GRID_POINTS": "many"})
def test_config_unparsable_environment_value():
    with pytest.raises(ConfigException):
        EntryExitConfig.GRID_POINTS


def test_disable_direct_update_config():
    with pytest.raises(ConfigException):
        EntryExitConfig.GRID_POINTS = 501


def test_update_config_using_context_manager():
    with EntryExitConfig(GRID_POINTS="301"):
        assert EntryExitConfig.GRID_POINTS == 301
    assert EntryExitConfig.GRID_POINTS == 2001

    with EntryExitConfig(ODE_TOL=1e-6, SPAN_FACTOR=2):
        assert EntryExitConfig.ODE_TOL == 1e-6
        assert EntryExitConfig.SPAN_FACTOR == 2.0
    assert EntryExitConfig.ODE_TOL == 1e-10
    assert EntryExitConfig.SPAN_FACTOR == 4.0


def test_update_config_context_manager_non_reentrant():
    with pytest.raises(ConfigException):
        with EntryExitConfig(GRID_POINTS=301):
            with EntryExitConfig(GRID_POINTS=401):
                pass


def test_disable_update_unknown_config():
    with pytest.raises(ConfigException):
        with EntryExitConfig(UNKNOWN_KEY="value"):
            pass


@pytest.mark.parametrize(
    "override",
    [{"GRID_POINTS": 50}, {"ZERO_TOL": 0}, {"EXTRAPOLATION": "cubic"}, {"SWEEP_WORKERS": 0}],
)
def test_config_range_checks(override):
    with pytest.raises(ConfigException):
        EntryExitConfig(**override)
    assert EntryExitConfig.GRID_POINTS == 2001


def test_resolved_config():
    with EntryExitConfig(SWEEP_WORKERS=3):
        resolved = EntryExitConfig.resolved()
    assert resolved["SWEEP_WORKERS"] == 3
    assert resolved["MAX_DOUBLINGS"] == 16
    assert set(resolved) == set(EntryExitConfig.items)


def _check_grid_points(grid_points: int):
    # used by test_config_parallel, must be a global function so that it can be pickled between processes
    with EntryExitConfig(GRID_POINTS=grid_points):
        series, _ = predict_exit(SolidBodyModel(), BalanceKind.nile(), span=4.0)
        time.sleep(random.random() * 0.05)
        return len(series)


@pytest.mark.parametrize("pool", ["ThreadPoolExecutor", "ProcessPoolExecutor"])
def test_config_parallel(pool: str):
    executor_class = getattr(concurrent.futures, pool)
    sizes = [101 + 10 * i for i in range(20)]
    with executor_class() as executor:
        futures = [executor.submit(_check_grid_points, size) for size in sizes]
        for i, future in enumerate(futures):
            assert future.result() == sizes[i]
