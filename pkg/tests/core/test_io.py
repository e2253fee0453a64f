import json

import numpy as np
import pandas as pd
import pytest

from entryexit.core.models import BalanceKind, BalanceSeries, ExitPrediction
from entryexit.core.sweep import SweepResult
from entryexit.io import read_frame, series_frame, sweep_frame, write_exit, write_frame, write_json, write_sweep
from entryexit.utils.entities import LinearFit, SweepRow
from entryexit.utils.helpers import data_lines, format_float, linspace_values


def test_write_frame_round_trips_floats(tmp_path):
    rng = np.random.default_rng(13)
    values = np.concatenate([rng.standard_normal(200) * 10.0 ** rng.integers(-300, 300, 200), [0.1, 1 / 3, -0.0]])
    path = write_frame(pd.DataFrame({"x": values, "flag": values > 0}), tmp_path / "frame.csv")
    frame = read_frame(path)
    assert np.array_equal(frame["x"].to_numpy(), values)
    assert np.array_equal(frame["flag"].to_numpy(), values > 0)
    assert path.read_text().splitlines()[0] == "x,flag"


def test_write_frame_is_deterministic(tmp_path):
    frame = pd.DataFrame({"t": np.linspace(0, 1, 7), "F": np.sin(np.linspace(0, 1, 7))})
    first = write_frame(frame, tmp_path / "a.csv").read_bytes()
    second = write_frame(frame, tmp_path / "b.csv").read_bytes()
    assert first == second


def test_write_json_maps_numpy_and_non_finite(tmp_path):
    payload = {
        "array": np.array([1.0, np.nan]),
        "flag": np.bool_(True),
        "count": np.int64(3),
        "value": np.float64(0.25),
        "nested": {"inf": float("inf"), "tuple": (1, 2)},
    }
    loaded = json.loads(write_json(payload, tmp_path / "out" / "payload.json").read_text())
    assert loaded == {
        "array": [1.0, None],
        "flag": True,
        "count": 3,
        "value": 0.25,
        "nested": {"inf": None, "tuple": [1, 2]},
    }


def test_write_exit(tmp_path):
    times = np.linspace(0, 4, 5)
    series = BalanceSeries(times, times**2 / 2 - times, BalanceKind.nile(), 0.0, [-1.0, 0.0], rates=times - 1)
    series.diagnostics["span"] = 4.0
    prediction = ExitPrediction(True, 2.0, 1.0, False, (1.0, 3.0), np.array([1.0, 0.0]))
    payload = json.loads(write_exit(prediction, series, tmp_path / "exit.json", flow="solid-body").read_text())
    assert payload["T"] == 2.0
    assert payload["exit"] == [1.0, 0.0]
    assert payload["bracket"] == [1.0, 3.0]
    assert payload["kind"] == "nile:geometric"
    assert payload["diagnostics"] == {"span": 4.0}
    assert payload["flow"] == "solid-body"


def test_series_frame_columns():
    times = np.linspace(0, 1, 3)
    gated = BalanceSeries(times, times, BalanceKind.nile(), 0.0, [0.0], rates=np.ones(3), in_gate=[True] * 3)
    assert list(series_frame(gated).columns) == ["t", "F", "dF_dt", "in_gate"]
    plain = BalanceSeries(times, times, BalanceKind.ftle(), 0.0, [0.0])
    assert list(series_frame(plain).columns) == ["t", "F"]


def test_sweep_frame_and_files(tmp_path):
    rows = [
        SweepRow(0.5, 1.0, (0.5, 0.0), 1.0, False),
        SweepRow(0.0, None, None, None, None, error="alpha must be positive"),
    ]
    result = SweepResult("b", rows, LinearFit(2.0, 0.0, 1.0), {"flow": "solid-body"})
    frame = sweep_frame(result)
    assert list(frame.columns) == ["param", "T", "exit_1", "exit_2", "dF_dt", "degenerate", "error"]
    assert frame["degenerate"].tolist() == ["false", ""]
    files = write_sweep(result, tmp_path)
    assert json.loads(files["json"].read_text()) == {
        "fit": {"slope": 2.0, "intercept": 0.0, "r2": 1.0},
        "config": {"flow": "solid-body"},
    }
    lines = files["csv"].read_text().splitlines()
    assert lines[0] == "param,T,exit_1,exit_2,dF_dt,degenerate,error"
    assert lines[1].endswith(",false,")
    assert lines[2] == "0.0,nan,nan,nan,nan,,alpha must be positive"


def test_helpers():
    assert format_float(0.1) == "0.1"
    assert format_float(np.float64(1e-300)) == "1e-300"
    assert format_float(np.nan) == "nan"
    assert data_lines("# c\n\nt,z1 # header\n 1,2 \n") == [(3, "t,z1"), (4, "1,2")]
    assert linspace_values(0, 1, 3) == [0.0, 0.5, 1.0]
    assert linspace_values(2, 5, 1) == [2.0]
    with pytest.raises(ValueError):
        linspace_values(0, 1, 0)
