"""
File emission. Floats are written in their shortest round-trip form so identical runs give identical bytes.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from entryexit.core.models import BalanceSeries, ExitPrediction
from entryexit.core.sweep import SweepResult
from entryexit.utils.helpers import format_float

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        # JSON has no inf/nan
        return value if np.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """
    CSV with floats in shortest round-trip form, booleans as true/false.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = frame.copy()
    for column in text.columns:
        if pd.api.types.is_bool_dtype(text[column]):
            text[column] = text[column].map(lambda v: "true" if v else "false")
        elif pd.api.types.is_float_dtype(text[column]):
            text[column] = text[column].map(format_float)
    text.to_csv(path, index=False, lineterminator="\n")
    return path


def read_frame(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_config(config: Dict[str, Any], out_dir: PathLike) -> Path:
    return write_json(config, Path(out_dir) / "config.json")


def series_frame(series: BalanceSeries) -> pd.DataFrame:
    frame = pd.DataFrame({"t": series.times, "F": series.values})
    if series.rates is not None:
        frame["dF_dt"] = series.rates
    if series.in_gate is not None:
        frame["in_gate"] = series.in_gate
    return frame


def write_series(series: BalanceSeries, path: PathLike) -> Path:
    return write_frame(series_frame(series), path)


def write_exit(prediction: ExitPrediction, series: BalanceSeries, path: PathLike, **extra: Any) -> Path:
    payload = prediction.to_dict()
    payload["kind"] = str(series.kind)
    payload["diagnostics"] = series.diagnostics
    payload.update(extra)
    return write_json(payload, path)


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    """
    param, T, exit_1..exit_d, dF_dt, degenerate and the error of failed rows.
    """
    dim = max((len(row.exit_state) for row in result.rows if row.exit_state is not None), default=0)
    records: List[Dict[str, Any]] = []
    for row in result.rows:
        record: Dict[str, Any] = {"param": row.param, "T": np.nan if row.T is None else row.T}
        for i in range(dim):
            record[f"exit_{i + 1}"] = np.nan if row.exit_state is None else row.exit_state[i]
        record["dF_dt"] = np.nan if row.dF_dt is None else row.dF_dt
        record["degenerate"] = "" if row.degenerate is None else ("true" if row.degenerate else "false")
        record["error"] = row.error or ""
        records.append(record)
    return pd.DataFrame.from_records(records)


def write_sweep(result: SweepResult, out_dir: PathLike, config: Optional[Dict[str, Any]] = None) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    fit = None if result.fit is None else result.fit._asdict()
    return {
        "csv": write_frame(sweep_frame(result), out_dir / "sweep.csv"),
        "json": write_json({"fit": fit, "config": config or result.config}, out_dir / "sweep.json"),
    }
