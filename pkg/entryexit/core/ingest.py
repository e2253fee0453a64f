"""
Balance functions from particle samples produced elsewhere, e.g. by a flow solver.

Only the particle and the flow right next to the manifold are known, so the NILE integrand comes from a
measured n^T A n column or, failing that, from a model flow evaluated at the particle projected onto the
manifold. Samples outside the region gate don't contribute.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from entryexit import DEFAULT_CHI
from entryexit.config import EntryExitConfig
from entryexit.core.balance import nile_point, series_gated
from entryexit.core.dynsys import integrate, project_to_manifold
from entryexit.core.exits import find_exit, predict_exit
from entryexit.core.flow_model import FlowModel
from entryexit.core.models import (
    BalanceKind,
    BalanceSeries,
    FlowSystem,
    ManifoldSpec,
    NeighbourhoodSpec,
)
from entryexit.exceptions import (
    InvalidInputException,
    NoDataException,
    NoSignalException,
    ParseException,
)
from entryexit.io import read_frame, write_frame, write_json
from entryexit.utils.constant import BalanceMethod, Extrapolation, NileForm, QuadratureRule
from entryexit.utils.entities import TrajectorySample
from entryexit.utils.helpers import data_lines

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DEGREES = {Extrapolation.LINEAR: 1, Extrapolation.QUADRATIC: 2}


class IngestConfig:
    """
    Data Class for the manifold, region gate and extrapolation settings of an ingestion run
    """

    def __init__(
        self,
        manifold: ManifoldSpec,
        gate: NeighbourhoodSpec,
        t0: Optional[float] = None,
        extrapolation: Optional[str] = None,
        extrapolation_window: Optional[int] = None,
    ):
        """
        :param t0: samples before t0 are dropped, defaults to the first sample time
        :param extrapolation: none, linear or quadratic, defaults to EXTRAPOLATION
        :param extrapolation_window: trailing samples the extrapolation is fitted on, at least 3
        """
        extrapolation = EntryExitConfig.EXTRAPOLATION if extrapolation is None else extrapolation
        window = EntryExitConfig.EXTRAPOLATION_WINDOW if extrapolation_window is None else extrapolation_window
        if extrapolation not in (Extrapolation.NONE, Extrapolation.LINEAR, Extrapolation.QUADRATIC):
            raise InvalidInputException(f"Unknown extrapolation {extrapolation!r}")
        if window < 3:
            raise InvalidInputException(f"Extrapolation window must be at least 3, got {window}")
        self.manifold = manifold
        self.gate = gate
        self.t0 = t0
        self.extrapolation = extrapolation
        self.extrapolation_window = window

    def __repr__(self):
        return f"IngestConfig: {self.gate} extrapolation={self.extrapolation}[{self.extrapolation_window}]"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gate": self.gate.to_dict(),
            "t0": self.t0,
            "extrapolation": self.extrapolation,
            "extrapolation_window": self.extrapolation_window,
        }


def _header(columns: List[str], line_number: int) -> Tuple[int, bool]:
    dim = len(columns) - 2
    has_rate = columns[-1] == "ann"
    if has_rate:
        dim -= 1
    expected = ["t"] + [f"z{i + 1}" for i in range(dim)] + ["vn"] + (["ann"] if has_rate else [])
    if dim < 1 or columns != expected:
        raise ParseException(f"Expect header {','.join(expected)}, got {','.join(columns)}", line_number)
    return dim, has_rate


def load_samples(path: PathLike, fmt: str = "csv") -> List[TrajectorySample]:
    """
    read samples in the ``t,z1,...,zd,vn[,ann]`` format, sorted by time.

    Lines starting with # are comments. A repeated time stamp keeps its last occurrence. A blank ann cell
    leaves the normal rate to a model flow.
    """
    if fmt != "csv":
        raise InvalidInputException(f"Unsupported sample format {fmt!r}")
    path = Path(path)
    lines = data_lines(path.read_text())
    if len(lines) < 2:
        raise NoDataException(f"No data rows in {path}")
    header_line, header = lines[0]
    columns = [c.strip() for c in header.split(",")]
    dim, has_rate = _header(columns, header_line)
    for number, content in lines[1:]:
        if content.count(",") != len(columns) - 1:
            raise ParseException(f"Expect {len(columns)} fields, got {content.count(',') + 1}", number)

    raw = pd.read_csv(path, comment="#", dtype=str, skip_blank_lines=True, skipinitialspace=True)
    frame = raw.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    required = columns[:-1] if has_rate else columns
    bad = ~np.isfinite(frame[required].to_numpy(dtype=float)).all(axis=1)
    if has_rate:
        # a blank rate is allowed, anything else has to parse
        blank = raw["ann"].isna() | (raw["ann"].fillna("").str.strip() == "")
        bad |= frame["ann"].isna().to_numpy() & ~blank.to_numpy()
    if bad.any():
        row = int(np.argmax(bad))
        raise ParseException(f"Malformed value in {','.join(raw.iloc[row].fillna(''))}", lines[row + 1][0])

    frame = frame.sort_values("t", kind="mergesort")
    collapsed = frame.drop_duplicates("t", keep="last")
    if duplicates := len(frame) - len(collapsed):
        logger.warning("%d duplicate time stamp(s) in %s collapsed to their last occurrence", duplicates, path)

    positions = collapsed[[f"z{i + 1}" for i in range(dim)]].to_numpy(dtype=float)
    samples = []
    for i, record in enumerate(collapsed.itertuples(index=False)):
        rate = getattr(record, "ann", None) if has_rate else None
        samples.append(
            TrajectorySample(
                float(record.t),
                positions[i],
                float(record.vn),
                None if rate is None or np.isnan(rate) else float(rate),
            )
        )
    return samples


def ingest_balance(
    samples: List[TrajectorySample],
    config: IngestConfig,
    flow: Optional[FlowSystem] = None,
) -> Tuple[BalanceSeries, BalanceSeries]:
    """
    F_sigma and F_v on the sample grid, both with trapezoid quadrature.

    A measured normal rate wins over the model flow, which is only evaluated at in-gate samples that lack one.
    """
    if config.t0 is not None:
        samples = [s for s in samples if s.t >= config.t0]
    if len(samples) < 2:
        raise NoDataException("At least 2 samples after t0 are required")
    times = np.array([s.t for s in samples])
    positions = np.array([s.position for s in samples])
    in_gate = config.gate.contains(positions)
    if int(np.sum(in_gate)) < 3:
        raise NoSignalException(f"{int(np.sum(in_gate))} sample(s) inside {config.gate}, need at least 3")

    rates = np.zeros(len(samples))
    for i, sample in enumerate(samples):
        if not in_gate[i]:
            continue
        if sample.normal_rate is not None:
            rates[i] = sample.normal_rate
        elif flow is None:
            raise InvalidInputException(f"Sample at t={sample.t} has no normal rate and no flow is given")
        else:
            projected = project_to_manifold(config.manifold, sample.position)
            rates[i] = nile_point(flow, config.manifold, projected, sample.t)

    z0 = positions[0]
    sigma = series_gated(
        times, rates, in_gate, BalanceKind.nile(NileForm.GEOMETRIC), z0, QuadratureRule.TRAPEZOID
    )
    velocity = series_gated(
        times,
        [s.normal_velocity for s in samples],
        in_gate,
        BalanceKind(BalanceMethod.VELOCITY),
        z0,
        QuadratureRule.TRAPEZOID,
    )
    return sigma, velocity


def predict_next_zero(
    series: BalanceSeries,
    extrapolation: Optional[str] = None,
    window: Optional[int] = None,
) -> Optional[float]:
    """
    the next zero of a series past its last sample, by a least-squares polynomial through the trailing window.

    A gated series is fitted on its in-gate samples only.

    :return: the smallest real root after the last sample time, None when there is none or the fit is
        rank-deficient
    """
    extrapolation = EntryExitConfig.EXTRAPOLATION if extrapolation is None else extrapolation
    window = EntryExitConfig.EXTRAPOLATION_WINDOW if window is None else window
    if extrapolation == Extrapolation.NONE:
        return None
    if extrapolation not in DEGREES:
        raise InvalidInputException(f"Unknown extrapolation {extrapolation!r}")
    if window < 3 or window > len(series):
        raise InvalidInputException(f"Window {window} doesn't fit a series of {len(series)} samples")
    degree = DEGREES[extrapolation]
    times, values = series.times, series.values
    if series.in_gate is not None:
        # samples outside the gate hold F constant and say nothing about the trend
        times, values = times[series.in_gate], values[series.in_gate]
        if window > len(times):
            logger.warning("Only %d in-gate samples for an extrapolation window of %d", len(times), window)
            return None
    times, values = times[-window:], values[-window:]
    fit, (_, rank, _, _) = np.polynomial.Polynomial.fit(times, values, degree, full=True)
    if rank < degree + 1:
        logger.warning("Rank-deficient extrapolation fit, no prediction")
        return None
    t_last = float(times[-1])
    roots = fit.roots()
    real = roots[np.abs(roots.imag) <= 1e-9 * (1 + np.abs(roots.real))].real
    ahead = np.sort(real[real > t_last])
    return float(ahead[0]) if ahead.size else None


def first_zero(series: BalanceSeries) -> Optional[float]:
    prediction = find_exit(series)
    return prediction.T if prediction.found else None


def report_frame(sigma: BalanceSeries, velocity: BalanceSeries) -> pd.DataFrame:
    return pd.DataFrame(
        {"t": sigma.times, "F_sigma": sigma.values, "F_v": velocity.values, "in_gate": sigma.in_gate}
    )


PLOT_SCRIPT = '''"""
Plot of the balance functions F_sigma and F_v from {csv_name}.
"""
import matplotlib.pyplot as plt
import pandas as pd

frame = pd.read_csv("{csv_name}")
fig, ax = plt.subplots()
ax.plot(frame["t"], frame["F_sigma"], label="F_sigma")
ax.plot(frame["t"], frame["F_v"], label="F_v")
ax.axhline(0.0, color="black", linewidth=0.8)
ax.set_xlabel("t")
ax.set_ylabel("F")
ax.legend()
fig.savefig("{png_name}", dpi=150)
'''


def report(
    sigma: BalanceSeries,
    velocity: BalanceSeries,
    predicted_zero: Optional[float],
    out_dir: PathLike,
    config: Optional[IngestConfig] = None,
    stem: str = "report",
) -> Dict[str, Path]:
    """
    write ``<stem>.csv`` (t,F_sigma,F_v,in_gate), ``<stem>.json`` with the first zeros and ``<stem>_plot.py``.
    """
    if not len(sigma):
        raise InvalidInputException("Nothing to report on an empty series")
    out_dir = Path(out_dir)
    csv_path = write_frame(report_frame(sigma, velocity), out_dir / f"{stem}.csv")
    summary = {
        "first_zero_sigma": first_zero(sigma),
        "first_zero_v": first_zero(velocity),
        "predicted_zero": predicted_zero,
        "gate": None if config is None else config.gate.to_dict(),
        "config": None if config is None else config.to_dict(),
    }
    json_path = write_json(summary, out_dir / f"{stem}.json")
    plot_path = out_dir / f"{stem}_plot.py"
    plot_path.write_text(PLOT_SCRIPT.format(csv_name=csv_path.name, png_name=f"{stem}.png"))
    return {"csv": csv_path, "json": json_path, "plot": plot_path}


def load_report(path: PathLike) -> pd.DataFrame:
    """
    read a report CSV back, floats bit-identical to what was written.
    """
    frame = read_frame(path)
    expected = ["t", "F_sigma", "F_v", "in_gate"]
    if list(frame.columns) != expected:
        raise ParseException(f"Expect header {','.join(expected)}, got {','.join(frame.columns)}", 1)
    return frame


def make_fixture(
    model: FlowModel,
    chi: float = DEFAULT_CHI,
    samples: int = 5000,
    span: Optional[float] = None,
    z0=None,
    t0: float = 0.0,
) -> pd.DataFrame:
    """
    synthetic samples of a particle released a distance chi off the manifold from the entry point.

    Columns t, z1..zd, vn (velocity along the unit normal) and ann (n^T A n at the projected position). The
    span defaults to twice the NILE exit time of the entry point.
    """
    if samples < 3:
        raise InvalidInputException(f"At least 3 samples are required, got {samples}")
    entry = np.asarray(model.entry if z0 is None else z0, dtype=float)
    start = model.offset_entry(entry, chi)
    if span is None:
        series, prediction = predict_exit(model, BalanceKind.nile(), z0=entry, t0=t0)
        span = 2 * (prediction.T - t0) if prediction.found else float(series.times[-1] - t0)
    trajectory = integrate(model.flow, start, t0, t0 + span)
    if trajectory.domain_exit is not None:
        logger.warning("Particle left the flow domain at t=%.6g, fixture truncated", trajectory.t_end)
    times = np.linspace(t0, trajectory.t_end, samples)
    positions = trajectory(times)
    manifold = model.manifold
    normal = manifold.unit_normal
    frame = pd.DataFrame({"t": times})
    for i in range(positions.shape[1]):
        frame[f"z{i + 1}"] = positions[:, i]
    frame["vn"] = [float(normal @ model.flow.velocity(p, t)) for p, t in zip(positions, times)]
    frame["ann"] = [
        nile_point(model.flow, manifold, project_to_manifold(manifold, p), t) for p, t in zip(positions, times)
    ]
    return frame


def write_fixture(frame: pd.DataFrame, path: PathLike, comment: Optional[str] = None) -> Path:
    path = write_frame(frame, path)
    if comment:
        path.write_text(f"# {comment}\n" + path.read_text())
    return path
