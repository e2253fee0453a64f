from typing import NamedTuple, Optional, Tuple

import numpy as np


class DomainExit(NamedTuple):
    # time and state of the last step that stayed inside the domain box
    time: float
    state: np.ndarray
    reason: str


class LinearFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


class SweepRow(NamedTuple):
    param: float
    T: Optional[float]
    exit_state: Optional[Tuple[float, ...]]
    dF_dt: Optional[float]
    degenerate: Optional[bool]
    error: Optional[str] = None


class TrajectorySample(NamedTuple):
    t: float
    position: np.ndarray
    normal_velocity: float
    # n^T A n measured at the sample, None when it has to come from a model flow
    normal_rate: Optional[float] = None
