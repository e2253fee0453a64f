import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import linregress

from entryexit.config import EntryExitConfig
from entryexit.core.exits import predict_exit
from entryexit.core.flows import get_flow_model
from entryexit.core.models import BalanceKind
from entryexit.exceptions import EntryExitException, InvalidInputException
from entryexit.utils.constant import Linearization
from entryexit.utils.entities import LinearFit, SweepRow

logger = logging.getLogger(__name__)


class SweepResult:
    """
    Data Class for one row per parameter value plus a least-squares line through the exit times
    """

    def __init__(self, param_name: str, rows: List[SweepRow], fit: Optional[LinearFit], config: Dict[str, Any]):
        self.param_name = param_name
        self.rows = rows
        self.fit = fit
        self.config = config

    def __repr__(self):
        return f"SweepResult: {self.param_name} x {len(self.rows)} fit={self.fit}"

    @property
    def exit_times(self) -> np.ndarray:
        return np.array([np.nan if row.T is None else row.T for row in self.rows])

    @property
    def failed(self) -> List[SweepRow]:
        return [row for row in self.rows if row.error is not None]


def linear_fit(x, y) -> Optional[LinearFit]:
    """
    ordinary least squares, None for fewer than 2 points or a constant abscissa.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] < 2 or np.all(x == x[0]):
        return None
    result = linregress(x, y)
    r2 = result.rvalue**2 if np.isfinite(result.rvalue) else 1.0
    return LinearFit(float(result.slope), float(result.intercept), float(r2))


def _row(
    flow_id: str,
    param_name: str,
    value: float,
    fixed_config: Dict[str, Any],
    settings: Dict[str, Any],
) -> SweepRow:
    with EntryExitConfig(**settings):
        try:
            params = {**fixed_config.get("params", {}), param_name: value}
            model = get_flow_model(
                flow_id, fixed_config.get("linearization", Linearization.SIMPLIFIED), **params
            )
            _, prediction = predict_exit(
                model,
                fixed_config.get("kind", BalanceKind.nile()),
                z0=fixed_config.get("z0"),
                t0=fixed_config.get("t0", 0.0),
                span=fixed_config.get("span"),
                grid_points=fixed_config.get("grid_points"),
                zero_tol=fixed_config.get("zero_tol"),
                deriv_tol=fixed_config.get("deriv_tol"),
            )
        except EntryExitException as e:
            logger.warning("Sweep row %s=%g failed: %s", param_name, value, e)
            return SweepRow(value, None, None, None, None, error=str(e))
    if not prediction.found:
        return SweepRow(value, None, None, None, None, error="no zero found")
    exit_state = tuple(float(x) for x in prediction.exit_state) if prediction.exit_state is not None else None
    return SweepRow(value, prediction.T, exit_state, prediction.dF_dt_at_T, prediction.degenerate)


def sweep(
    flow_id: str,
    param_name: str,
    values: Sequence[float],
    fixed_config: Optional[Dict[str, Any]] = None,
    workers: Optional[int] = None,
) -> SweepResult:
    """
    exit predictions over a range of one parameter, rows in the order of values regardless of workers.

    A failing row is recorded with its error and the sweep carries on. The fit runs over the rows with an exit.

    :param fixed_config: params (the other flow parameters), kind, linearization, z0, t0, span, grid_points,
        zero_tol, deriv_tol
    :param workers: worker threads, defaults to SWEEP_WORKERS
    """
    values = [float(v) for v in values]
    if not values:
        raise InvalidInputException("A sweep needs at least one parameter value")
    fixed_config = dict(fixed_config or {})
    workers = EntryExitConfig.SWEEP_WORKERS if workers is None else workers
    # worker threads don't see thread-level overrides of the caller, hand them over explicitly
    settings = EntryExitConfig.resolved()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        rows = list(
            executor.map(
                lambda v: _row(flow_id, param_name, v, fixed_config, settings), values
            )
        )
    solved = [row for row in rows if row.T is not None]
    fit = linear_fit([row.param for row in solved], [row.T for row in solved])
    if fit is not None:
        logger.info(
            "%s sweep fit: T = %.6g * %s + %.6g, R2=%.6f",
            flow_id,
            fit.slope,
            param_name,
            fit.intercept,
            fit.r2,
        )
    return SweepResult(param_name, rows, fit, {"flow": flow_id, "param": param_name, **settings})
