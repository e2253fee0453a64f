import logging
import warnings
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from entryexit import DEFAULT_CHI, DEFAULT_GATE_WIDTH
from entryexit.core.exits import predict_exit
from entryexit.core.flow_model import FlowModel
from entryexit.core.models import BalanceKind, BalanceSeries, ExitPrediction
from entryexit.exceptions import EntryExitException
from entryexit.io import write_exit, write_series
from entryexit.utils.constant import BalanceMethod

logger = logging.getLogger(__name__)


def lazy_method(func):
    def wrapper(*args, **kwargs):
        self = args[0]
        if not self._evaluated:
            self._eval()
        return func(*args, **kwargs)

    return wrapper


def lazy_property(func):
    return property(lazy_method(func))


class BalanceRunner(object):
    def __init__(
        self,
        model: FlowModel,
        kind: BalanceKind,
        z0=None,
        t0: float = 0.0,
        span: Optional[float] = None,
        grid_points: Optional[int] = None,
        zero_tol: Optional[float] = None,
        deriv_tol: Optional[float] = None,
        chi: float = DEFAULT_CHI,
        gate_width: float = DEFAULT_GATE_WIDTH,
    ):
        """
        The entry point of a balance computation after command line options are parsed.

        :param model: flow bundle from the registry
        :param kind: balance function variant
        :param z0: reference initial state, defaults to the model's entry point
        :param span: search span, estimated from the integrand when absent
        :param chi: particle offset off the manifold, measured-velocity kind only
        :param gate_width: width of the region gate, measured-velocity kind only
        """
        self._model = model
        self._kind = kind
        self._z0 = z0
        self._t0 = t0
        self._span = span
        self._grid_points = grid_points
        self._zero_tol = zero_tol
        self._deriv_tol = deriv_tol
        self._chi = chi
        self._gate_width = gate_width
        self._evaluated = False
        self._cross_check: Optional[ExitPrediction] = None

    @lazy_method
    def __str__(self):
        """
        print out the exit summary.
        """
        prediction = self.prediction
        if not prediction.found:
            times = self.series.times
            return f"{self._model.NAME} {self._kind}: no exit found on [{times[0]}, {times[-1]}]"
        exit_state = ", ".join(str(x) for x in prediction.exit_state)
        combined = f"""Flow: {self._model.NAME} {self._model.params}
Balance: {self._kind}
Exit time: {prediction.T}
Exit state: ({exit_state})
dF/dt: {prediction.dF_dt_at_T}{" (degenerate)" if prediction.degenerate else ""}
"""
        if self._cross_check is not None and self._cross_check.found:
            combined += f"NILE exit time: {self._cross_check.T}\n"
        return combined

    @lazy_property
    def series(self) -> BalanceSeries:
        return self._series

    @lazy_property
    def prediction(self) -> ExitPrediction:
        return self._prediction

    @lazy_method
    def write(self, out_dir) -> Dict[str, Path]:
        """
        write series.csv and exit.json into out_dir
        """
        out_dir = Path(out_dir)
        extra = {"flow": self._model.NAME, "params": self._model.params}
        if self._cross_check is not None:
            extra["nile_T"] = self._cross_check.T if self._cross_check.found else None
        return {
            "series": write_series(self._series, out_dir / "series.csv"),
            "exit": write_exit(self._prediction, self._series, out_dir / "exit.json", **extra),
        }

    def _eval(self):
        self._series, self._prediction = predict_exit(
            self._model,
            self._kind,
            z0=self._z0,
            t0=self._t0,
            span=self._span,
            grid_points=self._grid_points,
            chi=self._chi,
            gate_width=self._gate_width,
            zero_tol=self._zero_tol,
            deriv_tol=self._deriv_tol,
        )
        if self._kind.method == BalanceMethod.EIG:
            self._check_against_nile()
        self._evaluated = True

    def _check_against_nile(self) -> None:
        # instantaneous eigenvalues aren't invariant under time-dependent changes of coordinates
        try:
            _, self._cross_check = predict_exit(
                self._model,
                BalanceKind.nile(),
                z0=self._z0,
                t0=self._t0,
                grid_points=self._grid_points,
            )
        except EntryExitException as e:
            logger.info("NILE cross-check unavailable: %s", e)
            return
        reference = self._cross_check
        if not reference.found:
            return
        if not self._prediction.found:
            warnings.warn(
                f"Instantaneous eigenvalues give no exit while NILE balances at T={reference.T:.9g}, "
                "eigenvalue balance is unreliable for this flow"
            )
        elif not np.isclose(self._prediction.T, reference.T, rtol=1e-6, atol=1e-6):
            warnings.warn(
                f"Instantaneous eigenvalue exit T={self._prediction.T:.9g} differs from the NILE exit "
                f"T={reference.T:.9g}, eigenvalue balance is unreliable for this flow"
            )
