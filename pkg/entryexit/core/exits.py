import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from entryexit import DEFAULT_CHI, DEFAULT_GATE_WIDTH
from entryexit.config import EntryExitConfig
from entryexit.core.balance import build_series
from entryexit.core.dynsys import integrate
from entryexit.core.flow_model import FlowModel
from entryexit.core.models import BalanceKind, BalanceSeries, ExitPrediction, FlowSystem, as_state
from entryexit.exceptions import DomainException, InvalidInputException, PreconditionException

logger = logging.getLogger(__name__)

PERTURBATION_STEP = 1e-5


def zero_tolerance(series: BalanceSeries) -> float:
    finite = series.values[np.isfinite(series.values)]
    scale = float(np.max(np.abs(finite))) if finite.size else 0.0
    return EntryExitConfig.ZERO_TOL * (1 + scale)


def _derivative(series: BalanceSeries, t: float) -> float:
    spacing = float(np.min(np.diff(series.times)))
    h = 1e-3 * spacing
    lo, hi = max(t - h, series.times[0]), min(t + h, series.times[-1])
    return (series(hi) - series(lo)) / (hi - lo)


def _changes_sign_after(values: np.ndarray, finite: np.ndarray, k: int, reference: float) -> bool:
    return k + 1 < len(values) and bool(finite[k + 1]) and np.sign(values[k + 1]) != np.sign(reference)


def exit_at(series: BalanceSeries, T: float, deriv_tol: Optional[float] = None) -> ExitPrediction:
    """
    report T as the exit time of series, with the non-degeneracy check on dF/dt at T.
    """
    deriv_tol = EntryExitConfig.DERIV_TOL if deriv_tol is None else deriv_tol
    slope = _derivative(series, T)
    degenerate = bool(abs(slope) < deriv_tol)
    if degenerate:
        logger.warning("Zero of %s at T=%.12g is degenerate, dF/dt=%.3g", series.kind, T, slope)
    return ExitPrediction(True, float(T), float(slope), degenerate)


def find_exit(
    series: BalanceSeries,
    zero_tol: Optional[float] = None,
    deriv_tol: Optional[float] = None,
) -> ExitPrediction:
    """
    the first nontrivial zero of a balance series.

    Leading samples with |F| <= zero_tol form the trivial plateau at t0 and are skipped. The first sign change
    after it is refined with Brent's method on the interpolated (or exactly evaluated) series. A sample within
    zero_tol only stands for the zero itself when the series touches zero there without crossing. Non-finite
    samples never bracket a root.

    :param zero_tol: absolute zero tolerance, defaults to ZERO_TOL * (1 + max|F|)
    :param deriv_tol: |dF/dt| below this marks the zero as degenerate
    """
    if len(series) < 3:
        raise InvalidInputException(f"At least 3 samples are required, got {len(series)}")
    zero_tol = zero_tolerance(series) if zero_tol is None else zero_tol
    times, values = series.times, series.values
    finite = np.isfinite(values)

    off_plateau = np.nonzero(finite & (np.abs(values) > zero_tol))[0]
    if not off_plateau.size:
        return ExitPrediction.not_found()
    for i in range(off_plateau[0], len(values) - 1):
        if not (finite[i] and finite[i + 1]):
            continue
        left, right = values[i], values[i + 1]
        if right == 0.0:
            T = float(times[i + 1])
        elif np.sign(left) != np.sign(right):
            try:
                T = float(
                    brentq(series, times[i], times[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps)
                )
            except ValueError:
                # the interpolant disagrees with the samples in sign at a bracket end
                T = float(times[i] - left * (times[i + 1] - times[i]) / (right - left))
        elif abs(right) <= zero_tol and not _changes_sign_after(values, finite, i + 1, left):
            # touching zero, the curve comes back without crossing
            T = float(times[i + 1])
        else:
            continue
        prediction = exit_at(series, T, deriv_tol)
        prediction.bracket = (float(times[i]), float(times[i + 1]))
        return prediction
    return ExitPrediction.not_found()


def exit_point(reduced_flow: FlowSystem, z0, t0: float, T: float) -> np.ndarray:
    """
    the state on the manifold at time T, integrating the reduced dynamics from (t0, z0).
    """
    z0 = as_state(z0, reduced_flow.dim)
    if T < t0:
        raise InvalidInputException(f"Exit time {T} precedes t0={t0}")
    if T == t0:
        return z0
    trajectory = integrate(reduced_flow, z0, t0, T)
    if trajectory.domain_exit is not None:
        raise DomainException(
            f"Reduced trajectory left the domain at t={trajectory.domain_exit.time} before T={T}"
        )
    return trajectory.final_state


def predict_exit(
    model: FlowModel,
    kind: BalanceKind,
    z0=None,
    t0: float = 0.0,
    span: Optional[float] = None,
    grid_points: Optional[int] = None,
    chi: float = DEFAULT_CHI,
    gate_width: float = DEFAULT_GATE_WIDTH,
    zero_tol: Optional[float] = None,
    deriv_tol: Optional[float] = None,
) -> Tuple[BalanceSeries, ExitPrediction]:
    """
    balance series, first nontrivial zero and exit point for a registered flow.
    """
    series, reduced, start = build_series(
        model, kind, z0, t0, span, grid_points, chi=chi, gate_width=gate_width
    )
    prediction = find_exit(series, zero_tol, deriv_tol)
    if prediction.found:
        prediction.exit_state = exit_point(reduced, start, t0, prediction.T)
    else:
        logger.info("%s has no sign change on [%g, %g]", kind, series.times[0], series.times[-1])
    return series, prediction


def perturb_first_order(
    F_eval: Callable[[float, float], float],
    T0: float,
    zero_tol: Optional[float] = None,
    deriv_tol: Optional[float] = None,
    h_t: float = PERTURBATION_STEP,
    h_delta: float = PERTURBATION_STEP,
) -> Tuple[float, float]:
    """
    first two terms of T(delta) = T0 + delta T1 + ... solving F(T(delta); delta) = 0.

    T1 = -(dF/d delta) / (dF/dt) at (T0, 0), both partials by centered differences.

    :param F_eval: (t, delta) -> F
    :param zero_tol: bound on |F(T0, 0)|, defaults to ZERO_TOL relative to the magnitude of F next to T0
    """
    deriv_tol = EntryExitConfig.DERIV_TOL if deriv_tol is None else deriv_tol
    f_plus, f_minus = F_eval(T0 + h_t, 0.0), F_eval(T0 - h_t, 0.0)
    if zero_tol is None:
        zero_tol = EntryExitConfig.ZERO_TOL * (1 + max(abs(f_plus), abs(f_minus)) / h_t)
    residual = F_eval(T0, 0.0)
    if abs(residual) > zero_tol:
        raise PreconditionException(f"F(T0, 0) = {residual:.3g} is not a zero within {zero_tol:.3g}")
    dF_dt = (f_plus - f_minus) / (2 * h_t)
    if abs(dF_dt) < deriv_tol:
        raise PreconditionException(f"dF/dt = {dF_dt:.3g} at T0={T0}, the zero is degenerate")
    dF_ddelta = (F_eval(T0, h_delta) - F_eval(T0, -h_delta)) / (2 * h_delta)
    return float(T0), float(-dF_ddelta / dF_dt)


def true_exit(
    flow: FlowSystem,
    entry,
    index: int,
    level: float,
    direction: int,
    t_end: float,
    t0: float = 0.0,
    tol: Optional[float] = None,
    atol: Optional[float] = None,
) -> Optional[Tuple[float, np.ndarray]]:
    """
    exit time and state of a particle through the gate boundary {z[index] = level}, by full integration.

    :param direction: +1 when leaving means z[index] increasing through level, -1 otherwise
    :return: None when the particle doesn't cross within [t0, t_end]
    """
    trajectory = integrate(flow, entry, t0, t_end, tol=tol, atol=atol)
    T = trajectory.first_crossing(index, level, direction)
    if T is None:
        return None
    return T, trajectory(T)
