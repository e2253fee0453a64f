from typing import Callable, Tuple

import numpy as np
from scipy.optimize import brentq

from entryexit.core.exits import find_exit
from entryexit.core.models import BalanceSeries


def solid_body_generator(alpha: float, beta: float, b: float, exact: bool = False) -> Callable[[float], np.ndarray]:
    """
    A(t) of the solid-body flow along the wall trajectory (beta t - b, 0)
    """

    def generator(t: float) -> np.ndarray:
        return np.array([[0.0, -1.0], [0.0 if exact else 1.0, alpha * (beta * t - b)]])

    return generator


def rk4_fundamental(generator: Callable[[float], np.ndarray], t0: float, t1: float, step: float = 1e-5) -> np.ndarray:
    """
    Phi(t1) of Z' = A(t) Z, Z(t0) = I, by classical Runge-Kutta on a fixed grid
    """
    n = int(round((t1 - t0) / step))
    h = (t1 - t0) / n
    # A at every node and midpoint, evaluated once
    half_steps = t0 + 0.5 * h * np.arange(2 * n + 1)
    mats = np.array([generator(t) for t in half_steps])
    phi = np.eye(mats.shape[1])
    for k in range(n):
        a0, a_half, a1 = mats[2 * k], mats[2 * k + 1], mats[2 * k + 2]
        k1 = a0 @ phi
        k2 = a_half @ (phi + 0.5 * h * k1)
        k3 = a_half @ (phi + 0.5 * h * k2)
        k4 = a1 @ (phi + h * k3)
        phi = phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return phi


def _balance_level(u: float, alpha: float) -> float:
    return (1 + 2 * alpha * u) * np.sqrt(1 - u**2)


def _time_primitive(u: float, alpha: float) -> float:
    # antiderivative of 1 / ((1 - u^2)(1 + 2 alpha u))
    if np.isclose(alpha, 0.5):
        return -0.25 * np.log(1 - u) + 0.25 * np.log(1 + u) - 0.5 / (1 + u)
    a = 1 / (2 * (1 + 2 * alpha))
    b = 1 / (2 * (1 - 2 * alpha))
    c = 4 * alpha**2 / (4 * alpha**2 - 1)
    return -a * np.log(1 - u) + b * np.log(1 + u) + c / (2 * alpha) * np.log(1 + 2 * alpha * u)


def km_exit(alpha: float, eta: float, z2: float) -> Tuple[float, float]:
    """
    closed-form NILE exit time and exit z2 of the Kuhlmann-Muldoon free surface, 0 < alpha <= 1/2.

    With u = sin(pi z2) the balance condition is (1 + 2 alpha u) sqrt(1 - u^2) = const, and the on-surface
    time to go from u0 down to uT is (2/3)^(eta - 1) / pi times the integral of 1 / ((1 - u^2)(1 + 2 alpha u)).
    """
    u0 = np.sin(np.pi * z2)
    level = _balance_level(u0, alpha)
    crest = (-1 + np.sqrt(1 + 32 * alpha**2)) / (8 * alpha)
    u_exit = brentq(lambda u: _balance_level(u, alpha) - level, -1 + 1e-15, crest, xtol=1e-15)
    tau = (_time_primitive(u0, alpha) - _time_primitive(u_exit, alpha)) / np.pi
    return float(tau * (2 / 3) ** (eta - 1)), float(np.arcsin(u_exit) / np.pi)


def assert_exit_time(series: BalanceSeries, expected: float, tol: float = 1e-6) -> None:
    prediction = find_exit(series)
    assert prediction.found, f"\n\tExpected exit at {expected}\n\tActual: no zero on {series}"
    assert abs(prediction.T - expected) <= tol, f"\n\tExpected T: {expected}\n\tActual T: {prediction.T}"
