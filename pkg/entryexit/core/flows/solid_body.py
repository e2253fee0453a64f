"""
Regularized solid-body rotation near the wall {z2 = 0}:

    z1' = -(z2 - beta)
    z2' = z1 (1 - exp(-alpha z2))

with (z1, z2) in R x [0, inf). Particles entering at (-b, chi) leave at (b, chi) by the reversal
symmetry (z1, z2, t) -> (-z1, z2, -t), so balancing along the wall should predict T = 2b / beta.
"""

from typing import NamedTuple, Tuple

import numpy as np

from entryexit.core.flow_model import FlowModel
from entryexit.core.models import DomainBox, FastSlowSystem, FlatManifold, FlowSystem
from entryexit.exceptions import InvalidInputException, UnsupportedKindException
from entryexit.utils.constant import Linearization

NAME = "solid-body"


class SolidBodyParams(NamedTuple):
    alpha: float
    beta: float

    def validate(self) -> "SolidBodyParams":
        if not (self.alpha > 0 and self.beta > 0):
            raise InvalidInputException(
                f"alpha and beta must be positive, got alpha={self.alpha}, beta={self.beta}"
            )
        return self


def solid_body(
    params: SolidBodyParams, linearization: str = Linearization.SIMPLIFIED
) -> Tuple[FlowSystem, FlatManifold, FlowSystem]:
    """
    the planar field, the wall M = {z2 = 0} and the dynamics z1' = beta on it.

    ``linearization="exact"`` attaches the true Jacobian of the field. ``"simplified"`` attaches the matrix the
    entry-exit analysis of this flow was carried out with, which has 1 in place of 1 - exp(-alpha z2) and
    therefore differs from the true Jacobian on the wall.
    """
    alpha, beta = params.validate()

    def rhs(z: np.ndarray, t: float) -> np.ndarray:
        return np.array([-(z[1] - beta), -z[0] * np.expm1(-alpha * z[1])])

    def jac_exact(z: np.ndarray, t: float) -> np.ndarray:
        return np.array(
            [
                [0.0, -1.0],
                [-np.expm1(-alpha * z[1]), alpha * z[0] * np.exp(-alpha * z[1])],
            ]
        )

    def jac_simplified(z: np.ndarray, t: float) -> np.ndarray:
        return np.array([[0.0, -1.0], [1.0, alpha * z[0] * np.exp(-alpha * z[1])]])

    if linearization == Linearization.EXACT:
        jac = jac_exact
    elif linearization == Linearization.SIMPLIFIED:
        jac = jac_simplified
    else:
        raise UnsupportedKindException(f"Unknown linearization {linearization!r}")

    named = {"alpha": alpha, "beta": beta}
    domain = DomainBox([-np.inf, 0.0], [np.inf, np.inf])
    flow = FlowSystem(NAME, 2, rhs, jac, named, domain)
    manifold = FlatManifold([0.0, 0.0], [0.0, 1.0])
    reduced = FlowSystem(
        f"{NAME}/on-manifold",
        2,
        lambda z, t: np.array([beta, 0.0]),
        lambda z, t: np.zeros((2, 2)),
        named,
        domain,
    )
    return flow, manifold, reduced


def solid_body_fastslow(params: SolidBodyParams, eps: float) -> FastSlowSystem:
    """
    the fast-slow form eps x' = y (1 - exp(-alpha x)), y' = -(x - beta) in (x, y) = (z2, sqrt(eps) z1),
    slow time s = sqrt(eps) t.
    """
    alpha, beta = params.validate()

    def rhs(z: np.ndarray, t: float) -> np.ndarray:
        x, y = z
        return np.array([-y * np.expm1(-alpha * x) / eps, -(x - beta)])

    def jac(z: np.ndarray, t: float) -> np.ndarray:
        x, y = z
        return np.array(
            [
                [y * alpha * np.exp(-alpha * x) / eps, -np.expm1(-alpha * x) / eps],
                [-1.0, 0.0],
            ]
        )

    return FastSlowSystem(
        f"{NAME}/fast-slow",
        2,
        rhs,
        eps,
        fast_indices=[0],
        jac=jac,
        params={"alpha": alpha, "beta": beta, "eps": eps},
        domain=DomainBox([0.0, -np.inf], [np.inf, np.inf]),
    )


def to_fastslow_coordinates(z: np.ndarray, t: float, eps: float) -> Tuple[np.ndarray, float]:
    """
    map (z1, z2, t) to (x, y, s).
    """
    root = np.sqrt(eps)
    return np.array([z[1], root * z[0]]), root * t


class SolidBodyModel(FlowModel):
    NAME = NAME
    DEFAULTS = {"alpha": 2.0, "beta": 1.0, "b": 1.0}

    def __init__(self, linearization: str = Linearization.SIMPLIFIED, **params: float) -> None:
        """
        :param linearization: Jacobian attached to the field, "simplified" or "exact"
        :param params: alpha, beta and the entry offset b along the wall
        """
        super().__init__(**params)
        self.linearization = linearization
        self._params = SolidBodyParams(self.params["alpha"], self.params["beta"]).validate()
        self._flow, self._manifold, self._reduced = solid_body(self._params, linearization)

    @property
    def flow(self) -> FlowSystem:
        return self._flow

    @property
    def manifold(self) -> FlatManifold:
        return self._manifold

    @property
    def reduced(self) -> FlowSystem:
        return self._reduced

    @property
    def entry(self) -> np.ndarray:
        return np.array([-self.params["b"], 0.0])

    @property
    def inward(self) -> np.ndarray:
        return np.array([0.0, 1.0])

    @property
    def exact_exit_time(self) -> float:
        return 2 * self.params["b"] / self.params["beta"]

    def fastslow(self, eps: float) -> FastSlowSystem:
        return solid_body_fastslow(self._params, eps)

    @property
    def slow_reduced(self) -> FlowSystem:
        beta = self._params.beta
        return FlowSystem(
            f"{NAME}/slow",
            2,
            lambda z, t: np.array([0.0, beta]),
            lambda z, t: np.zeros((2, 2)),
            {"beta": beta},
            DomainBox([0.0, -np.inf], [np.inf, np.inf]),
        )

    @property
    def slow_entry(self) -> np.ndarray:
        return np.array([0.0, -self.params["b"]])
