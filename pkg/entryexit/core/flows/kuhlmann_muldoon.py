"""
Planar Kuhlmann-Muldoon model of the thermocapillary flow in a liquid bridge of aspect ratio 2/3:

    z1' = pi z1^eta (1 - 2/3 z1) [sin(pi z2) - 2 alpha cos(2 pi z2)]
    z2' = [(eta + 1) z1^(eta - 1) - 2/3 (eta + 2) z1^eta] [cos(pi z2) + alpha sin(2 pi z2)]

on 0 < z1 <= 3/2, -1/2 < z2 < 1/2. The free surface {z1 = 3/2} is invariant and carries
z2' = -(3/2)^(eta - 1) [cos(pi z2) + alpha sin(2 pi z2)].
"""

from typing import NamedTuple, Optional, Tuple

import numpy as np

from entryexit.core.flow_model import FlowModel
from entryexit.core.models import DomainBox, FlatManifold, FlowSystem
from entryexit.exceptions import DomainException, InvalidInputException

NAME = "km"
RADIUS = 1.5


class KuhlmannMuldoonParams(NamedTuple):
    alpha_s: float
    eta: float

    def validate(self) -> "KuhlmannMuldoonParams":
        if not np.isfinite(self.alpha_s):
            raise InvalidInputException(f"alpha_s must be finite, got {self.alpha_s}")
        if not 4 <= self.eta <= 5:
            raise InvalidInputException(f"eta must be in [4, 5], got {self.eta}")
        return self


def _domain() -> DomainBox:
    return DomainBox(
        [0.0, -0.5], [RADIUS, 0.5], open_lower=[True, True], open_upper=[False, True]
    )


def _angular(z2: float, alpha: float) -> Tuple[float, float]:
    s = np.sin(np.pi * z2) - 2 * alpha * np.cos(2 * np.pi * z2)
    c = np.cos(np.pi * z2) + alpha * np.sin(2 * np.pi * z2)
    return s, c


def _surface_speed(z2: float, params: KuhlmannMuldoonParams) -> float:
    _, c = _angular(z2, params.alpha_s)
    return -(RADIUS ** (params.eta - 1)) * c


def kuhlmann_muldoon(params: KuhlmannMuldoonParams) -> Tuple[FlowSystem, FlatManifold, FlowSystem]:
    alpha, eta = params.validate()

    def check(z: np.ndarray) -> None:
        if not z[0] > 0:
            raise DomainException(f"z1 must be positive, got {z[0]}")

    def rhs(z: np.ndarray, t: float) -> np.ndarray:
        check(z)
        z1, z2 = z
        s, c = _angular(z2, alpha)
        radial = (eta + 1) * z1 ** (eta - 1) - 2 / 3 * (eta + 2) * z1**eta
        return np.array([np.pi * z1**eta * (1 - 2 / 3 * z1) * s, radial * c])

    def jac(z: np.ndarray, t: float) -> np.ndarray:
        check(z)
        z1, z2 = z
        s, c = _angular(z2, alpha)
        ds = np.pi * np.cos(np.pi * z2) + 4 * np.pi * alpha * np.sin(2 * np.pi * z2)
        dc = -np.pi * np.sin(np.pi * z2) + 2 * np.pi * alpha * np.cos(2 * np.pi * z2)
        shape = z1**eta * (1 - 2 / 3 * z1)
        d_shape = eta * z1 ** (eta - 1) * (1 - 2 / 3 * z1) - 2 / 3 * z1**eta
        radial = (eta + 1) * z1 ** (eta - 1) - 2 / 3 * (eta + 2) * z1**eta
        d_radial = (eta**2 - 1) * z1 ** (eta - 2) - 2 / 3 * (eta + 2) * eta * z1 ** (eta - 1)
        return np.array(
            [
                [np.pi * d_shape * s, np.pi * shape * ds],
                [d_radial * c, radial * dc],
            ]
        )

    named = {"alpha": alpha, "eta": eta}
    flow = FlowSystem(NAME, 2, rhs, jac, named, _domain())
    manifold = FlatManifold([RADIUS, 0.0], [1.0, 0.0])

    def reduced_rhs(z: np.ndarray, t: float) -> np.ndarray:
        return np.array([0.0, _surface_speed(z[1], params)])

    def reduced_jac(z: np.ndarray, t: float) -> np.ndarray:
        dc = -np.pi * np.sin(np.pi * z[1]) + 2 * np.pi * alpha * np.cos(2 * np.pi * z[1])
        return np.array([[0.0, 0.0], [0.0, -(RADIUS ** (eta - 1)) * dc]])

    reduced = FlowSystem(f"{NAME}/on-manifold", 2, reduced_rhs, reduced_jac, named, _domain())
    return flow, manifold, reduced


def nile_integrand_km(gamma2: float, params: KuhlmannMuldoonParams) -> float:
    """
    the NILE integrand along the free surface as obtained with normal (0, 1):

        -(2/3)^(1 - eta) pi [2 alpha cos(2 pi gamma2) - sin(pi gamma2)]

    It is the negative of n^T A n with the geometric normal (1, 0), so both share their zeros.
    """
    alpha, eta = params
    if not -0.5 < gamma2 < 0.5:
        raise InvalidInputException(f"gamma2 must be in (-1/2, 1/2), got {gamma2}")
    return float(
        -((2 / 3) ** (1 - eta))
        * np.pi
        * (2 * alpha * np.cos(2 * np.pi * gamma2) - np.sin(np.pi * gamma2))
    )


class KuhlmannMuldoonModel(FlowModel):
    NAME = NAME
    # z2 is the entry position on the free surface
    DEFAULTS = {"alpha": 0.1, "eta": 4.74, "z2": 0.4}

    def __init__(self, **params: float) -> None:
        super().__init__(**params)
        self._params = KuhlmannMuldoonParams(self.params["alpha"], self.params["eta"]).validate()
        if not -0.5 < self.params["z2"] < 0.5:
            raise InvalidInputException(f"Entry z2 must be in (-1/2, 1/2), got {self.params['z2']}")
        self._flow, self._manifold, self._reduced = kuhlmann_muldoon(self._params)

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
        return np.array([RADIUS, self.params["z2"]])

    @property
    def inward(self) -> np.ndarray:
        return np.array([-1.0, 0.0])

    def nile_literal(self, p: np.ndarray, t: float) -> Optional[float]:
        return nile_integrand_km(float(p[1]), self._params)
