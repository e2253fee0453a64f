from typing import Dict, Optional

import numpy as np

from entryexit.core.models import (
    FastSlowSystem,
    FlatManifold,
    FlowSystem,
    ManifoldSpec,
    NeighbourhoodSpec,
)
from entryexit.exceptions import InvalidInputException, UnsupportedKindException


class FlowModel:
    """
    Base class bundling a model flow with the invariant manifold it carries.

    A subclass provides the full vector field, the manifold, the reduced dynamics on the manifold (as a
    vector field on the full state space whose normal component vanishes), a default entry point and a
    default region gate. Parameters are validated by the subclass constructor.
    """

    NAME: str = ""
    DEFAULTS: Dict[str, float] = {}

    def __init__(self, **params: float) -> None:
        unknown = set(params) - set(self.DEFAULTS)
        if unknown:
            raise InvalidInputException(
                f"Unknown parameter(s) {sorted(unknown)} for flow {self.NAME}, "
                f"expect {sorted(self.DEFAULTS)}"
            )
        self.params: Dict[str, float] = {**self.DEFAULTS, **params}

    def __repr__(self):
        return f"{type(self).__name__}: {self.params}"

    @property
    def flow(self) -> FlowSystem:
        raise NotImplementedError

    @property
    def manifold(self) -> ManifoldSpec:
        raise NotImplementedError

    @property
    def reduced(self) -> FlowSystem:
        raise NotImplementedError

    @property
    def entry(self) -> np.ndarray:
        """
        default reference initial state on the manifold.
        """
        raise NotImplementedError

    @property
    def inward(self) -> np.ndarray:
        """
        unit vector pointing from the manifold into the flow domain.
        """
        raise NotImplementedError

    def gate(self, width: float) -> NeighbourhoodSpec:
        """
        the region {0 <= distance to the manifold <= width} on the domain side.
        """
        manifold = self.manifold
        if not isinstance(manifold, FlatManifold) or manifold.codim != 1:
            raise UnsupportedKindException("Default gates need a codimension-one flat manifold")
        index = int(np.argmax(np.abs(manifold.unit_normal)))
        level = manifold.base_point[index]
        if self.inward[index] > 0:
            return NeighbourhoodSpec(index, level, level + width)
        return NeighbourhoodSpec(index, level - width, level)

    def offset_entry(self, entry, chi: float) -> np.ndarray:
        """
        the entry point moved a distance chi off the manifold into the domain.
        """
        if not chi > 0:
            raise InvalidInputException(f"Offset must be positive, got {chi}")
        return np.asarray(entry, dtype=float) + chi * self.inward

    def nile_literal(self, p: np.ndarray, t: float) -> Optional[float]:
        """
        a closed-form NILE integrand that differs from the geometric one, None when there is none.
        """
        return None

    def fastslow(self, eps: float) -> FastSlowSystem:
        raise UnsupportedKindException(f"Flow {self.NAME} has no fast-slow form")

    @property
    def slow_reduced(self) -> FlowSystem:
        raise UnsupportedKindException(f"Flow {self.NAME} has no fast-slow form")

    @property
    def slow_entry(self) -> np.ndarray:
        raise UnsupportedKindException(f"Flow {self.NAME} has no fast-slow form")
