from collections import OrderedDict
from typing import Dict, Type

from entryexit.core.flow_model import FlowModel
from entryexit.core.flows.kuhlmann_muldoon import KuhlmannMuldoonModel
from entryexit.core.flows.solid_body import SolidBodyModel
from entryexit.exceptions import UnsupportedKindException
from entryexit.utils.constant import Linearization

FLOW_MODELS: Dict[str, Type[FlowModel]] = OrderedDict(
    [
        (SolidBodyModel.NAME, SolidBodyModel),
        (KuhlmannMuldoonModel.NAME, KuhlmannMuldoonModel),
    ]
)


def get_flow_model(flow_id: str, linearization: str = Linearization.SIMPLIFIED, **params: float) -> FlowModel:
    """
    build a registered flow bundle by its id.

    :param linearization: only meaningful for flows that carry an alternative linearization
    """
    if flow_id not in FLOW_MODELS:
        raise UnsupportedKindException(
            f"Unknown flow {flow_id!r}, expect one of {list(FLOW_MODELS)}"
        )
    if flow_id == SolidBodyModel.NAME:
        return SolidBodyModel(linearization=linearization, **params)
    return FLOW_MODELS[flow_id](**params)


def list_flows() -> Dict[str, Dict[str, float]]:
    """
    registry ids with their parameter defaults, in registration order
    """
    return OrderedDict((name, dict(model.DEFAULTS)) for name, model in FLOW_MODELS.items())
