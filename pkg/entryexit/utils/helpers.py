import logging
from typing import List, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def format_float(value) -> str:
    """
    shortest representation that reads back to the same double, "nan"/"inf"/"-inf" for non-finite values
    """
    return repr(float(value))


def data_lines(text: str) -> List[Tuple[int, str]]:
    """
    (1-based line number, content) of every line that is neither blank nor a comment. Inline comments are cut.
    """
    lines = []
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            lines.append((number, content))
    return lines


def linspace_values(start: float, stop: float, steps: int) -> List[float]:
    """
    steps evenly spaced values from start to stop, a single value for steps == 1
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    if steps == 1:
        return [float(start)]
    return [float(v) for v in np.linspace(start, stop, steps)]
