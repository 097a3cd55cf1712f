"""Set-based closed-loop guidance over constrained-zonotope controllable tubes."""

from .czset import ConstrainedZonotope, Halfspace
from .landing import DiscreteDynamics, LandingScenario
from .tube import ControllableTube, deserialize_tube, serialize_tube

__version__ = "0.1.0"

__all__ = [
    "ConstrainedZonotope",
    "Halfspace",
    "DiscreteDynamics",
    "LandingScenario",
    "ControllableTube",
    "serialize_tube",
    "deserialize_tube",
]
