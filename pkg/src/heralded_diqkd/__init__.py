"""Key rates of device-independent QKD over lossy links with a heralded qubit amplifier."""

from .optimizer import PRESETS, Scenario, evaluate_keyrate, max_distance, optimize, sweep_distance
from .security import key_rate

__all__ = ["PRESETS", "Scenario", "evaluate_keyrate", "key_rate", "max_distance", "optimize", "sweep_distance"]
