"""jsqlab: simulation and validation lab for the JSQ diffusion limit in the
Halfin-Whitt regime.

Subpackages: sde_core (reflected diffusion stepping), regen (regeneration
cycles and ratio estimators), hitting (scale-function oracles and hitting
Monte Carlo), tails (tail curves, fits, extrema scaling), prelimit_jsq
(N-server CTMC), mmn (explicit comparison diffusion), cli (experiments).
"""

from .errors import ConfigurationError, InsufficientDataError, NumericsError
from .sde_core import DiffusionParams, DiffusionState, simulate_path, step

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DiffusionParams",
    "DiffusionState",
    "InsufficientDataError",
    "NumericsError",
    "simulate_path",
    "step",
]
