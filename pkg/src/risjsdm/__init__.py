"""Multi-RIS customized JSDM simulator.

Submodules: ``numerics`` (seeded RNG, guarded solves), ``geometry`` (RIS
placement, UE drops), ``channel`` (ARVs, Rician channels), ``jsdm``
(reflection design, pre-beamforming, ZF), ``grouping`` (k-means, RIS
grouping, association), ``analysis`` (effective rank, averaged channels),
``experiments`` (sweeps and persistence) and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateBiasError,
    ParameterError,
    PlacementError,
    RisJsdmError,
    ScaleExceededError,
    ScenarioError,
    SingularityError,
)
from .scenario import Scenario, default_scenario, load_scenario  # noqa: E402

__all__ = [
    "__version__",
    "RisJsdmError",
    "ParameterError",
    "PlacementError",
    "SingularityError",
    "DegenerateBiasError",
    "ScaleExceededError",
    "ScenarioError",
    "Scenario",
    "default_scenario",
    "load_scenario",
]
