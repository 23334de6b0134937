"""ndgd - Noisy Distributed Gradient Descent.

Decentralized gradient descent with isotropic perturbations, the schedule
that makes it escape strict saddles, and Monte Carlo checks of the bounds
behind it.
"""

__version__ = "0.1.0"

from ndgd.engine import Engine, build_schedule, create_engine, run, run_many
from ndgd.models import Algorithm, LiftedPoint, MixingMatrix, RunConfig, RunTrace, Schedule

__all__ = [
    "__version__",
    "Engine",
    "build_schedule",
    "create_engine",
    "run",
    "run_many",
    "Algorithm",
    "LiftedPoint",
    "MixingMatrix",
    "RunConfig",
    "RunTrace",
    "Schedule",
]
