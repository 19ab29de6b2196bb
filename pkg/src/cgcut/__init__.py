"""Cluster-randomized spatial A/B designs chosen by a spectral causal graph cut."""

__version__ = "0.1.0"

from .cgc import *  # noqa: E402,F401,F403
from .covariance import *  # noqa: E402,F401,F403
from .estimators import *  # noqa: E402,F401,F403
from .graph import *  # noqa: E402,F401,F403
from .graphcut import *  # noqa: E402,F401,F403
from .mse import *  # noqa: E402,F401,F403
from .synth import *  # noqa: E402,F401,F403
