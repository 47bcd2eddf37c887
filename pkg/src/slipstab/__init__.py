"""Desk-scale slip-perturbation stability analysis for hip-exoskeleton assistance.

Submodules: bodymodel (segment inertial parameters), signal (filtering and
gait events), wbam (whole-body angular momentum metric), controller
(assistance torque profiles), synth (synthetic trials with analytic
oracles), trialio (file formats and dataset assembly), surface
(response-surface fit and bootstrap), stats (regression, mixed model,
ANOVA), contour (SVG figures), pipeline (orchestration), cli (entry
point).
"""

from .errors import ConfigError, DataError, NumericalError, SlipstabError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "SlipstabError",
    "__version__",
]
