"""Interacting particle systems on weighted hypergraphs.

Exact forward and backward simulation, NIMFA mean-field integration, an exact
master-equation oracle for tiny systems, and closed-form accuracy bounds.
"""
__version__ = "0.1.0"

from .rates import (  # noqa: F401
    InteractionRule,
    PairRateMatrix,
    RateSystem,
    StateSpace,
    build_rate_system,
    diag_R2_stats,
    expm_action,
    frobenius_theta,
    influence_max,
    pair_rate_matrix,
    spectral_norm,
)
from .models import InitialLaw  # noqa: F401
