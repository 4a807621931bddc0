"""Numerical laboratory for energy decay of nonlinearly damped wave equations.

Modules
-------
damping   damping law ``g``, feedback ``rho``, coefficient ``a`` and assumption checks
weight    convex conjugate machinery, weight ``f`` and decay envelopes
seqlab    discrete comparison sequences, comparison ODE and the resulting bound
wavesim   1D wave simulator (spectral and leapfrog) with energy traces
obscheck  observation functional, observability checks and inequality checks
cli       experiment driver
"""

from ._errors import (ConfigError, DecayLabError, DomainError, NotYetValidError,
                      NumericalFailure, ResolutionError)
from .damping import (CoefficientField, DampingLaw, make_cubic_exp, make_custom_law,
                      make_linear_law, make_power_law, validate_A1)
from .obscheck import ExponentialObservabilityFit
from .seqlab import SequenceInstance
from .wavesim import WaveConfig, WaveState, solve
from .weight import DecayEnvelope, EnvelopeSpec, GrowthSpec, WeightSystem

__version__ = "0.1.0"

__all__ = [
    "CoefficientField",
    "ConfigError",
    "DampingLaw",
    "DecayEnvelope",
    "DecayLabError",
    "DomainError",
    "EnvelopeSpec",
    "ExponentialObservabilityFit",
    "GrowthSpec",
    "NotYetValidError",
    "NumericalFailure",
    "ResolutionError",
    "SequenceInstance",
    "WaveConfig",
    "WaveState",
    "WeightSystem",
    "make_cubic_exp",
    "make_custom_law",
    "make_linear_law",
    "make_power_law",
    "solve",
    "validate_A1",
]
