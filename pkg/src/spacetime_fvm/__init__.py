"""Finite volume method for conservation laws d(omega(u)) = 0 on foliated
spacetimes with boundary, where the flux is a state-parametrized family of
differential forms, plus verification tooling for the scheme's discrete
entropy inequalities, stability bounds and contraction properties."""

__version__ = "0.1.0"

from . import config, entropy, expressions, fluxfield, forms, harness, mesh, presets, scheme

__all__ = [
    "config",
    "entropy",
    "expressions",
    "fluxfield",
    "forms",
    "harness",
    "mesh",
    "presets",
    "scheme",
    "__version__",
]
