"""Continuous-variable quantum repeater simulator.

Truncated Fock-space simulation of heralded non-Gaussian entanglement
distillation and swapping, Gaussification fixed-point analysis, repeater
chain planning, and asymptotic CV-QKD key rates.
"""

from . import chain, errors, fock, gauss, keyrate, protocols  # noqa: F401

__version__ = "0.1.0"
