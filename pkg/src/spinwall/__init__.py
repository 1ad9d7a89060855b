"""Frustrated spin chains and fields on two circles of the unit sphere.

Discrete energies, chirality order parameters, deterministic minimizers and
the continuum interface functionals they converge to.
"""

__version__ = "0.1.0"

from .geometry import SystemGeometry, chi, embed, oriented_angle, project_angle, r_max
from .spin_field import SpinChain1D, SpinField2D

__all__ = [
    "__version__",
    "SystemGeometry",
    "SpinChain1D",
    "SpinField2D",
    "chi",
    "embed",
    "oriented_angle",
    "project_angle",
    "r_max",
]
