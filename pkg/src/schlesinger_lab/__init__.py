"""Numerical laboratory for Schlesinger isomonodromic deformations of 2x2
Fuchsian systems: flows, monodromy, local expansions near a pole collision
and the Painleve VI specialization."""

__version__ = "0.1.0"
