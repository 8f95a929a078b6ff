"""Subgroup-equivariant sequence models via edge-orbit symmetry breaking."""

__version__ = "0.1.0"
