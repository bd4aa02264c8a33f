"""Numerical laboratory for wandering domains near homoclinic tangencies.

Submodules: maps, saddle, cantor, linking, perturb, wander, measures, cli.
"""
__version__ = "0.1.0"
