"""Objective dialectical classification of multispectral diffusion MRI, with baselines and morphology."""

__version__ = "0.1.0"
