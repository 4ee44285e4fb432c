"""Galerkin solver for sound-soft scattering by multifractal obstacles."""

__version__ = "0.1.0"
