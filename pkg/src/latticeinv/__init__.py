"""latticeinv - interval-bound residual method for imperfect forward models."""

__version__ = "0.1.0"
