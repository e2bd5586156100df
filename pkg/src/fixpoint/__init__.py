"""Strong-convergence projection methods for common fixed points."""

__version__ = "0.1.0"
