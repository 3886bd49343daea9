"""Spectral divide-and-conquer eigensolver for symmetric banded and HODLR matrices."""

__version__ = "0.1.0"
