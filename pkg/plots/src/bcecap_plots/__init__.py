"""Figures rendered from bcecap CSV outputs; CSV files are the only input."""

__version__ = "0.1.0"
