"""Batch figure rendering for cmzlab CSV artifacts."""

from .core import (
    EmptyInputError,
    FigureError,
    FigureJob,
    MissingInputError,
    RenderResult,
    SchemaError,
    read_csv,
    render,
)

__all__ = [
    "EmptyInputError",
    "FigureError",
    "FigureJob",
    "MissingInputError",
    "RenderResult",
    "SchemaError",
    "read_csv",
    "render",
]
__version__ = "0.1.0"
