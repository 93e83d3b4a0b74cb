"""Disk-based approximate nearest neighbor search with compressed vectors and graph."""

from ._core import (
    CorruptionError,
    Engine,
    Error,
    FormatError,
    InfeasibleError,
    IoError,
    NotFoundError,
    UsageError,
    brute_force_knn,
    characterize,
    generate,
)

__all__ = [
    "CorruptionError",
    "Engine",
    "Error",
    "FormatError",
    "InfeasibleError",
    "IoError",
    "NotFoundError",
    "UsageError",
    "brute_force_knn",
    "characterize",
    "generate",
]
