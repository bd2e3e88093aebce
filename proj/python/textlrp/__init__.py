"""Python interface to the textlrp explanation pipeline."""

from ._core import (
    Error,
    ValidationError,
    __version__,
    explain,
    read_relevance,
    report,
    synth,
    tokenize,
    train_blackbox,
    train_surrogate,
)

__all__ = [
    "Error",
    "ValidationError",
    "__version__",
    "explain",
    "read_relevance",
    "report",
    "synth",
    "tokenize",
    "train_blackbox",
    "train_surrogate",
]
