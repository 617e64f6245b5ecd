"""MOS collection apparatus: rating storage, aggregation, HTTP service."""

from .store import ClipPair, MosAggregate, RatingRecord, RatingStore, aggregate, load_study
from .service import create_app

__all__ = [
    "ClipPair",
    "MosAggregate",
    "RatingRecord",
    "RatingStore",
    "aggregate",
    "load_study",
    "create_app",
]
