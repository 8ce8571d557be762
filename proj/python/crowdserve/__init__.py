"""crowdserve: temporal spatial-keyword index with a context-aware recommender."""

from crowdserve._core import (
    Index,
    Model,
    derive_context,
    haversine_m,
    load_model,
    replay,
    score,
    train,
)

__all__ = [
    "Index",
    "Model",
    "derive_context",
    "haversine_m",
    "load_model",
    "replay",
    "score",
    "train",
]
