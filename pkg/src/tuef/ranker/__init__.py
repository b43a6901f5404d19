"""Ranking models: LambdaMART, the interpretable constrained variant, and a linear scorer."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .interpretable import InterpretableEnsemble, train_interpretable
from .lambdamart import GbdtEnsemble, Hyperparams, train_lambdamart
from .linear import LinearScorer
from .training_set import LtrTrainingSet, build_training_set
from .tuning import TuningConfig, tune

Model = GbdtEnsemble | InterpretableEnsemble | LinearScorer


def model_from_dict(data: dict) -> Model:
    kind = data.get("kind")
    if kind == "lambdamart":
        return GbdtEnsemble.from_dict(data)
    if kind == "interpretable":
        return InterpretableEnsemble.from_dict(data)
    if kind == "linear":
        return LinearScorer.from_dict(data)
    raise ValueError(f"unknown model kind {kind!r}")


def rank_by_score(users: Sequence[int], scores: np.ndarray) -> list[int]:
    """Descending score, ascending user id on ties."""
    return [u for _, u in sorted(zip((-np.asarray(scores)).tolist(), [int(u) for u in users]))]


__all__ = [
    "GbdtEnsemble", "Hyperparams", "InterpretableEnsemble", "LinearScorer", "LtrTrainingSet",
    "Model", "TuningConfig", "build_training_set", "model_from_dict", "rank_by_score",
    "train_interpretable", "train_lambdamart", "tune",
]
