"""Learning-to-rank groups built from past questions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..ingest import Question

logger = logging.getLogger(__name__)


class TrainingSetError(Exception):
    pass


@dataclass
class Group:
    query_id: int
    users: np.ndarray
    features: np.ndarray
    labels: np.ndarray


@dataclass
class LtrTrainingSet:
    groups: list[Group]  # oldest query first
    dropped: int = 0
    valid_fraction: float = 0.2
    stats: dict = field(default_factory=dict)

    def split(self) -> tuple["LtrTrainingSet", "LtrTrainingSet"]:
        """Older queries train, the most recent ``valid_fraction`` validate."""
        n_valid = int(round(self.valid_fraction * len(self.groups)))
        if len(self.groups) > 1:
            n_valid = min(max(n_valid, 1), len(self.groups) - 1)
        else:
            n_valid = 0
        cut = len(self.groups) - n_valid
        return (LtrTrainingSet(self.groups[:cut], 0, self.valid_fraction),
                LtrTrainingSet(self.groups[cut:], 0, self.valid_fraction))

    def arrays(self) -> tuple[np.ndarray, np.ndarray, list[int]]:
        if not self.groups:
            return np.zeros((0, 0)), np.zeros(0), []
        x = np.vstack([g.features for g in self.groups])
        y = np.concatenate([g.labels for g in self.groups])
        return x, y, [len(g.labels) for g in self.groups]

    @property
    def mean_list_length(self) -> float:
        return float(np.mean([len(g.labels) for g in self.groups])) if self.groups else 0.0


def recent_expert_queries(questions: Sequence[Question], experts, cap: int) -> list[Question]:
    """The ``cap`` most recent questions whose accepted answerer is an expert, oldest first."""
    if cap <= 0:
        raise ValueError("the LtR query cap must be positive")
    chosen = [q for q in questions if q.accepted_user_id in experts][-cap:]
    return chosen


def build_training_set(
    questions: Sequence[Question],
    experts,
    featurize: Callable[[Question], tuple[np.ndarray, np.ndarray]],
    cap: int = 50_000,
    valid_fraction: float = 0.2,
) -> LtrTrainingSet:
    """``featurize(q) -> (users, features)``. Groups lacking the accepted answerer are dropped."""
    groups = []
    dropped = 0
    for q in recent_expert_queries(questions, experts, cap):
        users, feats = featurize(q)
        labels = (np.asarray(users) == q.accepted_user_id).astype(float)
        if labels.sum() != 1:
            dropped += 1
            continue
        groups.append(Group(q.question_id, np.asarray(users), feats, labels))
    if not groups:
        raise TrainingSetError("no training query kept its accepted answerer among the candidates")
    ts = LtrTrainingSet(groups, dropped, valid_fraction)
    ts.stats = {"queries": len(groups), "dropped": dropped, "avg_list": ts.mean_list_length}
    logger.info("LtR set: %d queries (%d dropped), mean list %.1f", len(groups), dropped, ts.mean_list_length)
    return ts
