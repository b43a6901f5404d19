"""Random-search hyperparameter tuning on validation MRR."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .lambdamart import Hyperparams

logger = logging.getLogger(__name__)


@dataclass
class TuningConfig:
    learning_rate: tuple[float, float] = (0.0001, 0.15)
    num_leaves: tuple[int, int] = (50, 200)
    n_estimators: tuple[int, int] = (50, 150)
    max_depth: tuple[int, int] = (8, 15)
    min_data_in_leaf: tuple[int, int] = (150, 500)
    trials: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("learning_rate", "num_leaves", "n_estimators", "max_depth", "min_data_in_leaf"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"empty range for {name}: {lo} > {hi}")

    def sample(self, rng: np.random.Generator, base: Hyperparams = Hyperparams()) -> Hyperparams:
        return replace(
            base,
            learning_rate=float(rng.uniform(*self.learning_rate)),
            num_leaves=int(rng.integers(self.num_leaves[0], self.num_leaves[1] + 1)),
            n_estimators=int(rng.integers(self.n_estimators[0], self.n_estimators[1] + 1)),
            max_depth=int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
            min_data_in_leaf=int(rng.integers(self.min_data_in_leaf[0], self.min_data_in_leaf[1] + 1)),
        )


@dataclass
class Trial:
    params: Hyperparams
    valid_mrr: float
    train_mrr: float | None = None


@dataclass
class TuningResult:
    best: Hyperparams
    trials: list[Trial] = field(default_factory=list)


def tune(objective, cfg: TuningConfig, base: Hyperparams = Hyperparams()) -> TuningResult:
    """``objective(params) -> (valid_mrr, train_mrr | None)``; highest validation
    MRR wins, earlier trial on ties."""
    rng = np.random.default_rng(cfg.seed)
    trials: list[Trial] = []
    best: Trial | None = None
    for i in range(cfg.trials):
        params = cfg.sample(rng, base)
        valid, train = objective(params)
        trial = Trial(params, float(valid), train)
        trials.append(trial)
        logger.info("trial %d: valid MRR %.4f %s", i, valid, params)
        if best is None or trial.valid_mrr > best.valid_mrr:
            best = trial
    return TuningResult(best.params, trials)
