"""LambdaMART: boosted regression trees fit to LambdaRank gradients."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .tree import Binner, FeatureConstraint, Tree, TreeBuilder, TreeParams

logger = logging.getLogger(__name__)


@dataclass
class Hyperparams:
    learning_rate: float = 0.1
    num_leaves: int = 31
    n_estimators: int = 100
    max_depth: int = 8
    min_data_in_leaf: int = 20
    max_bin: int = 255
    sigma: float = 1.0
    l2: float = 1e-6
    seed: int = 0

    def tree_params(self) -> TreeParams:
        return TreeParams(num_leaves=self.num_leaves, max_depth=self.max_depth,
                          min_data_in_leaf=self.min_data_in_leaf, l2=self.l2)

    def to_dict(self) -> dict:
        return asdict(self)


class GroupBatches:
    """Query groups padded into equal-width batches for vectorized gradient work."""

    MAX_CELLS = 2_000_000

    def __init__(self, group_sizes: Sequence[int], labels: np.ndarray):
        bounds = np.concatenate([[0], np.cumsum(group_sizes)]).astype(np.int64)
        self.labels = labels
        buckets: dict[int, list[int]] = {}
        for g, size in enumerate(group_sizes):
            if size < 2:
                continue
            width = 1 << int(np.ceil(np.log2(size)))
            buckets.setdefault(width, []).append(g)
        self.batches = []
        chunks = []
        for width, groups in sorted(buckets.items()):
            step = max(1, self.MAX_CELLS // (width * width))
            chunks.extend((width, groups[i:i + step]) for i in range(0, len(groups), step))
        for width, groups in chunks:
            idx = np.full((len(groups), width), -1, dtype=np.int64)
            for r, g in enumerate(groups):
                lo, hi = bounds[g], bounds[g + 1]
                idx[r, : hi - lo] = np.arange(lo, hi)
            valid = idx >= 0
            safe = np.where(valid, idx, 0)
            y = np.where(valid, labels[safe], -1.0)
            gain = np.where(valid, 2.0 ** np.maximum(y, 0) - 1.0, 0.0)
            ideal = -np.sort(-gain, axis=1)
            idcg = (ideal / np.log2(np.arange(2, width + 2))[None, :]).sum(axis=1)
            pair = (y[:, :, None] > y[:, None, :]) & valid[:, :, None] & valid[:, None, :]
            keep = idcg > 0
            self.batches.append((safe[keep], valid[keep], gain[keep], idcg[keep], pair[keep]))


def lambda_gradients(scores: np.ndarray, batches: GroupBatches, sigma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise LambdaRank gradients (ascent direction) and hessians weighted by |delta NDCG|."""
    g = np.zeros(len(scores))
    h = np.zeros(len(scores))
    for safe, valid, gain, idcg, pair in batches.batches:
        if not len(safe):
            continue
        s = np.where(valid, scores[safe], -np.inf)
        order = np.argsort(-s, axis=1, kind="stable")
        rank = np.empty_like(order)
        np.put_along_axis(rank, order, np.arange(1, s.shape[1] + 1)[None, :].repeat(len(s), 0), axis=1)
        disc = 1.0 / np.log2(1.0 + rank)
        sv = np.where(valid, s, 0.0)
        diff = sv[:, :, None] - sv[:, None, :]
        dndcg = np.abs((gain[:, :, None] - gain[:, None, :]) * (disc[:, :, None] - disc[:, None, :]))
        dndcg /= idcg[:, None, None]
        rho = 1.0 / (1.0 + np.exp(np.clip(sigma * diff, -50, 50)))
        lam = np.where(pair, sigma * rho * dndcg, 0.0)
        hw = np.where(pair, sigma * sigma * rho * (1.0 - rho) * dndcg, 0.0)
        gi = lam.sum(axis=2) - lam.sum(axis=1)
        hi = hw.sum(axis=2) + hw.sum(axis=1)
        np.add.at(g, safe[valid], gi[valid])
        np.add.at(h, safe[valid], hi[valid])
    return g, h


@dataclass
class GbdtEnsemble:
    trees: list[Tree] = field(default_factory=list)
    shrinkage: list[float] = field(default_factory=list)
    feature_names: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)
    kind: str = "lambdamart"

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        for tree, lr in zip(self.trees, self.shrinkage):
            out += lr * tree.predict(x)
        return out

    def feature_importance(self) -> np.ndarray:
        imp = np.zeros(len(self.feature_names))
        for tree in self.trees:
            for f, gain in zip(tree.feature, tree.gain):
                if f >= 0:
                    imp[f] += gain
        return imp

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "config": self.config,
            "trees": [dict(t.to_dict(), shrinkage=lr) for t, lr in zip(self.trees, self.shrinkage)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GbdtEnsemble":
        return cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            shrinkage=[t["shrinkage"] for t in data["trees"]],
            feature_names=tuple(data["feature_names"]),
            config=data.get("config", {}),
            kind=data.get("kind", "lambdamart"),
        )


def boost(
    x: np.ndarray,
    batches: GroupBatches,
    builder: TreeBuilder,
    hp: Hyperparams,
    n_trees: int,
    init_scores: np.ndarray | None = None,
    constraint: FeatureConstraint | None = None,
    callback=None,
) -> tuple[list[Tree], np.ndarray]:
    scores = np.zeros(len(x)) if init_scores is None else init_scores.copy()
    trees: list[Tree] = []
    for it in range(n_trees):
        g, h = lambda_gradients(scores, batches, hp.sigma)
        tree = builder.build(g, h, constraint)
        if tree.n_leaves < 2:
            logger.info("boosting stopped at iteration %d: no admissible split", it)
            break
        trees.append(tree)
        scores += hp.learning_rate * tree.predict(x)
        if callback is not None:
            callback(it, tree, scores)
    return trees, scores


def train_lambdamart(
    x: np.ndarray,
    labels: np.ndarray,
    group_sizes: Sequence[int],
    hp: Hyperparams = Hyperparams(),
    feature_names: Sequence[str] = (),
    allowed_features: np.ndarray | None = None,
    callback=None,
) -> GbdtEnsemble:
    x = np.asarray(x, dtype=float)
    binner = Binner(hp.max_bin).fit(x)
    builder = TreeBuilder(binner.transform(x), binner, hp.tree_params())
    batches = GroupBatches(group_sizes, np.asarray(labels, dtype=float))
    constraint = None
    if allowed_features is not None:
        mask = np.asarray(allowed_features, dtype=bool)
        constraint = lambda used: mask  # noqa: E731
    trees, _ = boost(x, batches, builder, hp, hp.n_estimators, constraint=constraint, callback=callback)
    names = tuple(feature_names) or tuple(f"f{i}" for i in range(x.shape[1]))
    return GbdtEnsemble(trees, [hp.learning_rate] * len(trees), names, {"hyperparams": hp.to_dict()})
