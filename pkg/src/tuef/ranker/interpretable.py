"""Interpretable boosted ranker: one-feature main effects plus a few
two-feature interaction effects, each an additive block of trees."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lambdamart import GroupBatches, Hyperparams, boost
from .tree import Binner, Tree, TreeBuilder

Effect = tuple[int, ...]


@dataclass
class InterpretableEnsemble:
    trees: list[Tree] = field(default_factory=list)
    shrinkage: list[float] = field(default_factory=list)
    effects: list[Effect] = field(default_factory=list)  # effect of each tree
    pairs: list[tuple[int, int]] = field(default_factory=list)
    feature_names: tuple[str, ...] = ()
    config: dict = field(default_factory=dict)
    kind: str = "interpretable"

    @property
    def main_effects(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for t, eff in enumerate(self.effects):
            if len(eff) == 1:
                out.setdefault(eff[0], []).append(t)
        return out

    @property
    def interaction_effects(self) -> dict[tuple[int, int], list[int]]:
        out: dict[tuple[int, int], list[int]] = {}
        for t, eff in enumerate(self.effects):
            if len(eff) == 2:
                out.setdefault(eff, []).append(t)
        return out

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(len(x))
        for tree, lr in zip(self.trees, self.shrinkage):
            out += lr * tree.predict(x)
        return out

    def contributions(self, x: np.ndarray) -> dict[Effect, np.ndarray]:
        """Per-effect additive contributions; they sum to ``predict(x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out: dict[Effect, np.ndarray] = {}
        for tree, lr, eff in zip(self.trees, self.shrinkage, self.effects):
            out.setdefault(eff, np.zeros(len(x)))
            out[eff] += lr * tree.predict(x)
        return out

    def effect_importance(self) -> list[tuple[Effect, float]]:
        """Effects ranked by total split gain."""
        imp: dict[Effect, float] = {}
        for tree, eff in zip(self.trees, self.effects):
            imp[eff] = imp.get(eff, 0.0) + float(tree.gain[tree.feature >= 0].sum())
        return sorted(imp.items(), key=lambda kv: (-kv[1], kv[0]))

    def effect_name(self, eff: Effect) -> str:
        return " x ".join(self.feature_names[f] for f in eff)

    def _grid(self, feature: int, trees: list[int]) -> np.ndarray:
        ts = {float(self.trees[t].threshold[n]) for t in trees
              for n in np.flatnonzero(self.trees[t].feature == feature)}
        ts = sorted(ts)
        # one point per step: every threshold, plus one beyond the last
        return np.asarray(ts + [ts[-1] + 1.0] if ts else [0.0])

    def effect_table(self, eff: Effect) -> dict:
        """Step-function table for plotting: grid values mapped to contributions.

        For a main effect each grid point ``g[k]`` covers ``(g[k-1], g[k]]``;
        interaction tables are the same on both axes.
        """
        trees = [t for t, e in enumerate(self.effects) if e == eff]
        if len(eff) == 1:
            grid = self._grid(eff[0], trees)
            x = np.zeros((len(grid), len(self.feature_names)))
            x[:, eff[0]] = grid
            vals = sum(self.shrinkage[t] * self.trees[t].predict(x) for t in trees)
            return {"effect": [self.feature_names[eff[0]]], "grid": [grid.tolist()],
                    "contribution": np.asarray(vals).tolist()}
        gi, gj = self._grid(eff[0], trees), self._grid(eff[1], trees)
        mi, mj = np.meshgrid(gi, gj, indexing="ij")
        x = np.zeros((mi.size, len(self.feature_names)))
        x[:, eff[0]] = mi.ravel()
        x[:, eff[1]] = mj.ravel()
        vals = sum(self.shrinkage[t] * self.trees[t].predict(x) for t in trees)
        return {"effect": [self.feature_names[f] for f in eff], "grid": [gi.tolist(), gj.tolist()],
                "contribution": np.asarray(vals).reshape(mi.shape).tolist()}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "feature_names": list(self.feature_names),
            "config": self.config,
            "pairs": [list(p) for p in self.pairs],
            "trees": [dict(t.to_dict(), shrinkage=lr, effect=list(eff))
                      for t, lr, eff in zip(self.trees, self.shrinkage, self.effects)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InterpretableEnsemble":
        return cls(
            trees=[Tree.from_dict(t) for t in data["trees"]],
            shrinkage=[t["shrinkage"] for t in data["trees"]],
            effects=[tuple(t["effect"]) for t in data["trees"]],
            pairs=[tuple(p) for p in data["pairs"]],
            feature_names=tuple(data["feature_names"]),
            config=data.get("config", {}),
        )


def lookup_table(table: dict, value: float) -> float:
    """Contribution of ``value`` read from a main-effect table."""
    grid = np.asarray(table["grid"][0])
    k = min(int(np.searchsorted(grid, value, side="left")), len(grid) - 1)
    return float(table["contribution"][k])


def _main_constraint(base: np.ndarray):
    def allowed(used: frozenset) -> np.ndarray:
        if not used:
            return base
        mask = np.zeros_like(base)
        mask[list(used)] = True
        return mask
    return allowed


def _pair_constraint(pairs: Sequence[tuple[int, int]], n_features: int):
    def allowed(used: frozenset) -> np.ndarray:
        mask = np.zeros(n_features, dtype=bool)
        for i, j in pairs:
            if used <= {i, j}:
                mask[i] = mask[j] = True
        return mask
    return allowed


def rank_pairs(trees: Sequence[Tree], candidates: np.ndarray) -> list[tuple[tuple[int, int], float]]:
    """Score feature pairs by summed products of per-tree split gains."""
    scores: dict[tuple[int, int], float] = {}
    for tree in trees:
        per_feat: dict[int, float] = {}
        for f, gain in zip(tree.feature, tree.gain):
            if f >= 0 and candidates[f]:
                per_feat[int(f)] = per_feat.get(int(f), 0.0) + float(gain)
        for i, j in itertools.combinations(sorted(per_feat), 2):
            scores[(i, j)] = scores.get((i, j), 0.0) + per_feat[i] * per_feat[j]
    return sorted(((p, s) for p, s in scores.items() if s > 0), key=lambda kv: (-kv[1], kv[0]))


def train_interpretable(
    x: np.ndarray,
    labels: np.ndarray,
    group_sizes: Sequence[int],
    hp: Hyperparams = Hyperparams(),
    n_pairs: int = 10,
    feature_names: Sequence[str] = (),
    allowed_features: np.ndarray | None = None,
    probe_trees: int = 20,
    interaction_estimators: int | None = None,
) -> InterpretableEnsemble:
    """Three stages: main-effect boosting, interaction-pair selection from a
    short unconstrained probe, interaction boosting on the chosen pairs."""
    if n_pairs < 0:
        raise ValueError("n_pairs must be >= 0")
    x = np.asarray(x, dtype=float)
    n_features = x.shape[1]
    base = np.ones(n_features, dtype=bool) if allowed_features is None else np.asarray(allowed_features, dtype=bool)
    binner = Binner(hp.max_bin).fit(x)
    builder = TreeBuilder(binner.transform(x), binner, hp.tree_params())
    batches = GroupBatches(group_sizes, np.asarray(labels, dtype=float))

    main_trees, scores = boost(x, batches, builder, hp, hp.n_estimators, constraint=_main_constraint(base))
    effects: list[Effect] = [tuple(sorted(t.features_used())) for t in main_trees]

    pairs: list[tuple[int, int]] = []
    inter_trees: list[Tree] = []
    if n_pairs > 0:
        probe, _ = boost(x, batches, builder, hp, probe_trees, init_scores=scores,
                         constraint=lambda used: base)
        pairs = [p for p, _ in rank_pairs(probe, base)[:n_pairs]]
        if pairs:
            n_inter = hp.n_estimators if interaction_estimators is None else interaction_estimators
            inter_trees, scores = boost(x, batches, builder, hp, n_inter, init_scores=scores,
                                        constraint=_pair_constraint(pairs, n_features))
            for tree in inter_trees:
                used = tree.features_used()
                effects.append(next(p for p in pairs if used <= set(p)))

    trees = main_trees + inter_trees
    names = tuple(feature_names) or tuple(f"f{i}" for i in range(n_features))
    return InterpretableEnsemble(
        trees=trees,
        shrinkage=[hp.learning_rate] * len(trees),
        effects=effects,
        pairs=pairs,
        feature_names=names,
        config={"hyperparams": hp.to_dict(), "n_pairs": n_pairs, "probe_trees": probe_trees},
    )
