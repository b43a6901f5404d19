"""Histogram regression trees grown leaf-wise on (gradient, hessian) pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Maps the set of features already used by a tree to the features still allowed.
FeatureConstraint = Callable[[frozenset], np.ndarray]


@dataclass
class TreeParams:
    num_leaves: int = 31
    max_depth: int = 8
    min_data_in_leaf: int = 20
    min_sum_hessian: float = 1e-3
    l2: float = 1e-6
    min_gain: float = 0.0


class Binner:
    """Quantile bins per feature; a row goes left of split bin ``b`` iff ``x <= upper[b]``."""

    def __init__(self, max_bin: int = 255):
        self.max_bin = max_bin
        self.uppers: list[np.ndarray] = []

    def fit(self, x: np.ndarray) -> "Binner":
        self.uppers = []
        for j in range(x.shape[1]):
            uniq = np.unique(x[:, j])
            if len(uniq) > self.max_bin:
                qs = np.quantile(x[:, j], np.linspace(0, 1, self.max_bin + 1)[1:-1], method="lower")
                uniq = np.unique(np.concatenate([qs, uniq[-1:]]))
            self.uppers.append(uniq.astype(float))
        return self

    @property
    def n_bins(self) -> int:
        return max((len(u) for u in self.uppers), default=1)

    def transform(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(x.shape, dtype=np.int32)
        for j, up in enumerate(self.uppers):
            out[:, j] = np.minimum(np.searchsorted(up, x[:, j], side="left"), len(up) - 1)
        return out

    def threshold(self, feature: int, bin_idx: int) -> float:
        return float(self.uppers[feature][bin_idx])


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def features_used(self) -> frozenset:
        return frozenset(int(f) for f in self.feature if f >= 0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = x[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=float),
            gain=np.asarray(d.get("gain", []), dtype=float),
        )

    @classmethod
    def stump(cls, feature: int, threshold: float, left_value: float, right_value: float) -> "Tree":
        return cls(
            feature=np.array([feature, -1, -1]),
            threshold=np.array([threshold, 0.0, 0.0]),
            left=np.array([1, -1, -1]),
            right=np.array([2, -1, -1]),
            value=np.array([0.0, left_value, right_value]),
            gain=np.zeros(3),
        )


@dataclass
class _Leaf:
    node: int
    rows: np.ndarray
    depth: int
    hist_g: np.ndarray
    hist_h: np.ndarray
    hist_n: np.ndarray
    split: tuple | None = None  # (gain, feature, bin)


class TreeBuilder:
    """Leaf-wise growth: always split the leaf with the largest gain."""

    def __init__(self, xb: np.ndarray, binner: Binner, params: TreeParams):
        self.xb = xb
        self.binner = binner
        self.params = params
        self.n_features = xb.shape[1]
        self.n_bins = binner.n_bins
        self._offsets = (xb + (np.arange(self.n_features) * self.n_bins)[None, :]).astype(np.int64)

    def _hist(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray):
        codes = self._offsets[rows].ravel()
        size = self.n_features * self.n_bins
        shape = (self.n_features, self.n_bins)
        hg = np.bincount(codes, weights=np.repeat(g[rows], self.n_features), minlength=size).reshape(shape)
        hh = np.bincount(codes, weights=np.repeat(h[rows], self.n_features), minlength=size).reshape(shape)
        hn = np.bincount(codes, minlength=size).reshape(shape)
        return hg, hh, hn

    def _best_split(self, leaf: _Leaf, allowed: np.ndarray):
        p = self.params
        if leaf.depth >= p.max_depth or len(leaf.rows) < 2 * p.min_data_in_leaf:
            return None
        cg = np.cumsum(leaf.hist_g, axis=1)[:, :-1]
        ch = np.cumsum(leaf.hist_h, axis=1)[:, :-1]
        cn = np.cumsum(leaf.hist_n, axis=1)[:, :-1]
        tg, th, tn = leaf.hist_g[0].sum(), leaf.hist_h[0].sum(), leaf.hist_n[0].sum()
        rg, rh, rn = tg - cg, th - ch, tn - cn
        gain = cg ** 2 / (ch + p.l2) + rg ** 2 / (rh + p.l2) - tg ** 2 / (th + p.l2)
        ok = ((cn >= p.min_data_in_leaf) & (rn >= p.min_data_in_leaf)
              & (ch >= p.min_sum_hessian) & (rh >= p.min_sum_hessian))
        ok &= allowed[:, None]
        gain = np.where(ok, gain, -np.inf)
        flat = int(np.argmax(gain))  # first maximum: lowest feature, then lowest bin
        best = gain.flat[flat]
        if not np.isfinite(best) or best <= p.min_gain:
            return None
        f, b = divmod(flat, gain.shape[1])
        return (float(best), f, b)

    def build(self, g: np.ndarray, h: np.ndarray, constraint: FeatureConstraint | None = None,
              rows: np.ndarray | None = None) -> Tree:
        p = self.params
        rows = np.arange(len(g)) if rows is None else rows
        used: frozenset = frozenset()
        allowed = constraint(used) if constraint else np.ones(self.n_features, dtype=bool)

        feature, threshold, left, right, value, gains = [-1], [0.0], [-1], [-1], [0.0], [0.0]
        hg, hh, hn = self._hist(rows, g, h)
        leaves = [_Leaf(0, rows, 0, hg, hh, hn)]
        leaves[0].split = self._best_split(leaves[0], allowed)
        n_leaves = 1
        while n_leaves < p.num_leaves:
            cands = [lf for lf in leaves if lf.split is not None]
            if not cands:
                break
            leaf = max(cands, key=lambda lf: (lf.split[0], -lf.node))
            gain, f, b = leaf.split
            go_left = self.xb[leaf.rows, f] <= b
            lrows, rrows = leaf.rows[go_left], leaf.rows[~go_left]
            small, large = (lrows, rrows) if len(lrows) <= len(rrows) else (rrows, lrows)
            sg, sh, sn = self._hist(small, g, h)
            big = (leaf.hist_g - sg, leaf.hist_h - sh, leaf.hist_n - sn)
            if small is lrows:
                lh, rh_ = (sg, sh, sn), big
            else:
                lh, rh_ = big, (sg, sh, sn)

            li, ri = len(feature), len(feature) + 1
            feature[leaf.node] = f
            threshold[leaf.node] = self.binner.threshold(f, b)
            left[leaf.node], right[leaf.node] = li, ri
            gains[leaf.node] = gain
            for _ in range(2):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                gains.append(0.0)
            leaves = [lf for lf in leaves if lf is not leaf]
            new = [_Leaf(li, lrows, leaf.depth + 1, *lh), _Leaf(ri, rrows, leaf.depth + 1, *rh_)]
            n_leaves += 1

            prev_used = used
            used = used | {f}
            if constraint is not None and used != prev_used:
                allowed = constraint(used)
                for lf in leaves:
                    lf.split = self._best_split(lf, allowed)
            for lf in new:
                lf.split = self._best_split(lf, allowed)
            leaves.extend(new)

        for lf in leaves:
            sg = g[lf.rows].sum()
            sh = h[lf.rows].sum()
            value[lf.node] = float(sg / (sh + p.l2))
        return Tree(
            feature=np.asarray(feature, dtype=np.int64),
            threshold=np.asarray(threshold, dtype=float),
            left=np.asarray(left, dtype=np.int64),
            right=np.asarray(right, dtype=np.int64),
            value=np.asarray(value, dtype=float),
            gain=np.asarray(gains, dtype=float),
        )
