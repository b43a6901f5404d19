"""Macro-topic identification by k-means on normalized tag co-occurrence rows."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .ingest import Question

logger = logging.getLogger(__name__)


class ClusteringError(Exception):
    pass


@dataclass(frozen=True)
class TagVocabulary:
    all_tags: tuple[str, ...]
    feature_tags: tuple[str, ...]
    tag_counts: dict[str, int]

    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.all_tags)}


@dataclass
class CooccurrenceMatrix:
    raw: np.ndarray  # |T| x |F| counts
    normalized: np.ndarray

    @property
    def nonzero_rows(self) -> np.ndarray:
        return self.raw.sum(axis=1) > 0


@dataclass
class TagClustering:
    k: int
    assignment: dict[str, int]
    centroids: np.ndarray
    silhouette: float
    inertia: float = 0.0
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    def members(self, cluster: int) -> list[str]:
        return sorted(t for t, c in self.assignment.items() if c == cluster)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "silhouette": self.silhouette,
            "inertia": self.inertia,
            "assignment": sorted(self.assignment.items()),
            "centroids": self.centroids.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TagClustering":
        return cls(
            k=data["k"],
            assignment={t: c for t, c in data["assignment"]},
            centroids=np.asarray(data["centroids"], dtype=float),
            silhouette=data["silhouette"],
            inertia=data["inertia"],
            seed=data["seed"],
            metadata=data.get("metadata", {}),
        )


def build_vocabulary(questions: Iterable[Question], n_features: int = 10) -> TagVocabulary:
    counts: Counter[str] = Counter()
    for q in questions:
        counts.update(set(q.tags))
    if not counts:
        raise ClusteringError("no tags in the training questions")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return TagVocabulary(
        all_tags=tuple(sorted(counts)),
        feature_tags=tuple(ordered[:n_features]),
        tag_counts=dict(sorted(counts.items())),
    )


def build_matrix(vocab: TagVocabulary, questions: Iterable[Question]) -> CooccurrenceMatrix:
    """Count, for every tag, the questions it shares with each feature tag.

    A feature tag paired with itself counts the questions carrying it.
    """
    t_index = vocab.index()
    f_index = {f: j for j, f in enumerate(vocab.feature_tags)}
    raw = np.zeros((len(vocab.all_tags), len(vocab.feature_tags)), dtype=np.int64)
    for q in questions:
        tags = set(q.tags)
        feats = [f_index[t] for t in tags if t in f_index]
        if not feats:
            continue
        rows = [t_index[t] for t in tags if t in t_index]
        raw[np.ix_(rows, feats)] += 1
    sums = raw.sum(axis=1, keepdims=True)
    normalized = np.divide(raw, sums, out=np.zeros(raw.shape, dtype=float), where=sums > 0)
    return CooccurrenceMatrix(raw=raw, normalized=normalized)


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list[float]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _seed_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers, dtype=float)


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> KMeansResult:
    """Lloyd iterations from D^2-weighted seeding; stops when no label changes."""
    centroids = _seed_centroids(x, k, rng)
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d = _sq_dists(x, centroids)
        new_labels = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster on the worst-served point
                far = int(d[np.arange(len(x)), labels].argmax())
                centroids[j] = x[far]
    d = _sq_dists(x, centroids)
    inertia = float(d[np.arange(len(x)), labels].sum())
    return KMeansResult(labels, centroids, inertia, n_iter, history)


def silhouette(x: np.ndarray, labels: np.ndarray, chunk: int = 1024) -> float:
    """Mean silhouette over all points with Euclidean distance; singleton clusters score 0."""
    n = len(x)
    if n == 0:
        return 0.0
    uniq, lab = np.unique(labels, return_inverse=True)
    k = len(uniq)
    if k < 2:
        return 0.0
    sizes = np.bincount(lab, minlength=k).astype(float)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), lab] = 1.0
    values = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        d = cdist(x[lo:hi], x)
        sums = d @ onehot  # distance totals per cluster
        own = lab[lo:hi]
        own_size = sizes[own]
        a = np.where(own_size > 1, sums[np.arange(hi - lo), own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes[None, :]
        means[np.arange(hi - lo), own] = np.inf
        b = means.min(axis=1)
        s = np.where(own_size > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
        s[(own_size > 1) & (np.maximum(a, b) == 0)] = 0.0
        values[lo:hi] = s
    return float(values.mean())


def cluster(
    matrix: CooccurrenceMatrix,
    tags: Sequence[str],
    k_range: tuple[int, int] = (2, 10),
    seed: int = 0,
    restarts: int = 10,
    max_iter: int = 300,
) -> TagClustering:
    """Pick k in ``k_range`` maximizing the silhouette; ties go to the smaller k.

    Tags whose normalized row is the zero vector are left out of training and
    silhouette, then attached to the nearest centroid.
    """
    k_min, k_max = k_range
    if k_min < 1 or k_max < k_min:
        raise ClusteringError(f"invalid k range {k_range}")
    mask = matrix.nonzero_rows
    x = matrix.normalized[mask]
    distinct = len(np.unique(x, axis=0)) if len(x) else 0
    if distinct < k_min:
        raise ClusteringError(f"only {distinct} distinct tag rows; cannot form {k_min} clusters")
    k_max = min(k_max, distinct)

    best: tuple | None = None
    for k in range(k_min, k_max + 1):
        run_best: KMeansResult | None = None
        for r in range(restarts):
            rng = np.random.default_rng([seed, k, r])
            res = kmeans(x, k, rng, max_iter=max_iter)
            if run_best is None or res.inertia < run_best.inertia:
                run_best = res
        sil = silhouette(x, run_best.labels) if k > 1 else 0.0
        logger.info("k=%d silhouette=%.4f inertia=%.4f", k, sil, run_best.inertia)
        key = (sil, -k, -run_best.inertia)
        if best is None or key > best[0]:
            best = (key, k, run_best, sil)

    _, k, res, sil = best
    labels_all = np.empty(len(tags), dtype=np.int64)
    labels_all[mask] = res.labels
    if (~mask).any():
        zero_rows = matrix.normalized[~mask]
        labels_all[~mask] = _sq_dists(zero_rows, res.centroids).argmin(axis=1)
    return TagClustering(
        k=k,
        assignment={t: int(c) for t, c in zip(tags, labels_all)},
        centroids=res.centroids,
        silhouette=sil,
        inertia=res.inertia,
        seed=seed,
        metadata={
            "distance": "euclidean",
            "k_range": [k_min, k_range[1]],
            "restarts": restarts,
            "degenerate_tags": int((~mask).sum()),
        },
    )


def single_layer(tags: Sequence[str]) -> TagClustering:
    """Every tag in one cluster (single-layer graph mode)."""
    return TagClustering(
        k=1,
        assignment={t: 0 for t in tags},
        centroids=np.zeros((1, 0)),
        silhouette=0.0,
        metadata={"distance": "euclidean", "mode": "single-layer"},
    )
