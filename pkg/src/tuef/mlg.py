"""Multi-layer user graph: one similarity graph per tag cluster."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import centrality
from .ingest import Dataset, Question
from .topics import TagClustering

logger = logging.getLogger(__name__)


class GraphError(Exception):
    pass


def nearest_rank_percentile(values: Iterable[float], p: float) -> float:
    """Value at 1-based rank ceil(p/100 * n) of the sorted values."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("percentile of an empty sequence")
    if not 0 < p <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {p}")
    rank = max(1, math.ceil(p / 100.0 * len(ordered)))
    return ordered[min(rank, len(ordered)) - 1]


# ---------------------------------------------------------------------------
# answer statistics over the training period


@dataclass
class UserActivity:
    answers: dict[int, int]
    accepted: dict[int, int]
    timestamps: dict[int, list[float]]

    def ratio(self, user: int) -> float:
        n = self.answers.get(user, 0)
        return self.accepted.get(user, 0) / n if n else 0.0


def user_activity(dataset: Dataset, questions: Sequence[Question] | None = None) -> UserActivity:
    questions = dataset.train_questions if questions is None else questions
    answers: dict[int, int] = defaultdict(int)
    accepted: dict[int, int] = defaultdict(int)
    stamps: dict[int, list[float]] = defaultdict(list)
    for q in questions:
        for a in dataset.answers.get(q.question_id, ()):
            answers[a.owner_user_id] += 1
            stamps[a.owner_user_id].append(a.creation_date)
            if a.accepted:
                accepted[a.owner_user_id] += 1
    for ts in stamps.values():
        ts.sort()
    return UserActivity(dict(answers), dict(accepted), dict(stamps))


@dataclass
class ExpertLabeling:
    candidates: frozenset[int]
    experts: frozenset[int]
    min_accepted: int
    mean_ratio: float
    ratios: dict[int, float]
    percentile: float

    def to_dict(self) -> dict:
        return {
            "candidates": sorted(self.candidates),
            "experts": sorted(self.experts),
            "min_accepted": self.min_accepted,
            "mean_ratio": self.mean_ratio,
            "ratios": sorted(self.ratios.items()),
            "percentile": self.percentile,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExpertLabeling":
        return cls(
            candidates=frozenset(data["candidates"]),
            experts=frozenset(data["experts"]),
            min_accepted=data["min_accepted"],
            mean_ratio=data["mean_ratio"],
            ratios={u: r for u, r in data["ratios"]},
            percentile=data["percentile"],
        )


def label_experts(activity: UserActivity, percentile: float = 95.0) -> ExpertLabeling:
    """Experts are candidates (accepted count at or above the percentile cut)
    whose acceptance ratio is strictly above the candidates' mean ratio."""
    counts = [c for c in activity.accepted.values() if c > 0]
    if not counts:
        raise GraphError("no user has an accepted answer")
    cut = int(nearest_rank_percentile(counts, percentile))
    cands = sorted(u for u, c in activity.accepted.items() if c >= cut)
    if not cands:
        raise GraphError("empty candidate-expert set")
    ratios = {u: activity.ratio(u) for u in cands}
    mean = sum(ratios.values()) / len(ratios)
    experts = frozenset(u for u in cands if ratios[u] > mean)
    if not experts:
        raise GraphError(
            "no expert labeled: every candidate shares the mean acceptance ratio; "
            "lower expert_percentile"
        )
    return ExpertLabeling(frozenset(cands), experts, cut, mean, ratios, percentile)


# ---------------------------------------------------------------------------
# layers


def assign_question_layers(tags: Iterable[str], assignment: Mapping[str, int], n_layers: int) -> tuple[int, ...]:
    """Layers of a question's known tags; a question with no known tag goes to every layer."""
    layers = {assignment[t] for t in tags if t in assignment}
    if not layers:
        return tuple(range(n_layers))
    return tuple(sorted(layers))


@dataclass
class Layer:
    layer_id: int
    tags: tuple[str, ...]
    nodes: tuple[int, ...]
    min_accepted: int
    vectors: np.ndarray  # len(nodes) x len(tags)
    weights: np.ndarray  # dense symmetric similarity matrix, 0 where no edge
    accepted: dict[int, int]  # per-user accepted answers within the layer
    answers: dict[int, int]  # per-user answers within the layer
    stats: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index = {u: i for i, u in enumerate(self.nodes)}
        self._neighbors: list[tuple[np.ndarray, np.ndarray]] | None = None

    def index(self, user: int) -> int | None:
        return self._index.get(user)

    def __contains__(self, user: int) -> bool:
        return user in self._index

    @property
    def max_answers(self) -> int:
        return max((self.answers.get(u, 0) for u in self.nodes), default=0)

    def edges(self) -> list[tuple[int, int, float]]:
        iu, ju = np.nonzero(np.triu(self.weights, 1))
        return [(self.nodes[i], self.nodes[j], float(self.weights[i, j])) for i, j in zip(iu, ju)]

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and cumulative transition probabilities of node ``i``."""
        if self._neighbors is None:
            table = []
            for row in self.weights:
                nbr = np.flatnonzero(row)
                if len(nbr):
                    cum = np.cumsum(row[nbr])
                    cum /= cum[-1]
                else:
                    cum = np.zeros(0)
                table.append((nbr, cum))
            self._neighbors = table
        return self._neighbors[i]

    def compute_stats(self) -> None:
        w = self.weights
        dist, _ = centrality.bfs_counts(w) if len(self.nodes) else (np.zeros((0, 0)), None)
        btw = centrality.betweenness(w)
        order = sorted(range(len(self.nodes)), key=lambda i: (-btw[i], self.nodes[i]))
        pos = np.empty(len(self.nodes))
        pos[order] = np.arange(1, len(self.nodes) + 1)
        self.stats = {
            "betweenness": btw,
            "betweenness_pos": pos,
            "pagerank": centrality.pagerank(w),
            "eigenvector": centrality.eigenvector(w),
            "closeness": centrality.harmonic_closeness(w, dist),
            "degree": centrality.degree(w),
            "avg_weight": centrality.average_weight(w),
        }

    def betweenness_order(self) -> list[int]:
        pos = self.stats["betweenness_pos"]
        return [self.nodes[i] for i in np.argsort(pos, kind="stable")]

    def to_dict(self) -> dict:
        iu, ju = np.nonzero(np.triu(self.weights, 1))
        return {
            "layer_id": self.layer_id,
            "tags": list(self.tags),
            "nodes": list(self.nodes),
            "min_accepted": self.min_accepted,
            "vectors": [[[int(j), float(v[j])] for j in np.flatnonzero(v)] for v in self.vectors],
            "edges": [[int(i), int(j), float(self.weights[i, j])] for i, j in zip(iu, ju)],
            "accepted": sorted(self.accepted.items()),
            "answers": sorted(self.answers.items()),
            "stats": {k: v.tolist() for k, v in sorted(self.stats.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Layer":
        n, m = len(data["nodes"]), len(data["tags"])
        vectors = np.zeros((n, m))
        for i, row in enumerate(data["vectors"]):
            for j, v in row:
                vectors[i, j] = v
        weights = np.zeros((n, n))
        for i, j, w in data["edges"]:
            weights[i, j] = weights[j, i] = w
        layer = cls(
            layer_id=data["layer_id"],
            tags=tuple(data["tags"]),
            nodes=tuple(data["nodes"]),
            min_accepted=data["min_accepted"],
            vectors=vectors,
            weights=weights,
            accepted={u: c for u, c in data["accepted"]},
            answers={u: c for u, c in data["answers"]},
        )
        layer.stats = {k: np.asarray(v, dtype=float) for k, v in data["stats"].items()}
        return layer


@dataclass
class LayerCounts:
    accepted: dict[int, dict[int, int]]  # layer -> user -> accepted answers
    answers: dict[int, dict[int, int]]  # layer -> user -> answers
    tag_accepted: dict[int, dict[str, int]]  # user -> tag -> accepted (question, tag) pairs


def count_layer_activity(questions: Sequence[Question], dataset: Dataset,
                         clustering: TagClustering) -> LayerCounts:
    accepted: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    answers: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    tag_acc: dict[int, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for q in questions:
        layers = assign_question_layers(q.tags, clustering.assignment, clustering.k)
        for a in dataset.answers.get(q.question_id, ()):
            for layer in layers:
                answers[layer][a.owner_user_id] += 1
                if a.accepted:
                    accepted[layer][a.owner_user_id] += 1
        for t in q.tags:
            if t in clustering.assignment:
                tag_acc[q.accepted_user_id][t] += 1
    return LayerCounts(
        {k: dict(v) for k, v in accepted.items()},
        {k: dict(v) for k, v in answers.items()},
        {k: dict(v) for k, v in tag_acc.items()},
    )


def topic_vector(user: int, layer_tags: Sequence[str], tag_accepted: Mapping[int, Mapping[str, int]]) -> np.ndarray:
    """Accepted (question, tag) pairs on each layer tag over the user's total over all tags."""
    per_tag = tag_accepted.get(user, {})
    total = sum(per_tag.values())
    vec = np.array([per_tag.get(t, 0) for t in layer_tags], dtype=float)
    return vec / total if total else vec


def similarity_weights(vectors: np.ndarray, delta: float) -> np.ndarray:
    """Cosine similarities kept where they reach ``delta``; zero diagonal."""
    n = vectors.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    norms = np.linalg.norm(vectors, axis=1)
    unit = np.divide(vectors, norms[:, None], out=np.zeros_like(vectors), where=norms[:, None] > 0)
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    cos = (cos + cos.T) / 2.0
    np.fill_diagonal(cos, 0.0)
    keep = (cos >= delta) & (cos > 0)
    return np.where(keep, cos, 0.0)


def build_layers(
    dataset: Dataset,
    clustering: TagClustering,
    epsilon: float = 90.0,
    delta: float = 0.5,
    questions: Sequence[Question] | None = None,
) -> list[Layer]:
    if not 0 < epsilon < 100:
        raise ValueError(f"epsilon percentile must be in (0, 100), got {epsilon}")
    questions = dataset.train_questions if questions is None else questions
    counts = count_layer_activity(questions, dataset, clustering)
    layers = []
    for lid in range(clustering.k):
        tags = tuple(clustering.members(lid))
        acc = counts.accepted.get(lid, {})
        nonzero = [c for c in acc.values() if c > 0]
        if nonzero:
            cut = int(nearest_rank_percentile(nonzero, epsilon))
            nodes = tuple(sorted(u for u, c in acc.items() if c >= cut))
        else:
            cut, nodes = 0, ()
            logger.warning("layer %d has no qualifying users", lid)
        vectors = (np.array([topic_vector(u, tags, counts.tag_accepted) for u in nodes])
                   if nodes else np.zeros((0, len(tags))))
        layer = Layer(
            layer_id=lid,
            tags=tags,
            nodes=nodes,
            min_accepted=cut,
            vectors=vectors,
            weights=similarity_weights(vectors, delta),
            accepted=dict(sorted((u, acc[u]) for u in nodes)),
            answers=dict(sorted((u, counts.answers.get(lid, {}).get(u, 0)) for u in nodes)),
        )
        layer.compute_stats()
        layers.append(layer)
    return layers


@dataclass
class MultiLayerGraph:
    layers: list[Layer]
    labeling: ExpertLabeling
    clustering: TagClustering
    activity: UserActivity
    config: dict = field(default_factory=dict)

    @property
    def tag_layer(self) -> dict[str, int]:
        return self.clustering.assignment

    def query_layers(self, tags: Iterable[str]) -> tuple[int, ...]:
        return assign_question_layers(tags, self.clustering.assignment, len(self.layers))

    def is_expert(self, user: int) -> bool:
        return user in self.labeling.experts

    def to_dict(self) -> dict:
        return {
            "layers": [layer.to_dict() for layer in self.layers],
            "labeling": self.labeling.to_dict(),
            "clustering": self.clustering.to_dict(),
            "activity": {
                "answers": sorted(self.activity.answers.items()),
                "accepted": sorted(self.activity.accepted.items()),
                "timestamps": sorted((u, ts) for u, ts in self.activity.timestamps.items()),
            },
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiLayerGraph":
        act = data["activity"]
        return cls(
            layers=[Layer.from_dict(d) for d in data["layers"]],
            labeling=ExpertLabeling.from_dict(data["labeling"]),
            clustering=TagClustering.from_dict(data["clustering"]),
            activity=UserActivity(
                answers={u: c for u, c in act["answers"]},
                accepted={u: c for u, c in act["accepted"]},
                timestamps={u: list(ts) for u, ts in act["timestamps"]},
            ),
            config=data.get("config", {}),
        )


def build_graph(
    dataset: Dataset,
    clustering: TagClustering,
    epsilon: float = 90.0,
    delta: float = 0.5,
    expert_percentile: float = 95.0,
) -> MultiLayerGraph:
    activity = user_activity(dataset)
    labeling = label_experts(activity, expert_percentile)
    layers = build_layers(dataset, clustering, epsilon, delta)
    return MultiLayerGraph(
        layers=layers,
        labeling=labeling,
        clustering=clustering,
        activity=activity,
        config={
            "epsilon": epsilon,
            "delta": delta,
            "expert_percentile": expert_percentile,
            "percentile": "nearest-rank",
            "epsilon_scope": "per-layer",
        },
    )
