"""Static and query-dependent features of (query, candidate expert) pairs."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .ingest import Dataset
from .mlg import MultiLayerGraph
from .retrieval import RetrievalResult
from .selection import CONTENT, NETWORK, CandidateSet, Provenance

STATIC_FEATURES = (
    "Reputation", "Answers", "AcceptedAnswers", "Ratio", "AvgActivity", "StdActivity",
)
QUERY_FEATURES = (
    "LayerCount", "QueryKnowledge", "VisitCountContent", "VisitCountNetwork",
    "StepsContent", "StepsNetwork", "BetweennessPos", "BetweennessScore",
    "ScoreIndexTag", "ScoreIndexText", "FrequencyIndexTag", "FrequencyIndexText",
    "Eigenvector", "PageRank", "Closeness", "Degree", "AvgWeights",
)
FEATURE_NAMES = STATIC_FEATURES + QUERY_FEATURES
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}
N_FEATURES = len(FEATURE_NAMES)

SENTINEL = 1e6

NETWORK_ONLY_FEATURES = STATIC_FEATURES + (
    "LayerCount", "QueryKnowledge", "VisitCountNetwork", "StepsNetwork", "BetweennessPos",
    "BetweennessScore", "Eigenvector", "PageRank", "Closeness", "Degree", "AvgWeights",
)
CONTENT_ONLY_FEATURES = STATIC_FEATURES + (
    "LayerCount", "QueryKnowledge", "VisitCountContent", "StepsContent", "ScoreIndexTag",
    "ScoreIndexText", "FrequencyIndexTag", "FrequencyIndexText", "Degree", "AvgWeights",
)

MAX_RULE = ("BetweennessScore", "Closeness", "PageRank", "Eigenvector", "Degree", "AvgWeights")
SUM_RULE = ("FrequencyIndexTag", "FrequencyIndexText", "ScoreIndexTag", "ScoreIndexText",
            "QueryKnowledge", "VisitCountContent", "VisitCountNetwork")
MIN_RULE = ("StepsContent", "StepsNetwork", "BetweennessPos")

_STAT_NAMES = {
    "BetweennessScore": "betweenness",
    "BetweennessPos": "betweenness_pos",
    "PageRank": "pagerank",
    "Eigenvector": "eigenvector",
    "Closeness": "closeness",
    "Degree": "degree",
    "AvgWeights": "avg_weight",
}


def compute_static(user: int, dataset: Dataset, graph: MultiLayerGraph, literal_ratio: bool = False) -> dict[str, float]:
    act = graph.activity
    answers = act.answers.get(user, 0)
    accepted = act.accepted.get(user, 0)
    if literal_ratio:
        ratio = answers / accepted if accepted else 0.0
    else:
        ratio = accepted / answers if answers else 0.0
    stamps = act.timestamps.get(user, [])
    if len(stamps) >= 2:
        gaps = np.diff(np.asarray(stamps, dtype=float))
        avg, std = float(gaps.mean()), float(gaps.std())
    else:
        avg = std = 0.0
    rep = dataset.users[user].reputation if user in dataset.users else 0
    return {
        "Reputation": float(rep),
        "Answers": float(answers),
        "AcceptedAnswers": float(accepted),
        "Ratio": ratio,
        "AvgActivity": avg,
        "StdActivity": std,
    }


def aggregate_layers(partials: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Merge per-layer feature dicts: max for centralities, sum for content
    counts and visits, min for steps and betweenness rank."""
    if not partials:
        raise ValueError("candidate must be present in at least one layer")
    out: dict[str, float] = {}
    for name in MAX_RULE:
        vals = [p[name] for p in partials if name in p]
        if vals:
            out[name] = max(vals)
    for name in SUM_RULE:
        vals = [p[name] for p in partials if name in p]
        if vals:
            out[name] = float(sum(vals))
    for name in MIN_RULE:
        vals = [p[name] for p in partials if name in p]
        if vals:
            out[name] = min(vals)
    return out


@dataclass
class RetrievalStats:
    score: dict[int, float]
    freq: dict[int, int]

    @classmethod
    def from_hits(cls, hits) -> "RetrievalStats":
        score: dict[int, float] = {}
        qs: dict[int, set[int]] = {}
        for h in hits:
            score[h.expert_id] = score.get(h.expert_id, 0.0) + h.bm25_score
            qs.setdefault(h.expert_id, set()).add(h.question_id)
        return cls(score, {u: len(v) for u, v in qs.items()})


class FeatureExtractor:
    """Builds the 23-feature vectors for one query's candidates."""

    def __init__(self, dataset: Dataset, graph: MultiLayerGraph, literal_ratio: bool = False):
        self.dataset = dataset
        self.graph = graph
        self.literal_ratio = literal_ratio
        self._static: dict[int, dict[str, float]] = {}

    def static(self, user: int) -> dict[str, float]:
        if user not in self._static:
            self._static[user] = compute_static(user, self.dataset, self.graph, self.literal_ratio)
        return self._static[user]

    def query_knowledge(self, user: int, layers: Iterable[int]) -> float:
        acc = ans = 0
        for lid in layers:
            layer = self.graph.layers[lid]
            acc += layer.accepted.get(user, 0)
            ans += layer.answers.get(user, 0)
        if self.literal_ratio:
            return ans / acc if acc else 0.0
        return acc / ans if ans else 0.0

    def layer_partial(self, user: int, lid: int, prov: Provenance | None,
                      found: Mapping[tuple[int, str], object]) -> dict[str, float]:
        layer = self.graph.layers[lid]
        idx = layer.index(user)
        part: dict[str, float] = {}
        if idx is not None:
            for feat, stat in _STAT_NAMES.items():
                part[feat] = float(layer.stats[stat][idx])
        for method, visits_key, steps_key in ((CONTENT, "VisitCountContent", "StepsContent"),
                                              (NETWORK, "VisitCountNetwork", "StepsNetwork")):
            d = found.get((lid, method))
            if d is not None:
                part[visits_key] = float(d.visits)
                part[steps_key] = float(d.step) if d.step is not None else SENTINEL
        return part

    def vectors(self, candidates: CandidateSet, users: Sequence[int] | None = None,
                retrieval: RetrievalResult | None = None) -> np.ndarray:
        """Feature matrix, one row per user (default: the candidate set in id order).

        Users outside the candidate set get sentinel selection features.
        """
        users = candidates.experts if users is None else list(users)
        retrieval = retrieval if retrieval is not None else candidates.retrieval
        tag_stats = RetrievalStats.from_hits(retrieval.tag_hits if retrieval else [])
        text_stats = RetrievalStats.from_hits(retrieval.text_hits if retrieval else [])
        per_user: dict[int, dict[tuple[int, str], object]] = {}
        for run in candidates.runs:
            for u, d in run.found.items():
                per_user.setdefault(u, {})[(run.layer_id, run.method)] = d
        out = np.empty((len(users), N_FEATURES))
        for row, user in enumerate(users):
            prov = candidates.provenance.get(user)
            found = per_user.get(user, {})
            partials = [self.layer_partial(user, lid, prov, found) for lid in candidates.layers]
            agg = aggregate_layers([p for p in partials if p]) if any(partials) else {}
            feats = dict(self.static(user))
            feats.update({
                "LayerCount": float(len(prov.layers)) if prov else 0.0,
                "QueryKnowledge": self.query_knowledge(user, candidates.layers),
                "VisitCountContent": agg.get("VisitCountContent", 0.0),
                "VisitCountNetwork": agg.get("VisitCountNetwork", 0.0),
                "StepsContent": agg.get("StepsContent", SENTINEL),
                "StepsNetwork": agg.get("StepsNetwork", SENTINEL),
                "BetweennessPos": agg.get("BetweennessPos", SENTINEL),
                "BetweennessScore": agg.get("BetweennessScore", 0.0),
                "ScoreIndexTag": tag_stats.score.get(user, 0.0),
                "ScoreIndexText": text_stats.score.get(user, 0.0),
                "FrequencyIndexTag": float(tag_stats.freq.get(user, 0)),
                "FrequencyIndexText": float(text_stats.freq.get(user, 0)),
                "Eigenvector": agg.get("Eigenvector", 0.0),
                "PageRank": agg.get("PageRank", 0.0),
                "Closeness": agg.get("Closeness", 0.0),
                "Degree": agg.get("Degree", 0.0),
                "AvgWeights": agg.get("AvgWeights", 0.0),
            })
            out[row] = [feats[name] for name in FEATURE_NAMES]
        return out


def feature_mask(names: Iterable[str]) -> np.ndarray:
    mask = np.zeros(N_FEATURES, dtype=bool)
    for n in names:
        mask[FEATURE_INDEX[n]] = True
    return mask


def write_feature_table(rows: Iterable[tuple[int, int, int, np.ndarray]], stream: io.TextIOBase) -> None:
    """Tab-separated table: query id, user id, label, then every feature."""
    stream.write("\t".join(("query_id", "user_id", "label") + FEATURE_NAMES) + "\n")
    for qid, uid, label, vec in rows:
        stream.write("\t".join([str(qid), str(uid), str(label)] + [repr(float(v)) for v in vec]) + "\n")


def read_feature_table(stream: io.TextIOBase) -> list[tuple[int, int, int, np.ndarray]]:
    header = stream.readline().rstrip("\n").split("\t")
    if tuple(header[3:]) != FEATURE_NAMES:
        raise ValueError("feature table header does not match the feature catalog")
    rows = []
    for line in stream:
        parts = line.rstrip("\n").split("\t")
        rows.append((int(parts[0]), int(parts[1]), int(parts[2]), np.array([float(v) for v in parts[3:]])))
    return rows
