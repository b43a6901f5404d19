"""Per-layer candidate expert selection: sorting, probability-driven collection,
and weighted random-walk exploration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mlg import Layer, MultiLayerGraph
from .retrieval import Indexes, RetrievalResult, retrieve

NETWORK = "network"
CONTENT = "content"
METHODS = (NETWORK, CONTENT)
_METHOD_CODE = {NETWORK: 0, CONTENT: 1}


@dataclass(frozen=True)
class WalkConfig:
    walks_per_seed: int = 5
    max_steps: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.walks_per_seed < 0:
            raise ValueError("walks_per_seed must be >= 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class SortedNodes:
    layer_id: int
    method: str
    users: list[int]
    scores: list[float]


@dataclass
class Discovery:
    """What one (layer, method) run learned about one expert."""

    visits: int = 0
    step: int | None = None

    def hit(self, step: int) -> None:
        self.visits += 1
        if self.step is None or step < self.step:
            self.step = step


@dataclass
class MethodRun:
    layer_id: int
    method: str
    seeds: list[int]
    p_final: float
    found: dict[int, Discovery]


@dataclass
class Provenance:
    visits: dict[str, int] = field(default_factory=lambda: {m: 0 for m in METHODS})
    steps: dict[str, int | None] = field(default_factory=lambda: {m: None for m in METHODS})
    layers: set[int] = field(default_factory=set)
    methods: set[str] = field(default_factory=set)

    def merge(self, layer_id: int, method: str, d: Discovery) -> None:
        self.visits[method] += d.visits
        cur = self.steps[method]
        if d.step is not None and (cur is None or d.step < cur):
            self.steps[method] = d.step
        self.layers.add(layer_id)
        self.methods.add(method)


@dataclass
class CandidateSet:
    query_id: int
    layers: tuple[int, ...]
    runs: list[MethodRun]
    provenance: dict[int, Provenance]
    retrieval: RetrievalResult | None = None

    @property
    def experts(self) -> list[int]:
        return sorted(self.provenance)

    def __contains__(self, user: int) -> bool:
        return user in self.provenance

    def __len__(self) -> int:
        return len(self.provenance)


# ---------------------------------------------------------------------------
# sorting


def network_order(layer: Layer) -> SortedNodes:
    users = layer.betweenness_order()
    btw = layer.stats["betweenness"]
    return SortedNodes(layer.layer_id, NETWORK, users, [float(btw[layer.index(u)]) for u in users])


def content_order(layer: Layer, merged_experts: Sequence[int]) -> SortedNodes:
    users = [u for u in merged_experts if u in layer]
    return SortedNodes(layer.layer_id, CONTENT, users, [float(-i) for i in range(len(users))])


# ---------------------------------------------------------------------------
# collection and exploration


def smoothed_acceptance(user: int, layer: Layer, ratio: float) -> float:
    """Global acceptance ratio scaled by the user's share of the layer's top answer count."""
    top = layer.max_answers
    return ratio * (layer.answers.get(user, 0) / top) if top else 0.0


def collect(sorted_nodes: SortedNodes, layer: Layer, graph: MultiLayerGraph,
            alpha: float = 0.001) -> tuple[dict[int, Discovery], float, list[float]]:
    """Scan the sorted nodes accumulating experts until the no-answer
    probability falls to ``alpha``. Returns discoveries, final p and the p trace."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    p = 1.0
    trace: list[float] = []
    found: dict[int, Discovery] = {}
    for rank, user in enumerate(sorted_nodes.users, start=1):
        if not graph.is_expert(user):
            continue
        mu = smoothed_acceptance(user, layer, graph.activity.ratio(user))
        p *= 1.0 - mu
        trace.append(p)
        found.setdefault(user, Discovery()).hit(rank)
        if p <= alpha:
            break
    return found, p, trace


def collect_from_ratios(mus: Sequence[float], alpha: float) -> tuple[int, float]:
    """Collection rule on bare smoothed ratios: (experts taken, final p)."""
    p = 1.0
    for n, mu in enumerate(mus, start=1):
        p *= 1.0 - mu
        if p <= alpha:
            return n, p
    return len(mus), p


def walk_rng(cfg: WalkConfig, query_id: int, layer_id: int, method: str, seed_index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, query_id & 0xFFFFFFFF, layer_id, _METHOD_CODE[method], seed_index])


def random_walk(layer: Layer, start: int, n_steps: int, rng: np.random.Generator) -> list[int]:
    """Node indices visited after ``start`` (excluded); stops early at an isolated node."""
    path = []
    cur = start
    draws = rng.random(n_steps)
    for t in range(n_steps):
        nbr, cum = layer.neighbors(cur)
        if not len(nbr):
            break
        cur = int(nbr[min(int(np.searchsorted(cum, draws[t], side="right")), len(nbr) - 1)])
        path.append(cur)
    return path


def random_walk_expand(layer: Layer, graph: MultiLayerGraph, seeds: dict[int, Discovery],
                       cfg: WalkConfig, query_id: int = 0, method: str = NETWORK) -> dict[int, Discovery]:
    """Add every expert met on ``walks_per_seed`` walks from each seed.

    Steps of explored experts are the seed-set size plus the walk step.
    """
    found = {u: Discovery(d.visits, d.step) for u, d in seeds.items()}
    base = len(seeds)
    for s_idx, seed_user in enumerate(seeds):
        start = layer.index(seed_user)
        if start is None:
            continue
        rng = walk_rng(cfg, query_id, layer.layer_id, method, s_idx)
        for _ in range(cfg.walks_per_seed):
            for t, node in enumerate(random_walk(layer, start, cfg.max_steps, rng), start=1):
                user = layer.nodes[node]
                if graph.is_expert(user):
                    found.setdefault(user, Discovery()).hit(base + t)
    return found


# ---------------------------------------------------------------------------
# full selection


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.001
    top_n: int = 1000
    methods: tuple[str, ...] = METHODS
    explore: bool = True
    walk: WalkConfig = WalkConfig()


def select_candidates(
    query_id: int,
    title: str,
    body: str,
    tags: Sequence[str],
    graph: MultiLayerGraph,
    indexes: Indexes,
    cfg: SelectionConfig = SelectionConfig(),
    exclude_questions: Iterable[int] = (),
    retrieval: RetrievalResult | None = None,
) -> CandidateSet:
    layers = graph.query_layers(tags)
    if retrieval is None:
        retrieval = retrieve(indexes, title, body, tags, cfg.top_n, exclude_questions)
    merged = retrieval.expert_order() if CONTENT in cfg.methods else []
    runs: list[MethodRun] = []
    provenance: dict[int, Provenance] = {}
    for lid in layers:
        layer = graph.layers[lid]
        if not layer.nodes:
            continue
        for method in METHODS:
            if method not in cfg.methods:
                continue
            order = network_order(layer) if method == NETWORK else content_order(layer, merged)
            seeds, p, _ = collect(order, layer, graph, cfg.alpha)
            found = (random_walk_expand(layer, graph, seeds, cfg.walk, query_id, method)
                     if cfg.explore and cfg.walk.walks_per_seed > 0 else seeds)
            runs.append(MethodRun(lid, method, list(seeds), p, found))
            for user, d in found.items():
                provenance.setdefault(user, Provenance()).merge(lid, method, d)
    return CandidateSet(query_id, layers, runs, dict(sorted(provenance.items())), retrieval)
