"""Configuration, staged artifacts and end-to-end orchestration."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import eval as ev
from . import topics
from .features import (CONTENT_ONLY_FEATURES, FEATURE_NAMES, NETWORK_ONLY_FEATURES, SENTINEL,
                       FeatureExtractor, feature_mask)
from .ingest import Dataset, Question, clean_and_split, dataset_from_dict, dataset_to_dict, parse_dump_files, parse_timestamp
from .mlg import MultiLayerGraph, build_graph
from .ranker import (Hyperparams, InterpretableEnsemble, LinearScorer, LtrTrainingSet, Model, TuningConfig,
                     build_training_set, model_from_dict, rank_by_score, train_interpretable,
                     train_lambdamart, tune)
from .ranker.linear import parse_weights
from .ranker.training_set import recent_expert_queries
from .retrieval import Indexes, build_indexes
from .selection import CONTENT, METHODS, NETWORK, CandidateSet, SelectionConfig, WalkConfig, select_candidates

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
GRAPH_MODES = ("multi-layer", "single-layer")
RANKERS = ("lambdamart", "interpretable", "linear")
FEATURE_SETS = ("all", "network", "content")
ABLATION_MODES = ("full", "BC", "BM25", "NB", "CB", "SL", "NoRW", "IlMart", "Lin")


class ConfigError(ValueError):
    pass


class ArtifactError(Exception):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # ingest
    split: float = 0.80
    period_start: str = ""
    period_end: str = ""
    # build
    n_feature_tags: int = 10
    k_min: int = 2
    k_max: int = 10
    cluster_restarts: int = 10
    epsilon: float = 90.0
    delta: float = 0.5
    expert_percentile: float = 95.0
    graph_mode: str = "multi-layer"
    seed: int = 0
    # selection
    top_n: int = 1000
    alpha: float = 0.001
    walks: int = 5
    max_steps: int = 10
    methods: tuple[str, ...] = METHODS
    explore: bool = True
    rng_seed: int = 0
    # ranking
    ranker: str = "lambdamart"
    feature_set: str = "all"
    ltr_cap: int = 50_000
    valid_fraction: float = 0.2
    tuning_trials: int = 10
    lr_range: tuple[float, float] = (0.0001, 0.15)
    leaves_range: tuple[int, int] = (50, 200)
    estimators_range: tuple[int, int] = (50, 150)
    depth_range: tuple[int, int] = (8, 15)
    min_data_range: tuple[int, int] = (150, 500)
    learning_rate: float = 0.1  # fixed hyperparameters, used when tuning_trials == 0
    num_leaves: int = 31
    n_estimators: int = 100
    max_depth: int = 8
    min_data_in_leaf: int = 20
    n_pairs: int = 10
    probe_trees: int = 20
    linear_weights: str = ""
    # evaluation
    subsample_size: int = 20
    subsample_seed: int = 0
    # execution; never part of an artifact
    threads: int = 1

    def __post_init__(self) -> None:
        validate(self)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def stage(self, name: str) -> dict:
        """Configuration keys that determine the artifact of stage ``name``."""
        d = self.to_dict()
        keys = [k for k in _STAGE_KEYS[name]]
        return {k: d[k] for k in keys}

    @property
    def selection(self) -> SelectionConfig:
        return SelectionConfig(alpha=self.alpha, top_n=self.top_n, methods=tuple(self.methods),
                               explore=self.explore,
                               walk=WalkConfig(self.walks, self.max_steps, self.rng_seed))

    @property
    def tuning(self) -> TuningConfig:
        return TuningConfig(self.lr_range, self.leaves_range, self.estimators_range, self.depth_range,
                            self.min_data_range, trials=max(self.tuning_trials, 1), seed=self.seed)

    @property
    def hyperparams(self) -> Hyperparams:
        return Hyperparams(learning_rate=self.learning_rate, num_leaves=self.num_leaves,
                           n_estimators=self.n_estimators, max_depth=self.max_depth,
                           min_data_in_leaf=self.min_data_in_leaf, seed=self.seed)

    @property
    def allowed_features(self) -> np.ndarray | None:
        if self.feature_set == "network":
            return feature_mask(NETWORK_ONLY_FEATURES)
        if self.feature_set == "content":
            return feature_mask(CONTENT_ONLY_FEATURES)
        return None


_INGEST_KEYS = ("split", "period_start", "period_end")
_BUILD_KEYS = _INGEST_KEYS + ("n_feature_tags", "k_min", "k_max", "cluster_restarts", "epsilon", "delta",
                              "expert_percentile", "graph_mode", "seed")
_TRAIN_KEYS = _BUILD_KEYS + (
    "top_n", "alpha", "walks", "max_steps", "methods", "explore", "rng_seed", "ranker", "feature_set",
    "ltr_cap", "valid_fraction", "tuning_trials", "lr_range", "leaves_range", "estimators_range",
    "depth_range", "min_data_range", "learning_rate", "num_leaves", "n_estimators", "max_depth",
    "min_data_in_leaf", "n_pairs", "probe_trees", "linear_weights")
_EVAL_KEYS = _TRAIN_KEYS + ("subsample_size", "subsample_seed")
_STAGE_KEYS = {"ingest": _INGEST_KEYS, "build": _BUILD_KEYS, "train": _TRAIN_KEYS, "evaluate": _EVAL_KEYS}


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(c: PipelineConfig) -> None:
    _check(0.0 < c.split < 1.0, f"split must be in (0, 1), got {c.split}")
    for name in ("period_start", "period_end"):
        value = getattr(c, name)
        if value:
            try:
                parse_timestamp(value)
            except ValueError as exc:
                raise ConfigError(f"{name} is not an ISO timestamp: {value!r}") from exc
    _check(c.n_feature_tags >= 1, "n_feature_tags must be >= 1")
    _check(1 <= c.k_min <= c.k_max, f"k range must satisfy 1 <= k_min <= k_max, got [{c.k_min}, {c.k_max}]")
    _check(c.cluster_restarts >= 1, "cluster_restarts must be >= 1")
    _check(0 < c.epsilon < 100, f"epsilon percentile must be in (0, 100), got {c.epsilon}")
    _check(0.0 <= c.delta <= 1.0, f"delta must be in [0, 1], got {c.delta}")
    _check(0 < c.expert_percentile <= 100, f"expert_percentile must be in (0, 100], got {c.expert_percentile}")
    _check(c.graph_mode in GRAPH_MODES, f"graph_mode must be one of {GRAPH_MODES}")
    _check(c.top_n >= 1, "top_n must be >= 1")
    _check(0.0 < c.alpha < 1.0, f"alpha must be in (0, 1), got {c.alpha}")
    _check(c.walks >= 0, "walks must be >= 0")
    _check(c.max_steps >= 1, "max_steps must be >= 1")
    _check(len(c.methods) >= 1 and set(c.methods) <= set(METHODS) and len(set(c.methods)) == len(c.methods),
           f"methods must be a non-empty subset of {METHODS}")
    _check(c.ranker in RANKERS, f"ranker must be one of {RANKERS}")
    _check(c.feature_set in FEATURE_SETS, f"feature_set must be one of {FEATURE_SETS}")
    _check(c.ltr_cap >= 1, "ltr_cap must be >= 1")
    _check(0.0 <= c.valid_fraction < 1.0, "valid_fraction must be in [0, 1)")
    _check(c.tuning_trials >= 0, "tuning_trials must be >= 0")
    for name in ("lr_range", "leaves_range", "estimators_range", "depth_range", "min_data_range"):
        rng = getattr(c, name)
        _check(len(rng) == 2 and 0 < rng[0] <= rng[1], f"{name} must be a positive [low, high] pair")
    _check(c.learning_rate > 0, "learning_rate must be > 0")
    _check(c.num_leaves >= 2, "num_leaves must be >= 2")
    _check(c.n_estimators >= 0, "n_estimators must be >= 0")
    _check(c.max_depth >= 1, "max_depth must be >= 1")
    _check(c.min_data_in_leaf >= 1, "min_data_in_leaf must be >= 1")
    _check(c.n_pairs >= 0, "n_pairs must be >= 0")
    _check(c.probe_trees >= 1, "probe_trees must be >= 1")
    if c.linear_weights:
        try:
            parse_weights(c.linear_weights, FEATURE_NAMES)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad linear_weights: {exc}") from exc
    _check(c.subsample_size >= 2, "subsample_size must be >= 2")
    _check(c.threads >= 1, "threads must be >= 1")


# ---------------------------------------------------------------------------
# flat key = value config files


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(name: str, raw, default):
    """Convert a textual value to the type of ``default``."""
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(default, tuple) else raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else str
            return tuple(kind(p.strip()) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot read {name}={raw!r}") from exc
    return text


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {n}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def make_config(overrides: dict | None = None, path: str | Path | None = None) -> PipelineConfig:
    """Defaults, then the config file, then ``overrides`` (flags win)."""
    defaults = {f.name: f.default for f in fields(PipelineConfig)}
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(values) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    typed = {k: coerce(k, v, defaults[k]) for k, v in values.items()}
    return PipelineConfig(**typed)


def config_from_stage(d: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    defaults = {f.name: f.default for f in fields(PipelineConfig)}
    return replace(base, **{k: coerce(k, v, defaults[k]) for k, v in d.items()})


# ---------------------------------------------------------------------------
# artifacts


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=ev._jsonable)


def digest_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_artifact(path: str | Path, kind: str, config: dict, lineage: dict, payload: dict) -> str:
    doc = {"artifact": kind, "version": ARTIFACT_VERSION, "config": config, "lineage": lineage,
           "payload": payload}
    data = canonical_json(doc).encode("utf-8")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(data)
    return digest_bytes(data)


def read_artifact(path: str | Path, kind: str, hint: str = "") -> tuple[dict, str]:
    p = Path(path)
    if not p.exists():
        raise ArtifactError(f"{kind} artifact not found at {p}" + (f"; {hint}" if hint else ""))
    data = p.read_bytes()
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{p} is not a valid artifact: {exc}") from exc
    if doc.get("artifact") != kind:
        raise ArtifactError(f"{p} holds a {doc.get('artifact')!r} artifact, expected {kind!r}")
    if doc.get("version") != ARTIFACT_VERSION:
        raise ArtifactError(f"{p} has artifact version {doc.get('version')}, expected {ARTIFACT_VERSION}")
    return doc, digest_bytes(data)


def check_lineage(doc: dict, parent: str, expected_digest: str, path: str | Path) -> None:
    got = doc.get("lineage", {}).get(parent)
    if got != expected_digest:
        raise ArtifactError(
            f"{path} was produced from a different {parent} artifact "
            f"(recorded {str(got)[:12]}, found {expected_digest[:12]}); rebuild the downstream stages")


# ---------------------------------------------------------------------------
# parallel helper


def parallel_map(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map; results do not depend on ``threads``."""
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# stages


def run_ingest(posts_path, users_path, cfg: PipelineConfig) -> tuple[Dataset, dict]:
    posts, users = parse_dump_files(posts_path, users_path)
    period = (parse_timestamp(cfg.period_start) if cfg.period_start else None,
              parse_timestamp(cfg.period_end) if cfg.period_end else None)
    ds = clean_and_split(posts, users, period, cfg.split)
    stats = {"train_questions": len(ds.train_questions), "test_questions": len(ds.test_questions),
             "users": len(ds.users)}
    return ds, stats


def save_dataset_artifact(ds: Dataset, path, cfg: PipelineConfig, stats: dict | None = None) -> str:
    payload = dataset_to_dict(ds)
    payload["stats"] = stats or {}
    return write_artifact(path, "dataset", cfg.stage("ingest"), {}, payload)


def load_dataset_artifact(path) -> tuple[Dataset, dict, str]:
    doc, digest = read_artifact(path, "dataset", "run `tuef ingest` first")
    return dataset_from_dict(doc["payload"]), doc, digest


@dataclass
class BuildResult:
    graph: MultiLayerGraph
    indexes: Indexes
    stats: dict

    def to_payload(self) -> dict:
        return {"graph": self.graph.to_dict(), "indexes": self.indexes.to_dict(), "stats": self.stats}

    @classmethod
    def from_payload(cls, p: dict) -> "BuildResult":
        return cls(MultiLayerGraph.from_dict(p["graph"]), Indexes.from_dict(p["indexes"]), p.get("stats", {}))


def run_build(ds: Dataset, cfg: PipelineConfig) -> BuildResult:
    vocab = topics.build_vocabulary(ds.train_questions, cfg.n_feature_tags)
    if cfg.graph_mode == "single-layer":
        clustering = topics.single_layer(vocab.all_tags)
    else:
        matrix = topics.build_matrix(vocab, ds.train_questions)
        clustering = topics.cluster(matrix, vocab.all_tags, (cfg.k_min, cfg.k_max), cfg.seed,
                                    restarts=cfg.cluster_restarts)
    graph = build_graph(ds, clustering, cfg.epsilon, cfg.delta, cfg.expert_percentile)
    indexes = build_indexes(ds.train_questions, graph.labeling.experts)
    stats = {
        "tags": len(vocab.all_tags),
        "feature_tags": list(vocab.feature_tags),
        "clusters": clustering.k,
        "silhouette": clustering.silhouette,
        "min_accepted": graph.labeling.min_accepted,
        "candidates": len(graph.labeling.candidates),
        "experts": len(graph.labeling.experts),
        "layer_nodes": [len(layer.nodes) for layer in graph.layers],
        "layer_edges": [len(layer.edges()) for layer in graph.layers],
        "indexed_questions": indexes.text.n_docs,
    }
    return BuildResult(graph, indexes, stats)


class Engine:
    """Selection plus feature extraction over one built graph."""

    def __init__(self, ds: Dataset, build: BuildResult, cfg: PipelineConfig):
        self.ds = ds
        self.build = build
        self.cfg = cfg
        self.extractor = FeatureExtractor(ds, build.graph)

    @property
    def graph(self) -> MultiLayerGraph:
        return self.build.graph

    def candidates(self, qid: int, title: str, body: str, tags: Sequence[str],
                   exclude: Iterable[int] = ()) -> CandidateSet:
        return select_candidates(qid, title, body, tags, self.graph, self.build.indexes,
                                 self.cfg.selection, exclude_questions=exclude)

    def question_candidates(self, q: Question, exclude_self: bool = False) -> CandidateSet:
        return self.candidates(q.question_id, q.title, q.body, q.tags,
                               (q.question_id,) if exclude_self else ())

    def featurize(self, cands: CandidateSet, users: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        users = np.asarray(cands.experts if users is None else list(users), dtype=np.int64)
        return users, self.extractor.vectors(cands, users.tolist())


def _group_mrr(model: Model, ts: LtrTrainingSet) -> float:
    if not ts.groups:
        return 0.0
    x, _, sizes = ts.arrays()
    scores = np.split(model.predict(x), np.cumsum(sizes)[:-1])
    total = 0.0
    for g, s in zip(ts.groups, scores):
        order = rank_by_score(g.users.tolist(), s)
        total += 1.0 / (order.index(int(g.users[int(np.argmax(g.labels))])) + 1)
    return total / len(ts.groups)


def fit_model(ts: LtrTrainingSet, cfg: PipelineConfig) -> tuple[Model, dict]:
    names = FEATURE_NAMES
    if cfg.ranker == "linear":
        model = LinearScorer(parse_weights(cfg.linear_weights or None, names), names)
        return model, {"valid_mrr": _group_mrr(model, ts.split()[1])}
    train, valid = ts.split()
    mask = cfg.allowed_features

    def fit(hp: Hyperparams) -> Model:
        x, y, sizes = train.arrays()
        if cfg.ranker == "interpretable":
            return train_interpretable(x, y, sizes, hp, cfg.n_pairs, names, mask, cfg.probe_trees)
        return train_lambdamart(x, y, sizes, hp, names, mask)

    if cfg.tuning_trials == 0:
        model = fit(cfg.hyperparams)
        return model, {"valid_mrr": _group_mrr(model, valid), "train_mrr": _group_mrr(model, train),
                       "trials": []}

    fitted: list[Model] = []

    def objective(hp: Hyperparams):
        m = fit(hp)
        fitted.append(m)
        v = _group_mrr(m, valid) if valid.groups else _group_mrr(m, train)
        return v, _group_mrr(m, train)

    result = tune(objective, cfg.tuning, cfg.hyperparams)
    best = next(i for i, t in enumerate(result.trials) if t.params is result.best)
    info = {
        "best_trial": best,
        "trials": [{"params": t.params.to_dict(), "valid_mrr": t.valid_mrr, "train_mrr": t.train_mrr}
                   for t in result.trials],
        "valid_mrr": result.trials[best].valid_mrr,
    }
    return fitted[best], info


def run_train(ds: Dataset, build: BuildResult, cfg: PipelineConfig) -> tuple[Model, dict]:
    engine = Engine(ds, build, cfg)
    experts = build.graph.labeling.experts
    queries = recent_expert_queries(ds.train_questions, experts, cfg.ltr_cap)

    def featurize(q: Question):
        return engine.featurize(engine.question_candidates(q, exclude_self=True))

    feats = dict(zip([q.question_id for q in queries], parallel_map(featurize, queries, cfg.threads)))
    ts = build_training_set(queries, experts, lambda q: feats[q.question_id], cfg.ltr_cap, cfg.valid_fraction)
    model, info = fit_model(ts, cfg)
    info["training_set"] = ts.stats
    return model, info


# ---------------------------------------------------------------------------
# systems: trained models and the non-learned orderings


class System:
    """Ranks a question; ``rank_users`` restricts ranking to a fixed user set."""

    name = "system"

    def rank(self, q: Question) -> list[int]:
        raise NotImplementedError

    def rank_users(self, q: Question, users: Sequence[int]) -> list[int]:
        raise NotImplementedError


class ModelSystem(System):
    def __init__(self, engine: Engine, model: Model, name: str = "TUEF"):
        self.engine = engine
        self.model = model
        self.name = name

    def score(self, cands: CandidateSet, users: Sequence[int] | None = None):
        users, x = self.engine.featurize(cands, users)
        return users, x, (self.model.predict(x) if len(users) else np.zeros(0))

    def rank(self, q: Question) -> list[int]:
        users, _, s = self.score(self.engine.question_candidates(q))
        return rank_by_score(users.tolist(), s)

    def rank_users(self, q: Question, users: Sequence[int]) -> list[int]:
        u, _, s = self.score(self.engine.question_candidates(q), users)
        return rank_by_score(u.tolist(), s)


class BetweennessSystem(System):
    """Experts in the query's layers ordered by their highest betweenness."""

    name = "BC"

    def __init__(self, engine: Engine):
        self.engine = engine

    def _scores(self, q: Question) -> dict[int, float]:
        g = self.engine.graph
        best: dict[int, float] = {}
        for lid in g.query_layers(q.tags):
            layer = g.layers[lid]
            btw = layer.stats["betweenness"]
            for i, u in enumerate(layer.nodes):
                if g.is_expert(u):
                    best[u] = max(best.get(u, -np.inf), float(btw[i]))
        return best

    def rank(self, q: Question) -> list[int]:
        s = self._scores(q)
        return rank_by_score(list(s), np.array(list(s.values())))

    def rank_users(self, q: Question, users: Sequence[int]) -> list[int]:
        s = self._scores(q)
        return rank_by_score(list(users), np.array([s.get(u, -1.0) for u in users]))


class ContentSystem(System):
    """The merged tag/text retrieval ordering of expert answerers."""

    name = "BM25"

    def __init__(self, engine: Engine):
        self.engine = engine

    def _order(self, q: Question) -> list[int]:
        from .retrieval import retrieve
        cfg = self.engine.cfg
        return retrieve(self.engine.build.indexes, q.title, q.body, q.tags, cfg.top_n).expert_order()

    def rank(self, q: Question) -> list[int]:
        return self._order(q)

    def rank_users(self, q: Question, users: Sequence[int]) -> list[int]:
        pos = {u: i for i, u in enumerate(self._order(q))}
        return rank_by_score(list(users), np.array([-pos.get(u, SENTINEL) for u in users], dtype=float))


def evaluation_pool(ds: Dataset, graph: MultiLayerGraph) -> list[Question]:
    """Test questions whose accepted answerer is a labeled expert."""
    return [q for q in ds.test_questions if graph.is_expert(q.accepted_user_id)]


def evaluate_expert_ranking(system: System, queries: Sequence[Question], threads: int = 1) -> ev.MetricReport:
    ranked = dict(zip([q.question_id for q in queries], parallel_map(system.rank, queries, threads)))
    experts = {q.accepted_user_id for q in queries}
    return ev.expert_ranking_protocol(queries, experts, lambda q: ranked[q.question_id], system.name)


def make_plans(engine: Engine, queries: Sequence[Question], cfg: PipelineConfig,
               threads: int = 1) -> list[ev.SubsamplePlan]:
    """Plans for queries whose candidate set contains the accepted answerer."""
    cands = parallel_map(engine.question_candidates, queries, threads)
    plans = []
    for q, c in zip(queries, cands):
        if q.accepted_user_id not in c:
            continue
        answerers = [a.owner_user_id for a in engine.ds.answers.get(q.question_id, ())]
        plans.append(ev.make_subsample_plan(q.question_id, answerers, q.accepted_user_id, c.experts,
                                            cfg.subsample_size, cfg.subsample_seed))
    return plans


def evaluate_subsample(system: System, ds: Dataset, plans: Sequence[ev.SubsamplePlan],
                       threads: int = 1) -> ev.MetricReport:
    def run(plan: ev.SubsamplePlan) -> list[int]:
        return system.rank_users(ds.question(plan.query_id), plan.users)

    ranked = dict(zip([p.query_id for p in plans], parallel_map(run, plans, threads)))
    return ev.subsample_protocol(plans, lambda p: ranked[p.query_id], system.name)


# ---------------------------------------------------------------------------
# ablation matrix


def mode_config(mode: str, cfg: PipelineConfig) -> PipelineConfig:
    if mode not in ABLATION_MODES:
        raise ConfigError(f"unknown ablation mode {mode!r}; choose from {ABLATION_MODES}")
    if mode == "NB":
        return replace(cfg, methods=(NETWORK,), feature_set="network")
    if mode == "CB":
        return replace(cfg, methods=(CONTENT,), feature_set="content")
    if mode == "SL":
        return replace(cfg, graph_mode="single-layer")
    if mode == "NoRW":
        return replace(cfg, explore=False)
    if mode == "IlMart":
        return replace(cfg, ranker="interpretable")
    if mode == "Lin":
        return replace(cfg, ranker="linear")
    return cfg


@dataclass
class AblationResult:
    reports: dict[str, ev.MetricReport]
    significance: dict
    table: str
    subsample: dict[str, ev.MetricReport]
    timings: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "subsample": {k: r.to_dict() for k, r in self.subsample.items()},
            "significance": self.significance,
        }


def run_ablation(ds: Dataset, cfg: PipelineConfig, modes: Sequence[str] = ABLATION_MODES,
                 subsample: bool = False, reference: str = "full") -> AblationResult:
    """Train and evaluate every mode on one shared test pool."""
    builds: dict[str, BuildResult] = {}
    reports: dict[str, ev.MetricReport] = {}
    sub: dict[str, ev.MetricReport] = {}
    timings: dict[str, float] = {}
    base_build = None
    pool: list[Question] | None = None
    plans: list[ev.SubsamplePlan] | None = None
    for mode in dict.fromkeys([reference] + list(modes)):
        t0 = time.perf_counter()
        mcfg = mode_config(mode, cfg)
        key = canonical_json(mcfg.stage("build"))
        if key not in builds:
            builds[key] = run_build(ds, mcfg)
        build = builds[key]
        if base_build is None:
            base_build = build
            pool = evaluation_pool(ds, build.graph)
        engine = Engine(ds, build, mcfg)
        if mode == "BC":
            system: System = BetweennessSystem(engine)
        elif mode == "BM25":
            system = ContentSystem(engine)
        else:
            model, _ = run_train(ds, build, mcfg)
            system = ModelSystem(engine, model, mode)
        system.name = mode
        reports[mode] = evaluate_expert_ranking(system, pool, cfg.threads)
        if subsample:
            if plans is None:
                plans = make_plans(engine, pool, cfg, cfg.threads)
            sub[mode] = evaluate_subsample(system, ds, plans, cfg.threads)
        timings[mode] = time.perf_counter() - t0
        logger.info("mode %s done in %.1fs: %s", mode, timings[mode], reports[mode].means)
    others = [r for m, r in reports.items() if m != reference]
    sig = ev.significance_matrix(reports[reference], others) if others and len(pool) >= 2 else {}
    marks = {name: {m: ("*" if v["significant"] else " ") for m, v in per.items()} for name, per in sig.items()}
    table = ev.format_table(list(reports.values()), marks)
    return AblationResult(reports, sig, table, sub, timings)


def model_payload(model: Model) -> dict:
    return model.to_dict()


def load_model(payload: dict) -> Model:
    return model_from_dict(payload)


def explain(model: Model, x: np.ndarray) -> list[dict] | None:
    """Per-effect contributions for interpretable models, else None."""
    if not isinstance(model, InterpretableEnsemble):
        return None
    contrib = model.contributions(x)
    return [{model.effect_name(eff): float(v[i]) for eff, v in sorted(contrib.items())} for i in range(len(x))]
