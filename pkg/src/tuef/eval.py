"""Single-relevant ranking metrics, evaluation protocols and significance tests."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

METRICS = ("P@1", "NDCG@3", "R@5", "MRR")


@dataclass(frozen=True)
class RankedList:
    query_id: int
    experts: tuple[int, ...]
    truth: int

    def __post_init__(self) -> None:
        if len(set(self.experts)) != len(self.experts):
            raise ValueError(f"duplicate experts in ranked list for query {self.query_id}")

    @property
    def rank(self) -> int | None:
        try:
            return self.experts.index(self.truth) + 1
        except ValueError:
            return None


def metric_values(rank: int | None) -> dict[str, float]:
    if rank is None:
        return {m: 0.0 for m in METRICS}
    return {
        "P@1": 1.0 if rank == 1 else 0.0,
        "NDCG@3": 1.0 / math.log2(rank + 1) if rank <= 3 else 0.0,
        "R@5": 1.0 if rank <= 5 else 0.0,
        "MRR": 1.0 / rank,
    }


@dataclass
class MetricReport:
    query_ids: list[int]
    per_query: dict[str, np.ndarray]
    misses: int
    name: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def n_queries(self) -> int:
        return len(self.query_ids)

    @property
    def means(self) -> dict[str, float]:
        return {m: (float(self.per_query[m].mean()) if self.n_queries else 0.0) for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "queries": self.n_queries,
            "misses": self.misses,
            "means": self.means,
            "per_query": {m: self.per_query[m].tolist() for m in METRICS},
            "query_ids": self.query_ids,
            "extra": self.extra,
        }


def metrics(lists: Sequence[RankedList], name: str = "") -> MetricReport:
    per = {m: np.zeros(len(lists)) for m in METRICS}
    misses = 0
    for i, rl in enumerate(lists):
        r = rl.rank
        misses += r is None
        for m, v in metric_values(r).items():
            per[m][i] = v
    return MetricReport([rl.query_id for rl in lists], per, misses, name)


# ---------------------------------------------------------------------------
# significance


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant: bool
    alpha: float
    num_comparisons: int


def paired_ttest_bonferroni(a: Sequence[float], b: Sequence[float], num_comparisons: int = 1,
                            alpha: float = 0.05) -> TTestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired arrays must be aligned 1-d sequences")
    if len(a) < 2:
        raise ValueError("a paired t-test needs at least two pairs")
    if num_comparisons < 1:
        raise ValueError("num_comparisons must be >= 1")
    d = a - b
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    level = alpha / num_comparisons
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False, level, num_comparisons)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True, level, num_comparisons)
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * sps.t.sf(abs(t), n - 1))
    return TTestResult(t, p, p < level, level, num_comparisons)


# ---------------------------------------------------------------------------
# protocols

# A ranker takes (query, candidate users) and returns users ordered best first.
Ranker = Callable[[object, Sequence[int]], Sequence[int]]


def expert_ranking_protocol(queries: Iterable, experts: Iterable[int],
                            rank_query: Callable[[object], Sequence[int]],
                            name: str = "") -> MetricReport:
    """End-to-end protocol over test queries whose accepted answerer is a labeled expert."""
    experts = set(experts)
    lists = []
    for q in queries:
        if q.accepted_user_id not in experts:
            continue
        lists.append(RankedList(q.question_id, tuple(rank_query(q)), q.accepted_user_id))
    return metrics(lists, name)


@dataclass
class SubsamplePlan:
    query_id: int
    users: tuple[int, ...]
    truth: int
    seed: int

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "users": list(self.users), "truth": self.truth, "seed": self.seed}


def make_subsample_plan(query_id: int, answerers: Sequence[int], truth: int, pool: Sequence[int],
                        size: int = 20, seed: int = 0) -> SubsamplePlan:
    """Actual answerers (best answerer first) plus a random fill drawn from ``pool``."""
    users = [truth] + [u for u in dict.fromkeys(answerers) if u != truth]
    users = users[:size]
    rest = sorted(set(pool) - set(users))
    need = size - len(users)
    if need > 0 and rest:
        rng = np.random.default_rng([seed, query_id & 0xFFFFFFFF])
        pick = rng.choice(len(rest), size=min(need, len(rest)), replace=False)
        users.extend(rest[i] for i in sorted(pick))
    return SubsamplePlan(query_id, tuple(sorted(users)), truth, seed)


def subsample_protocol(plans: Sequence[SubsamplePlan], rank_plan: Callable[[SubsamplePlan], Sequence[int]],
                       name: str = "") -> MetricReport:
    lists = [RankedList(p.query_id, tuple(rank_plan(p)), p.truth) for p in plans]
    report = metrics(lists, name)
    report.extra["plan_sizes"] = [len(p.users) for p in plans]
    return report


def random_ranking_mrr(n_candidates: int) -> float:
    """Expected reciprocal rank of the single relevant item under a uniform shuffle."""
    return sum(1.0 / k for k in range(1, n_candidates + 1)) / n_candidates


# ---------------------------------------------------------------------------
# timing


@dataclass
class LatencyReport:
    samples: list[float]

    @property
    def count(self) -> int:
        return len(self.samples)

    def summary(self) -> dict:
        if not self.samples:
            return {"count": 0}
        arr = np.asarray(self.samples)
        return {
            "count": len(arr),
            "mean": float(arr.sum() / len(arr)),
            "median": float(np.median(arr)),
            "p95": float(np.percentile(arr, 95)),
            "total": float(arr.sum()),
        }


def timing_harness(run_query: Callable[[object], object], queries: Iterable,
                   clock: Callable[[], float] = time.perf_counter) -> LatencyReport:
    samples = []
    for q in queries:
        t0 = clock()
        run_query(q)
        samples.append(clock() - t0)
    return LatencyReport(samples)


# ---------------------------------------------------------------------------
# reporting


def format_table(reports: Sequence[MetricReport], marks: Mapping[str, Mapping[str, str]] | None = None) -> str:
    marks = marks or {}
    width = max([len(r.name) for r in reports] + [10])
    lines = [f"{'model':<{width}}  " + "  ".join(f"{m:>8}" for m in METRICS) + f"  {'queries':>7}  {'misses':>6}"]
    for r in reports:
        means = r.means
        cells = []
        for m in METRICS:
            mark = marks.get(r.name, {}).get(m, " ")
            cells.append(f"{means[m]:>7.3f}{mark}")
        lines.append(f"{r.name:<{width}}  " + "  ".join(cells) + f"  {r.n_queries:>7}  {r.misses:>6}")
    return "\n".join(lines)


def significance_matrix(reference: MetricReport, others: Sequence[MetricReport],
                        num_comparisons: int | None = None) -> dict[str, dict[str, dict]]:
    """Paired tests of the reference against every other report, per metric."""
    k = num_comparisons if num_comparisons is not None else max(len(others), 1)
    out: dict[str, dict[str, dict]] = {}
    for rep in others:
        if rep.query_ids != reference.query_ids:
            raise ValueError(f"report {rep.name!r} is not aligned with {reference.name!r}")
        out[rep.name] = {}
        for m in METRICS:
            res = paired_ttest_bonferroni(reference.per_query[m], rep.per_query[m], k)
            out[rep.name][m] = {"t": res.t, "p": res.p, "significant": res.significant,
                                "num_comparisons": k}
    return out


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, default=_jsonable)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(f"cannot serialize {type(o)}")

