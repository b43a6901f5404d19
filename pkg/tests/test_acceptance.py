"""Acceptance criteria, one check per criterion.

Each check returns ``(passed, detail)``. Under pytest every criterion is a
test and a one-line PASS/FAIL summary is printed after the run; executed as
a script, the same lines go to stdout.
"""

from __future__ import annotations

import contextlib
import dataclasses
import io
import json
import os
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import (betweenness_bruteforce, experts_oracle, metrics_bruteforce,  # noqa: E402
                     pagerank_dense, silhouette_pairwise)
from tuef import centrality, pipeline as pl  # noqa: E402
from tuef.eval import METRICS, RankedList, make_subsample_plan, metrics, subsample_protocol  # noqa: E402
from tuef.mlg import UserActivity, build_layers, label_experts  # noqa: E402
from tuef.ranker import InterpretableEnsemble  # noqa: E402
from tuef.ranker.interpretable import lookup_table  # noqa: E402
from tuef.selection import collect_from_ratios, random_walk  # noqa: E402
from tuef.synthetic import SyntheticConfig, generate  # noqa: E402
from tuef.topics import TagClustering, build_matrix, build_vocabulary, silhouette  # noqa: E402

RESULTS: list[str] = []

# planted corpus: ~2,000 questions; retrieval depth scaled to the ~600-question index
PLANTED_TOP_N = 50


def record(number: int, title: str, passed: bool, detail: str) -> None:
    RESULTS.append(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {title} | {detail}")


# ---------------------------------------------------------------------------
# 1. formula-level suite


def check_formulas() -> tuple[bool, str]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    fails = []

    # co-occurrence rows are stochastic
    from types import SimpleNamespace
    tags = [f"g{i}" for i in range(30)]
    qs = [SimpleNamespace(tags=tuple(rng.choice(tags, size=int(rng.integers(1, 5)), replace=False)))
          for _ in range(500)]
    m = build_matrix(build_vocabulary(qs, 10), qs)
    sums = m.normalized.sum(axis=1)[m.nonzero_rows]
    if not np.all(np.abs(sums - 1.0) < 1e-9):
        fails.append("row sums")

    # topic vectors normalized over every layer
    from tuef.ingest import RawPost, clean_and_split
    posts, pid = [], 1
    for i in range(300):
        qt = tuple(rng.choice(list("abcdef"), size=int(rng.integers(1, 4)), replace=False))
        users = rng.choice(np.arange(1, 20), size=2, replace=False)
        posts.append(RawPost(pid, "question", 999, float(i), accepted_answer_id=pid + 1, tags=qt))
        posts.append(RawPost(pid + 1, "answer", int(users[0]), float(i) + 1, parent_id=pid))
        posts.append(RawPost(pid + 2, "answer", int(users[1]), float(i) + 2, parent_id=pid))
        pid += 3
    ds = clean_and_split(posts, [])
    ds = dataclasses.replace(ds, train_questions=ds.questions, test_questions=())
    assign = {"a": 0, "b": 0, "c": 1, "d": 1, "e": 2, "f": 2}
    clust = TagClustering(3, assign, np.zeros((3, 1)), 0.0)
    totals: dict[int, float] = {}
    for layer in build_layers(ds, clust, epsilon=1):
        for u, v in zip(layer.nodes, layer.vectors):
            totals[u] = totals.get(u, 0.0) + float(v.sum())
    if not totals or any(abs(s - 1.0) > 1e-9 for s in totals.values()):
        fails.append("topic-vector normalization")

    # expert labeling against the mean-then-filter oracle
    for _ in range(200):
        n = int(rng.integers(1, 40))
        acc = {u: int(rng.integers(1, 30)) for u in range(n)}
        ans = {u: acc[u] + int(rng.integers(0, 30)) for u in range(n)}
        want = experts_oracle(acc, ans, 95.0)
        try:
            got = set(label_experts(UserActivity(ans, acc, {}), 95.0).experts)
        except Exception:
            got = set()
        if got != want:
            fails.append("expert labeling")
            break

    # collection stops after three 0.9 experts
    n, p = collect_from_ratios([0.9, 0.9, 0.9, 0.9], 0.001)
    if n != 3 or abs(p - 0.001) > 1e-12:
        fails.append(f"collection stop n={n} p={p}")

    # next-hop distribution and sampled frequencies
    from graphs import make_layer
    w = np.zeros((3, 3))
    w[0, 1] = w[1, 0] = 1.0
    w[0, 2] = w[2, 0] = 3.0
    layer = make_layer([1, 2, 3], w)
    nbr, cum = layer.neighbors(0)
    probs = np.diff(np.concatenate([[0.0], cum]))
    walk_rng = np.random.default_rng(7)
    hops = np.array([random_walk(layer, 0, 1, walk_rng)[0] for _ in range(100_000)])
    freq = [float(np.mean(hops == 1)), float(np.mean(hops == 2))]
    if abs(probs.sum() - 1.0) > 1e-12 or abs(freq[0] - 0.25) > 0.01 or abs(freq[1] - 0.75) > 0.01:
        fails.append(f"walk frequencies {freq}")

    elapsed = time.perf_counter() - t0
    if elapsed >= 10:
        fails.append(f"runtime {elapsed:.1f}s")
    return not fails, f"{elapsed:.2f}s, walk freq [{freq[0]:.4f}, {freq[1]:.4f}]" + (f"; failed: {fails}" if fails else "")


# ---------------------------------------------------------------------------
# 2. graph oracles


def check_graph_oracles() -> tuple[bool, str]:
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst_btw = worst_pr = worst_sum = 0.0
    for _ in range(20):
        upper = np.triu(rng.random((30, 30)) < 0.12, 1)
        w = np.where(upper, rng.uniform(0.5, 1.0, size=(30, 30)), 0.0)
        w = w + w.T
        worst_btw = max(worst_btw, float(np.max(np.abs(centrality.betweenness(w) - betweenness_bruteforce(w)))))
        pr = centrality.pagerank(w)
        worst_sum = max(worst_sum, abs(float(pr.sum()) - 1.0))
        worst_pr = max(worst_pr, float(np.max(np.abs(pr - pagerank_dense(w, 0.85, 10_000)))))
    x = rng.random((200, 6))
    labels = rng.integers(0, 5, size=200)
    sil_err = abs(silhouette(x, labels) - silhouette_pairwise(x, labels))
    elapsed = time.perf_counter() - t0
    ok = worst_btw < 1e-9 and worst_sum < 1e-9 and worst_pr < 1e-6 and sil_err < 1e-9 and elapsed < 60
    return ok, (f"{elapsed:.1f}s, betweenness err {worst_btw:.1e}, pagerank sum err {worst_sum:.1e}, "
                f"pagerank err {worst_pr:.1e}, silhouette err {sil_err:.1e}")


# ---------------------------------------------------------------------------
# 3. metric oracles


def check_metric_oracles() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    lists, expected = [], []
    for qid in range(1000):
        n = int(rng.integers(1, 50))
        ranked = [int(u) for u in rng.permutation(500)[:n]]
        truth = ranked[int(rng.integers(n))] if rng.random() < 0.9 else -1
        lists.append(RankedList(qid, tuple(ranked), truth))
        expected.append(metrics_bruteforce(ranked, truth))
    rep = metrics(lists)
    exact = all(rep.per_query[m].tolist() == [e[m] for e in expected] for m in METRICS)

    # random scorer over 20-user plans
    sim_rng = np.random.default_rng(2)
    plans = [make_subsample_plan(q, [0], 0, range(1, 1000), size=20, seed=3) for q in range(10_000)]
    sub = subsample_protocol(plans, lambda p: [int(u) for u in sim_rng.permutation(list(p.users))])
    target = sum(1 / k for k in range(1, 21)) / 20
    mrr = sub.means["MRR"]
    ok = exact and abs(mrr - target) <= 0.02
    return ok, f"1000 cases exact={exact}, random MRR {mrr:.4f} vs H(20)/20={target:.4f}"


# ---------------------------------------------------------------------------
# planted corpus, shared by criteria 4 to 6


@lru_cache(maxsize=1)
def planted_dataset():
    tmp = Path(os.environ.get("TMPDIR", "/tmp")) / f"tuef-acceptance-{os.getpid()}"
    corpus = generate(SyntheticConfig(n_questions=2000, seed=0))
    posts, users = corpus.write_xml(tmp)
    cfg = pl.PipelineConfig(top_n=PLANTED_TOP_N)
    ds, _ = pl.run_ingest(posts, users, cfg)
    return ds, cfg


@lru_cache(maxsize=1)
def planted_ablation():
    ds, cfg = planted_dataset()
    t0 = time.perf_counter()
    res = pl.run_ablation(ds, cfg, ["full", "BC", "BM25", "NoRW"])
    return res, time.perf_counter() - t0


def check_planted() -> tuple[bool, str]:
    t0 = time.perf_counter()
    planted_dataset.cache_clear()
    planted_ablation.cache_clear()
    res, _ = planted_ablation()
    elapsed = time.perf_counter() - t0
    full = res.reports["full"].means
    ok = full["P@1"] >= 0.6 and elapsed < 300
    parts = [f"{elapsed:.0f}s", f"n={res.reports['full'].n_queries}", f"full P@1 {full['P@1']:.3f} MRR {full['MRR']:.3f}"]
    for base in ("BC", "BM25"):
        means = res.reports[base].means
        for m in ("P@1", "MRR"):
            sig = res.significance[base][m]
            ok &= full[m] > means[m] and sig["significant"]
        parts.append(f"{base} P@1 {means['P@1']:.3f} MRR {means['MRR']:.3f} "
                     f"(p {res.significance[base]['P@1']['p']:.1e}/{res.significance[base]['MRR']['p']:.1e})")
    return ok, ", ".join(parts)


def check_exploration_recall() -> tuple[bool, str]:
    res, _ = planted_ablation()
    full, norw = res.reports["full"].means["R@5"], res.reports["NoRW"].means["R@5"]
    return full >= norw, f"R@5 full {full:.3f} vs NoRW {norw:.3f}"


def check_interpretable() -> tuple[bool, str]:
    ds, cfg = planted_dataset()
    icfg = dataclasses.replace(cfg, ranker="interpretable", tuning_trials=0, n_estimators=60,
                               num_leaves=8, max_depth=4, min_data_in_leaf=20, n_pairs=3)
    build = pl.run_build(ds, icfg)
    model, _ = pl.run_train(ds, build, icfg)
    assert isinstance(model, InterpretableEnsemble)
    audit = True
    for tree, eff in zip(model.trees, model.effects):
        used = tree.features_used()
        if len(eff) == 1:
            audit &= used == {eff[0]}
        else:
            audit &= tuple(eff) in [tuple(p) for p in model.pairs] and bool(used) and used <= set(eff)
    engine = pl.Engine(ds, build, icfg)
    xs = [engine.featurize(engine.question_candidates(q))[1] for q in ds.test_questions[:100]]
    x = np.vstack([v for v in xs if len(v)])
    contrib = model.contributions(x)
    err = float(np.max(np.abs(sum(contrib.values()) - model.predict(x))))
    tables_ok = True
    n_tables = 0
    for eff, _ in model.effect_importance():
        table = model.effect_table(eff)
        n_tables += 1
        for grid in table["grid"]:
            tables_ok &= list(grid) == sorted(grid)
        c = np.asarray(table["contribution"])
        tables_ok &= c.shape == tuple(len(g) for g in table["grid"])
        if len(eff) == 1:
            got = np.array([lookup_table(table, v) for v in x[:, eff[0]]])
            tables_ok &= bool(np.max(np.abs(got - contrib[eff])) < 1e-9)
    top = [model.effect_name(e) for e, _ in model.effect_importance()[:3]]
    ok = audit and err < 1e-9 and tables_ok and n_tables > 0
    return ok, (f"{len(model.trees)} trees, {len(model.main_effects)} main + {len(model.interaction_effects)} "
                f"interaction effects, decomposition err {err:.1e}, {n_tables} tables, top effects {top}")


# ---------------------------------------------------------------------------
# 7. determinism across thread counts


def _run_cli_chain(workdir: Path, dump: Path, threads: int) -> dict[str, bytes]:
    from tuef.cli import main
    common = ["--workdir", str(workdir), "--threads", str(threads)]
    steps = [
        ["ingest", "--posts", str(dump / "Posts.xml"), "--users", str(dump / "Users.xml")],
        ["build", "--top-n", str(PLANTED_TOP_N)],
        ["train", "--top-n", str(PLANTED_TOP_N), "--trials", "3"],
        ["evaluate"],
        ["evaluate", "--protocol", "subsample"],
    ]
    for step in steps:
        with contextlib.redirect_stdout(io.StringIO()):
            code = main(step + common)
        if code != 0:
            raise RuntimeError(f"step {step[0]} exited with {code}")
    names = ["dataset.json", "build.json", "model.json", "report-expert-ranking.json",
             "report-expert-ranking.txt", "report-subsample.json"]
    return {n: (workdir / n).read_bytes() for n in names}


def check_determinism(tmp: Path) -> tuple[bool, str]:
    dump = tmp / "dump"
    generate(SyntheticConfig(n_questions=2000, seed=2)).write_xml(dump)
    a = _run_cli_chain(tmp / "t1", dump, threads=1)
    b = _run_cli_chain(tmp / "t2", dump, threads=2)
    same = [n for n in a if a[n] == b[n]]
    differ = [n for n in a if a[n] != b[n]]
    ra = json.loads(a["report-expert-ranking.json"])["payload"]["report"]["means"]
    return not differ, f"{len(same)}/{len(a)} artifacts byte-identical, P@1 {ra['P@1']:.3f}" + (
        f"; differ: {differ}" if differ else "")


# ---------------------------------------------------------------------------
# 8. optional full-data check

FULL_DATA_ENV = "TUEF_FULL_DATA"  # directory holding the community's Posts.xml and Users.xml
REFERENCE_STATS = {"train": 39581, "test": 9521, "tags": 5365, "experts": 350, "ltr": 8008}
REFERENCE_METRICS = {"P@1": 0.459, "NDCG@3": 0.592, "R@5": 0.760, "MRR": 0.590}


def check_full_data(root: Path) -> tuple[bool, str]:
    cfg = pl.make_config({
        "period_start": os.environ.get("TUEF_PERIOD_START", "2020-12-01T00:00:00.000"),
        "period_end": os.environ.get("TUEF_PERIOD_END", "2020-12-31T23:59:59.999"),
    })
    ds, stats = pl.run_ingest(root / "Posts.xml", root / "Users.xml", cfg)
    build = pl.run_build(ds, cfg)
    model, info = pl.run_train(ds, build, cfg)
    engine = pl.Engine(ds, build, cfg)
    report = pl.evaluate_expert_ranking(pl.ModelSystem(engine, model), pl.evaluation_pool(ds, build.graph))
    got = {"train": stats["train_questions"], "test": stats["test_questions"], "tags": build.stats["tags"],
           "experts": build.stats["experts"], "ltr": info["training_set"]["queries"]}
    exact = all(got[k] == REFERENCE_STATS[k] for k in ("train", "test", "tags"))
    near = all(abs(got[k] - REFERENCE_STATS[k]) <= 0.1 * REFERENCE_STATS[k] for k in ("experts", "ltr"))
    means = report.means
    metric_note = ", ".join(f"{m} {means[m]:.3f} (ref {REFERENCE_METRICS[m]:.3f}, "
                            f"{'within' if abs(means[m] - REFERENCE_METRICS[m]) <= 0.05 else 'outside'} 0.05)"
                            for m in METRICS)
    return exact and near, f"stats {got}; {metric_note}"


# ---------------------------------------------------------------------------
# pytest entry points


def _run(number, title, fn, *args):
    ok, detail = fn(*args)
    record(number, title, ok, detail)
    assert ok, detail


@pytest.mark.acceptance
def test_criterion_1_formula_suite():
    _run(1, "formula-level unit suite", check_formulas)


@pytest.mark.acceptance
def test_criterion_2_graph_oracles():
    _run(2, "graph oracles", check_graph_oracles)


@pytest.mark.acceptance
def test_criterion_3_metric_oracles():
    _run(3, "metric oracles", check_metric_oracles)


@pytest.mark.acceptance
def test_criterion_4_planted_corpus():
    _run(4, "planted-corpus ordering BC, BM25 < TUEF", check_planted)


@pytest.mark.acceptance
def test_criterion_5_exploration_recall():
    _run(5, "walk exploration recall", check_exploration_recall)


@pytest.mark.acceptance
def test_criterion_6_interpretable_audit():
    _run(6, "interpretable-model structural audit", check_interpretable)


@pytest.mark.acceptance
def test_criterion_7_determinism(tmp_path):
    _run(7, "determinism across --threads", check_determinism, tmp_path)


@pytest.mark.acceptance
def test_criterion_8_full_data():
    root = os.environ.get(FULL_DATA_ENV)
    if not root or not (Path(root) / "Posts.xml").exists():
        RESULTS.append(f"SKIP  criterion 8: full-data check | set {FULL_DATA_ENV} to a dump directory")
        pytest.skip(f"full dump not present; set {FULL_DATA_ENV}")
    _run(8, "full-data structural statistics", check_full_data, Path(root))


if __name__ == "__main__":
    import tempfile

    checks = [
        (1, "formula-level unit suite", check_formulas, ()),
        (2, "graph oracles", check_graph_oracles, ()),
        (3, "metric oracles", check_metric_oracles, ()),
        (4, "planted-corpus ordering BC, BM25 < TUEF", check_planted, ()),
        (5, "walk exploration recall", check_exploration_recall, ()),
        (6, "interpretable-model structural audit", check_interpretable, ()),
    ]
    with tempfile.TemporaryDirectory() as d:
        checks.append((7, "determinism across --threads", check_determinism, (Path(d),)))
        root = os.environ.get(FULL_DATA_ENV)
        if root and (Path(root) / "Posts.xml").exists():
            checks.append((8, "full-data structural statistics", check_full_data, (Path(root),)))
        for number, title, fn, args in checks:
            ok, detail = fn(*args)
            record(number, title, ok, detail)
            print(RESULTS[-1], flush=True)
    if not any(r.startswith("PASS  criterion 8") or r.startswith("FAIL  criterion 8") for r in RESULTS):
        print(f"SKIP  criterion 8: full-data check | set {FULL_DATA_ENV} to a dump directory")
    sys.exit(0 if all(not r.startswith("FAIL") for r in RESULTS) else 1)
