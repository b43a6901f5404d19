import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import metrics_bruteforce
from tuef.eval import (METRICS, LatencyReport, RankedList, dumps, expert_ranking_protocol, format_table,
                       make_subsample_plan, metric_values, metrics, paired_ttest_bonferroni, random_ranking_mrr,
                       significance_matrix, subsample_protocol, timing_harness)


def test_rank_one():
    assert metric_values(1) == {"P@1": 1.0, "NDCG@3": 1.0, "R@5": 1.0, "MRR": 1.0}


def test_rank_two():
    v = metric_values(2)
    assert v["NDCG@3"] == pytest.approx(0.6309297535714575, abs=1e-15) and v["MRR"] == 0.5
    assert v["P@1"] == 0.0 and v["R@5"] == 1.0


def test_rank_seven_and_miss():
    assert metric_values(7) == {"P@1": 0.0, "NDCG@3": 0.0, "R@5": 0.0, "MRR": 1 / 7}
    rep = metrics([RankedList(1, (4, 5), 9)])
    assert rep.misses == 1 and all(v == 0.0 for v in rep.means.values())


def test_duplicates_rejected():
    with pytest.raises(ValueError):
        RankedList(1, (3, 3), 3)


def test_thousand_random_cases_match_bruteforce():
    rng = np.random.default_rng(0)
    lists, expected = [], []
    for qid in range(1000):
        n = int(rng.integers(1, 40))
        ranked = [int(u) for u in rng.permutation(200)[:n]]
        truth = ranked[int(rng.integers(n))] if rng.random() < 0.9 else 999
        lists.append(RankedList(qid, tuple(ranked), truth))
        expected.append(metrics_bruteforce(ranked, truth))
    rep = metrics(lists)
    for m in METRICS:
        assert rep.per_query[m].tolist() == [e[m] for e in expected]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 30), st.integers(0, 40)), min_size=1, max_size=30))
def test_report_invariants(cases):
    lists = []
    for qid, (n, pos) in enumerate(cases):
        experts = tuple(range(n))
        lists.append(RankedList(qid, experts, pos))
    rep = metrics(lists)
    means = rep.means
    assert all(0.0 <= v <= 1.0 for v in means.values())
    assert means["P@1"] <= means["R@5"] + 1e-12 and means["P@1"] <= means["MRR"] + 1e-12
    assert rep.misses == sum(1 for n, pos in cases if pos >= n)


def test_random_ranker_mrr_over_subsample_plans():
    rng = np.random.default_rng(42)
    rr = []
    for q in range(10_000):
        order = rng.permutation(20)
        rr.append(1.0 / (int(np.flatnonzero(order == 0)[0]) + 1))
    expected = sum(1 / k for k in range(1, 21)) / 20
    assert random_ranking_mrr(20) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.1799, abs=1e-4)
    assert abs(np.mean(rr) - expected) < 0.02


# significance

def test_hand_computed_ttest():
    res = paired_ttest_bonferroni([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    sd = math.sqrt(sum((d - 3) ** 2 for d in [1, 2, 3, 4, 5]) / 4)
    assert sd == pytest.approx(1.5811, abs=1e-4)
    assert res.t == pytest.approx(4.2426, abs=1e-4)
    assert res.significant


def test_p_value_agrees_with_scipy():
    from scipy import stats
    rng = np.random.default_rng(1)
    a, b = rng.random(30), rng.random(30)
    res = paired_ttest_bonferroni(a, b, num_comparisons=3)
    ref = stats.ttest_rel(a, b)
    assert res.t == pytest.approx(ref.statistic, rel=1e-12)
    assert res.p == pytest.approx(ref.pvalue, rel=1e-9)
    assert res.alpha == pytest.approx(0.05 / 3) and res.significant == (ref.pvalue < 0.05 / 3)


def test_identical_arrays_not_significant():
    res = paired_ttest_bonferroni([0.2, 0.5, 1.0], [0.2, 0.5, 1.0])
    assert res.t == 0.0 and not res.significant


def test_constant_nonzero_difference_significant():
    res = paired_ttest_bonferroni([1.0, 1.0, 1.0], [0.0, 0.0, 0.0])
    assert res.significant and res.t == math.inf


def test_jitter_case():
    rng = np.random.default_rng(2)
    b = rng.random(1000)
    a = b + 0.1 + rng.normal(0, 1e-4, size=1000)
    assert paired_ttest_bonferroni(a, b, num_comparisons=10).significant


def test_bonferroni_changes_decision():
    rng = np.random.default_rng(3)
    for _ in range(200):
        b = rng.random(40)
        a = b + rng.normal(0.05, 0.15, size=40)
        single = paired_ttest_bonferroni(a, b)
        if 0.05 / 8 <= single.p < 0.05:
            assert single.significant and not paired_ttest_bonferroni(a, b, 8).significant
            return
    pytest.fail("no borderline case generated")


def test_ttest_preconditions():
    with pytest.raises(ValueError):
        paired_ttest_bonferroni([1.0], [0.0])
    with pytest.raises(ValueError):
        paired_ttest_bonferroni([1.0, 2.0], [0.0])


def test_significance_matrix_alignment():
    r1 = metrics([RankedList(1, (1, 2), 1), RankedList(2, (1, 2), 1)], "a")
    r2 = metrics([RankedList(1, (1, 2), 2), RankedList(2, (1, 2), 2)], "b")
    r3 = metrics([RankedList(3, (1, 2), 2), RankedList(2, (1, 2), 2)], "c")
    sig = significance_matrix(r1, [r2])
    assert sig["b"]["P@1"]["significant"] and sig["b"]["P@1"]["num_comparisons"] == 1
    with pytest.raises(ValueError):
        significance_matrix(r1, [r3])
    text = format_table([r1, r2], {"b": {"P@1": "v"}})
    assert "1.000" in text and "0.000v" in text
    json.loads(dumps({"r": r1.to_dict(), "sig": sig}))


# protocols

def q(qid, truth):
    return SimpleNamespace(question_id=qid, accepted_user_id=truth)


def test_non_expert_queries_excluded_and_oracle_is_perfect():
    queries = [q(1, 10), q(2, 11), q(3, 99)]
    rep = expert_ranking_protocol(queries, {10, 11, 12}, lambda qq: [qq.accepted_user_id, 12])
    assert rep.query_ids == [1, 2]
    assert all(v == 1.0 for v in rep.means.values())


def test_subsample_plan_contents():
    pool = list(range(100, 150))
    plan = make_subsample_plan(7, [3, 4, 5, 3], truth=4, pool=pool, size=20, seed=1)
    assert len(plan.users) == 20 and len(set(plan.users)) == 20
    assert {3, 4, 5} <= set(plan.users) and plan.truth == 4
    assert plan == make_subsample_plan(7, [3, 4, 5], truth=4, pool=pool[::-1], size=20, seed=1)
    small = make_subsample_plan(7, [4], truth=4, pool=[1, 2], size=20)
    assert small.users == (1, 2, 4)
    capped = make_subsample_plan(1, [4, 5, 6], truth=6, pool=[], size=2)
    assert capped.users == (4, 6)


def test_subsample_truth_on_top_and_convergence():
    plans = [make_subsample_plan(i, [i], truth=i, pool=range(50), size=20, seed=0) for i in range(5)]
    rep = subsample_protocol(plans, lambda p: [p.truth] + [u for u in p.users if u != p.truth])
    assert rep.means["P@1"] == 1.0 and rep.extra["plan_sizes"] == [20] * 5

    # a plan that spans the whole candidate list reproduces the end-to-end metrics
    cands = {i: list(range(30)) for i in range(10)}
    rng = np.random.default_rng(0)
    score = {(i, u): rng.random() for i in cands for u in cands[i]}

    def ranked(qid, users):
        return sorted(users, key=lambda u: (-score[(qid, u)], u))

    truth = {i: i for i in cands}
    e2e = expert_ranking_protocol([q(i, truth[i]) for i in cands], range(30), lambda qq: ranked(qq.question_id, cands[qq.question_id]))
    full = [make_subsample_plan(i, [truth[i]], truth[i], cands[i], size=len(cands[i])) for i in cands]
    sub = subsample_protocol(full, lambda p: ranked(p.query_id, p.users))
    for m in METRICS:
        assert sub.per_query[m].tolist() == e2e.per_query[m].tolist()


def test_timing_harness():
    assert timing_harness(lambda x: x, []).summary() == {"count": 0}
    ticks = iter([0.0, 1.0, 1.0, 3.0, 3.0, 6.0])
    rep = timing_harness(lambda x: x, [1, 2, 3], clock=lambda: next(ticks))
    assert rep.samples == [1.0, 2.0, 3.0]
    s = rep.summary()
    assert s["mean"] == sum(rep.samples) / 3 and s["median"] == 2.0 and s["count"] == 3
    assert LatencyReport([0.5]).summary()["p95"] == 0.5
