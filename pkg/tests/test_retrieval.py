import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bm25_single
from tuef.retrieval import (Indexes, InvertedIndex, ScoredQuestion, build_indexes, merge_alternate, retrieve,
                            text_terms, tokenize)


def test_tokenizer():
    assert tokenize("Hello, C++ World! a b2 x") == ["hello", "world", "b2"]
    assert text_terms("Rust graphs", "") == ["rust", "graphs"]


def test_single_document_hand_bm25():
    idx = InvertedIndex.build("t", [(5, 1, ["rust"])])
    hits = idx.query(["rust"])
    assert [h.question_id for h in hits] == [5]
    by_hand = np.log((1 - 1 + 0.5) / (1 + 0.5) + 1) * 1 * 2.2 / (1 + 1.2 * (1 - 0.75 + 0.75 * 1 / 1))
    assert hits[0].bm25_score == pytest.approx(by_hand, rel=1e-12)
    assert hits[0].bm25_score == pytest.approx(bm25_single(1, 1, 1.0, 1, 1), rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["aa", "bb", "cc", "dd"]), min_size=1, max_size=8), min_size=1, max_size=12),
       st.sampled_from(["aa", "bb", "cc", "dd"]))
def test_scores_match_formula(docs, term):
    idx = InvertedIndex.build("t", [(i, 100 + i, d) for i, d in enumerate(docs)])
    avg = sum(map(len, docs)) / len(docs)
    df = sum(1 for d in docs if term in d)
    s = idx.scores([term])
    for i, d in enumerate(docs):
        tf = d.count(term)
        expect = bm25_single(tf, len(d), avg, len(docs), df) if tf else 0.0
        assert s[i] == pytest.approx(expect, rel=1e-12, abs=1e-15)
        assert s[i] >= 0


def test_zero_matching_terms_and_empty_query():
    idx = InvertedIndex.build("t", [(1, 1, ["aa"])])
    assert idx.query(["zz"]) == [] and idx.query([]) == []
    with pytest.raises(ValueError):
        idx.query(["aa"], top_n=0)


def test_top_n_and_tie_break():
    docs = [(qid, qid, ["aa"] * tf + ["bb"] * (5 - tf)) for qid, tf in [(10, 1), (11, 3), (12, 5), (13, 2), (14, 3)]]
    idx = InvertedIndex.build("t", docs)
    assert [h.question_id for h in idx.query(["aa"], top_n=1)] == [12]
    ids = [h.question_id for h in idx.query(["aa"])]
    assert ids == [12, 11, 14, 13, 10]  # equal-score 11 and 14 ordered by id
    assert [h.question_id for h in idx.query(["aa"], exclude=[12])][0] == 11


def test_only_expert_answered_questions_indexed(dump):
    dump.question(["x"], [1], title="alpha beta", body="gamma")
    dump.question(["x", "y"], [2], title="alpha", body="")
    dump.question(["y"], [1], title="", body="delta")
    ds = dump.train_only()
    idx = build_indexes(ds.train_questions, experts={1})
    assert idx.text.n_docs == 2 and idx.tag.n_docs == 2
    assert set(idx.text.experts.tolist()) == {1}
    assert 2 not in retrieve(idx, "alpha", "", ["x", "y"]).expert_order()
    title_only = build_indexes(ds.train_questions, experts={2}).text
    assert title_only.lengths.tolist() == [1.0] and "alpha" in title_only.postings


def test_rebuild_is_identical_and_round_trips(dump):
    for i in range(6):
        dump.question([f"t{i % 3}"], [i % 2 + 1], title=f"word{i} common", body="text body")
    ds = dump.train_only()
    a = build_indexes(ds.train_questions, {1, 2})
    b = build_indexes(ds.train_questions[::-1], {1, 2})
    assert a.to_dict() == b.to_dict()
    c = Indexes.from_dict(a.to_dict())
    assert c.to_dict()["text"] == a.to_dict()["text"]
    assert a.to_dict()["tokenizer"]["stemming"] is False


def test_merge_examples():
    assert merge_alternate([1, 2], [3, 1]) == [1, 3, 2]
    assert merge_alternate([], [4, 4, 5]) == [4, 5]
    assert merge_alternate([1, 2, 3], [1, 2, 3]) == [1, 2, 3]
    sq = [ScoredQuestion(9, 1.0, 7), ScoredQuestion(8, 0.5, 7)]
    assert merge_alternate(sq, [ScoredQuestion(3, 2.0, 6)]) == [7, 6]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 15)), st.lists(st.integers(0, 15)))
def test_merge_properties(tag, text):
    out = merge_alternate(tag, text)
    assert len(out) == len(set(out)) and set(out) == set(tag) | set(text)
    if tag:
        assert out[0] == tag[0]
    # experts found by only one list keep that list's first-occurrence order
    for lst, other in ((tag, text), (text, tag)):
        only = [e for e in dict.fromkeys(lst) if e not in other]
        assert [e for e in out if e in only] == only
