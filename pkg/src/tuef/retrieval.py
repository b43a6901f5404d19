"""BM25 over two inverted indexes: question text and question tags."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ingest import Question

K1 = 1.2
B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")

TOKENIZER_INFO = {
    "lowercase": True,
    "split": "non-alphanumeric",
    "min_length": 2,
    "stemming": False,
    "stopwords": False,
}


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


def text_terms(title: str, body: str) -> list[str]:
    return tokenize(title) + tokenize(body)


@dataclass(frozen=True)
class ScoredQuestion:
    question_id: int
    bm25_score: float
    expert_id: int


@dataclass
class InvertedIndex:
    """Postings keyed by term; document positions are in ascending question-id order."""

    name: str
    doc_ids: np.ndarray  # question ids, ascending
    experts: np.ndarray  # accepted answerer per document
    lengths: np.ndarray
    postings: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    k1: float = K1
    b: float = B

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def avg_length(self) -> float:
        return float(self.lengths.mean()) if len(self.lengths) else 0.0

    @classmethod
    def build(cls, name: str, docs: Sequence[tuple[int, int, Sequence[str]]], k1: float = K1, b: float = B) -> "InvertedIndex":
        docs = sorted(docs, key=lambda d: d[0])
        raw: dict[str, tuple[list[int], list[int]]] = {}
        lengths = []
        for pos, (_qid, _expert, terms) in enumerate(docs):
            lengths.append(len(terms))
            for term, tf in sorted(Counter(terms).items()):
                entry = raw.setdefault(term, ([], []))
                entry[0].append(pos)
                entry[1].append(tf)
        postings = {
            t: (np.asarray(p, dtype=np.int64), np.asarray(tf, dtype=float))
            for t, (p, tf) in sorted(raw.items())
        }
        return cls(
            name=name,
            doc_ids=np.asarray([d[0] for d in docs], dtype=np.int64),
            experts=np.asarray([d[1] for d in docs], dtype=np.int64),
            lengths=np.asarray(lengths, dtype=float),
            postings=postings,
            k1=k1,
            b=b,
        )

    def idf(self, term: str) -> float:
        n = len(self.postings[term][0]) if term in self.postings else 0
        return math.log((self.n_docs - n + 0.5) / (n + 0.5) + 1.0)

    def scores(self, terms: Iterable[str]) -> np.ndarray:
        """Dense BM25 score per document. Repeated query terms count once per occurrence."""
        out = np.zeros(self.n_docs)
        if not self.n_docs:
            return out
        norm = self.k1 * (1.0 - self.b + self.b * self.lengths / max(self.avg_length, 1e-12))
        for term in terms:
            hit = self.postings.get(term)
            if hit is None:
                continue
            pos, tf = hit
            out[pos] += self.idf(term) * tf * (self.k1 + 1.0) / (tf + norm[pos])
        return out

    def query(self, terms: Sequence[str], top_n: int = 1000,
              exclude: Iterable[int] = ()) -> list[ScoredQuestion]:
        if top_n < 1:
            raise ValueError("top_n must be >= 1")
        terms = list(terms)
        matched = np.zeros(self.n_docs, dtype=bool)
        for term in terms:
            hit = self.postings.get(term)
            if hit is not None:
                matched[hit[0]] = True
        excluded = set(exclude)
        if excluded:
            matched &= ~np.isin(self.doc_ids, list(excluded))
        if not matched.any():
            return []
        scores = self.scores(terms)
        cand = np.flatnonzero(matched)
        # doc positions are ascending question id, so a stable sort breaks ties by id
        order = cand[np.argsort(-scores[cand], kind="stable")][:top_n]
        return [ScoredQuestion(int(self.doc_ids[i]), float(scores[i]), int(self.experts[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "k1": self.k1,
            "b": self.b,
            "doc_ids": self.doc_ids.tolist(),
            "experts": self.experts.tolist(),
            "lengths": self.lengths.tolist(),
            "postings": [[t, p.tolist(), tf.tolist()] for t, (p, tf) in self.postings.items()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvertedIndex":
        return cls(
            name=data["name"],
            doc_ids=np.asarray(data["doc_ids"], dtype=np.int64),
            experts=np.asarray(data["experts"], dtype=np.int64),
            lengths=np.asarray(data["lengths"], dtype=float),
            postings={t: (np.asarray(p, dtype=np.int64), np.asarray(tf, dtype=float))
                      for t, p, tf in data["postings"]},
            k1=data["k1"],
            b=data["b"],
        )


@dataclass
class Indexes:
    text: InvertedIndex
    tag: InvertedIndex

    def to_dict(self) -> dict:
        return {"text": self.text.to_dict(), "tag": self.tag.to_dict(), "tokenizer": TOKENIZER_INFO}

    @classmethod
    def from_dict(cls, data: dict) -> "Indexes":
        return cls(InvertedIndex.from_dict(data["text"]), InvertedIndex.from_dict(data["tag"]))


def build_indexes(questions: Iterable[Question], experts: Iterable[int]) -> Indexes:
    """Index the questions whose accepted answerer is a labeled expert."""
    experts = set(experts)
    kept = [q for q in questions if q.accepted_user_id in experts]
    text_docs = [(q.question_id, q.accepted_user_id, text_terms(q.title, q.body)) for q in kept]
    tag_docs = [(q.question_id, q.accepted_user_id, list(q.tags)) for q in kept]
    return Indexes(text=InvertedIndex.build("text", text_docs), tag=InvertedIndex.build("tag", tag_docs))


@dataclass
class RetrievalResult:
    tag_hits: list[ScoredQuestion]
    text_hits: list[ScoredQuestion]

    def expert_order(self) -> list[int]:
        return merge_alternate(self.tag_hits, self.text_hits)


def retrieve(indexes: Indexes, title: str, body: str, tags: Sequence[str], top_n: int = 1000,
             exclude: Iterable[int] = ()) -> RetrievalResult:
    exclude = tuple(exclude)
    return RetrievalResult(
        tag_hits=indexes.tag.query(list(tags), top_n, exclude),
        text_hits=indexes.text.query(text_terms(title, body), top_n, exclude),
    )


def merge_alternate(list_tag: Sequence[ScoredQuestion | int], list_text: Sequence[ScoredQuestion | int]) -> list[int]:
    """Interleave experts of the two lists, tag list first, keeping first occurrences."""

    def expert(item) -> int:
        return item.expert_id if isinstance(item, ScoredQuestion) else int(item)

    seen: set[int] = set()
    out: list[int] = []
    for i in range(max(len(list_tag), len(list_text))):
        for lst in (list_tag, list_text):
            if i < len(lst):
                e = expert(lst[i])
                if e not in seen:
                    seen.add(e)
                    out.append(e)
    return out
