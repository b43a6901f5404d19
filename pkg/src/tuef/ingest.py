"""Parsing and cleaning of StackExchange-style ``Posts.xml`` / ``Users.xml`` dumps."""

from __future__ import annotations

import html
import json
import logging
import re
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import IO, Iterable, Sequence

logger = logging.getLogger(__name__)

DATASET_FORMAT = "tuef-dataset"
DATASET_VERSION = 1

_TAG_RE = re.compile(r"<([^<>]+)>")


class IngestError(Exception):
    """Raised when an input stream cannot be read or yields no usable data."""


@dataclass(frozen=True)
class RawPost:
    post_id: int
    post_type: str  # "question" | "answer"
    owner_user_id: int
    creation_date: float  # seconds since the epoch, UTC
    accepted_answer_id: int | None = None
    parent_id: int | None = None
    tags: tuple[str, ...] = ()
    title: str = ""
    body: str = ""
    score: int = 0


@dataclass(frozen=True)
class UserRecord:
    user_id: int
    reputation: int = 0


@dataclass(frozen=True)
class Question:
    question_id: int
    asker_id: int
    creation_date: float
    tags: tuple[str, ...]
    title: str
    body: str
    accepted_answer_id: int
    accepted_user_id: int
    score: int = 0


@dataclass(frozen=True)
class Answer:
    answer_id: int
    question_id: int
    owner_user_id: int
    creation_date: float
    accepted: bool
    score: int = 0


@dataclass
class ParseStats:
    rows: int = 0
    skipped: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


@dataclass(frozen=True)
class Dataset:
    train_questions: tuple[Question, ...]
    test_questions: tuple[Question, ...]
    answers: dict[int, tuple[Answer, ...]]
    users: dict[int, UserRecord]

    @property
    def questions(self) -> tuple[Question, ...]:
        return self.train_questions + self.test_questions

    def question(self, qid: int) -> Question:
        index = getattr(self, "_qindex", None)
        if index is None:
            index = {q.question_id: q for q in self.questions}
            object.__setattr__(self, "_qindex", index)
        return index[qid]


# ---------------------------------------------------------------------------
# parsing


class _TextExtractor(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []

    def handle_data(self, data: str) -> None:
        self.parts.append(data)


def strip_html(text: str) -> str:
    """Plain-text extraction of an HTML post body, whitespace collapsed."""
    if "<" not in text and "&" not in text:
        return " ".join(text.split())
    parser = _TextExtractor()
    parser.feed(text)
    parser.close()
    return " ".join(" ".join(parser.parts).split())


def parse_tags(raw: str | None) -> tuple[str, ...]:
    """``"<rust><Graphs><rust>"`` -> ``("rust", "graphs")``; lowercased, first occurrence kept."""
    if not raw:
        return ()
    found = _TAG_RE.findall(raw)
    if not found:
        # newer dumps use "|rust|graphs|"
        found = [t for t in raw.split("|") if t]
    seen: dict[str, None] = {}
    for tag in found:
        tag = html.unescape(tag).strip().lower()
        if tag:
            seen.setdefault(tag, None)
    return tuple(seen)


def parse_timestamp(value: str) -> float:
    dt = datetime.fromisoformat(value.rstrip("Z"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc).replace(tzinfo=None)
    return dt.isoformat(timespec="milliseconds")


def _opt_int(value: str | None) -> int | None:
    if value is None or value == "":
        return None
    return int(value)


def _iter_rows(stream: IO[bytes]) -> Iterable[dict[str, str]]:
    try:
        for _event, elem in ET.iterparse(stream, events=("end",)):
            if elem.tag == "row":
                yield dict(elem.attrib)
            elem.clear()
    except ET.ParseError as exc:
        # iterparse raises on an empty document as well
        if "no element found" in str(exc) and "line 1, column 0" in str(exc):
            return
        raise IngestError(f"unreadable dump stream: {exc}") from exc
    except OSError as exc:
        raise IngestError(f"unreadable dump stream: {exc}") from exc


def _parse_post_row(attrs: dict[str, str], stats: ParseStats) -> RawPost | None:
    try:
        post_id = _opt_int(attrs.get("Id"))
        type_id = attrs.get("PostTypeId")
        owner = _opt_int(attrs.get("OwnerUserId"))
        created = attrs.get("CreationDate")
        if post_id is None:
            stats.skip("missing Id")
            return None
        if owner is None:
            stats.skip("missing OwnerUserId")
            return None
        if type_id not in ("1", "2"):
            stats.skip("unsupported PostTypeId")
            return None
        if not created:
            stats.skip("missing CreationDate")
            return None
        creation_date = parse_timestamp(created)
        score = _opt_int(attrs.get("Score")) or 0
        body = strip_html(attrs.get("Body", ""))
        if type_id == "1":
            return RawPost(
                post_id=post_id,
                post_type="question",
                owner_user_id=owner,
                creation_date=creation_date,
                accepted_answer_id=_opt_int(attrs.get("AcceptedAnswerId")),
                tags=parse_tags(attrs.get("Tags")),
                title=strip_html(attrs.get("Title", "")),
                body=body,
                score=score,
            )
        parent = _opt_int(attrs.get("ParentId"))
        if parent is None:
            stats.skip("answer without ParentId")
            return None
        return RawPost(
            post_id=post_id,
            post_type="answer",
            owner_user_id=owner,
            creation_date=creation_date,
            parent_id=parent,
            body=body,
            score=score,
        )
    except ValueError:
        stats.skip("malformed attribute")
        return None


def parse_dump(
    posts_stream: IO[bytes],
    users_stream: IO[bytes] | None = None,
    stats: ParseStats | None = None,
) -> tuple[list[RawPost], list[UserRecord]]:
    """Parse the dump's row format. Malformed rows are skipped and counted in ``stats``."""
    stats = stats if stats is not None else ParseStats()
    posts: list[RawPost] = []
    for attrs in _iter_rows(posts_stream):
        stats.rows += 1
        post = _parse_post_row(attrs, stats)
        if post is not None:
            posts.append(post)

    users: dict[int, UserRecord] = {}
    if users_stream is not None:
        for attrs in _iter_rows(users_stream):
            stats.rows += 1
            try:
                uid = _opt_int(attrs.get("Id"))
                rep = _opt_int(attrs.get("Reputation")) or 0
            except ValueError:
                stats.skip("malformed user row")
                continue
            if uid is None:
                stats.skip("malformed user row")
                continue
            users[uid] = UserRecord(uid, max(rep, 0))
    if stats.skipped:
        logger.warning("skipped %d malformed rows: %s", stats.skipped, stats.reasons)
    return posts, sorted(users.values(), key=lambda u: u.user_id)


def parse_dump_files(posts_path: str | Path, users_path: str | Path | None = None,
                     stats: ParseStats | None = None) -> tuple[list[RawPost], list[UserRecord]]:
    try:
        with open(posts_path, "rb") as pf:
            if users_path is None:
                return parse_dump(pf, None, stats)
            with open(users_path, "rb") as uf:
                return parse_dump(pf, uf, stats)
    except OSError as exc:
        raise IngestError(f"cannot open dump: {exc}") from exc


# ---------------------------------------------------------------------------
# cleaning


def clean_and_split(
    posts: Sequence[RawPost],
    users: Sequence[UserRecord],
    period: tuple[float | None, float | None] = (None, None),
    split_ratio: float = 0.80,
) -> Dataset:
    """Keep closed questions inside ``period`` and split them chronologically.

    A question is retained when its accepted answer is present among the
    answers, and the accepted answerer is not the asker. Ties on creation
    date are ordered by post id.
    """
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must be in (0, 1), got {split_ratio}")
    start, end = period

    answers_by_parent: dict[int, list[RawPost]] = defaultdict(list)
    answer_by_id: dict[int, RawPost] = {}
    for p in posts:
        if p.post_type == "answer":
            answers_by_parent[p.parent_id].append(p)
            answer_by_id[p.post_id] = p

    kept: list[Question] = []
    for p in posts:
        if p.post_type != "question" or p.accepted_answer_id is None:
            continue
        if start is not None and p.creation_date < start:
            continue
        if end is not None and p.creation_date >= end:
            continue
        acc = answer_by_id.get(p.accepted_answer_id)
        if acc is None or acc.parent_id != p.post_id:
            continue
        if acc.owner_user_id == p.owner_user_id:
            continue
        kept.append(Question(
            question_id=p.post_id,
            asker_id=p.owner_user_id,
            creation_date=p.creation_date,
            tags=p.tags,
            title=p.title,
            body=p.body,
            accepted_answer_id=acc.post_id,
            accepted_user_id=acc.owner_user_id,
            score=p.score,
        ))
    if not kept:
        raise IngestError("empty dataset: no closed question survived cleaning")
    kept.sort(key=lambda q: (q.creation_date, q.question_id))

    answers: dict[int, tuple[Answer, ...]] = {}
    for q in kept:
        rows = sorted(answers_by_parent[q.question_id], key=lambda a: (a.creation_date, a.post_id))
        answers[q.question_id] = tuple(
            Answer(a.post_id, q.question_id, a.owner_user_id, a.creation_date,
                   a.post_id == q.accepted_answer_id, a.score)
            for a in rows
        )

    known = {u.user_id: u for u in users}
    referenced = {q.asker_id for q in kept}
    referenced.update(a.owner_user_id for rows in answers.values() for a in rows)
    user_map = {uid: known.get(uid, UserRecord(uid, 0)) for uid in sorted(referenced)}

    n_train = int(round(split_ratio * len(kept)))
    n_train = min(max(n_train, 0), len(kept))
    return Dataset(
        train_questions=tuple(kept[:n_train]),
        test_questions=tuple(kept[n_train:]),
        answers=answers,
        users=user_map,
    )


def dataset_to_posts(ds: Dataset) -> tuple[list[RawPost], list[UserRecord]]:
    """Re-serialize a cleaned dataset into raw posts (inverse of the cleaning step)."""
    posts: list[RawPost] = []
    for q in ds.questions:
        posts.append(RawPost(q.question_id, "question", q.asker_id, q.creation_date,
                             accepted_answer_id=q.accepted_answer_id, tags=q.tags,
                             title=q.title, body=q.body, score=q.score))
        for a in ds.answers.get(q.question_id, ()):
            posts.append(RawPost(a.answer_id, "answer", a.owner_user_id, a.creation_date,
                                 parent_id=q.question_id, score=a.score))
    return posts, list(ds.users.values())


# ---------------------------------------------------------------------------
# persistence


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "train_questions": [_question_row(q) for q in ds.train_questions],
        "test_questions": [_question_row(q) for q in ds.test_questions],
        "answers": [[qid, [list(_answer_row(a)) for a in rows]] for qid, rows in ds.answers.items()],
        "users": [[u.user_id, u.reputation] for u in ds.users.values()],
    }


def _question_row(q: Question) -> dict:
    row = asdict(q)
    row["tags"] = list(q.tags)
    return row


def _answer_row(a: Answer) -> tuple:
    return (a.answer_id, a.owner_user_id, a.creation_date, a.accepted, a.score)


def dataset_from_dict(data: dict) -> Dataset:
    if data.get("format") != DATASET_FORMAT:
        raise IngestError("not a dataset artifact")
    if data.get("version") != DATASET_VERSION:
        raise IngestError(f"unsupported dataset version {data.get('version')}")

    def question(row: dict) -> Question:
        row = dict(row)
        row["tags"] = tuple(row["tags"])
        return Question(**row)

    answers = {
        int(qid): tuple(Answer(aid, int(qid), owner, created, accepted, score)
                        for aid, owner, created, accepted, score in rows)
        for qid, rows in data["answers"]
    }
    return Dataset(
        train_questions=tuple(question(r) for r in data["train_questions"]),
        test_questions=tuple(question(r) for r in data["test_questions"]),
        answers=answers,
        users={uid: UserRecord(uid, rep) for uid, rep in data["users"]},
    )


def save_dataset(ds: Dataset, path: str | Path, meta: dict | None = None) -> None:
    payload = dataset_to_dict(ds)
    if meta:
        payload["meta"] = meta
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")), encoding="utf-8")


def load_dataset(path: str | Path) -> tuple[Dataset, dict]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return dataset_from_dict(data), data.get("meta", {})
