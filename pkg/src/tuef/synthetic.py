"""Planted expert-finding corpus: topic-pure tags, templated text and
expert-skewed answer acceptance, emitted as dump-format XML."""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import RawPost, UserRecord, format_timestamp

_SYLLABLES = ("ka", "lo", "mi", "ne", "pu", "ra", "si", "to", "vu", "ze", "ba", "do", "fi", "gu", "ho", "ji")


@dataclass
class SyntheticConfig:
    n_questions: int = 2000
    n_topics: int = 4
    subtopics_per_topic: int = 4
    secondaries_per_topic: int = 2
    n_casual: int = 3000
    n_regulars: int = 10  # casual users who answer often with a low acceptance ratio
    regular_accept_share: float = 0.3  # share of non-expert acceptances going to regulars
    regular_answer_share: float = 0.6  # share of non-accepted answers written by regulars
    expert_extra_rate: float = 0.15  # chance a topic expert adds a non-accepted answer
    words_per_subtopic: int = 8
    words_per_topic: int = 10
    n_noise_words: int = 60
    expert_accept_rate: float = 0.55  # share of questions accepted from an expert
    primary_share: float = 0.7  # among expert-accepted, share going to the subtopic's expert
    extra_tag_rate: float = 0.3
    facets_per_topic: int = 6  # secondary topic-pure tags, one or two per question
    answers_range: tuple[int, int] = (2, 4)
    start: float = 1577836800.0  # 2020-01-01
    spacing: float = 3 * 3600.0
    seed: int = 0


@dataclass
class PlantedCorpus:
    posts: list[RawPost]
    users: list[UserRecord]
    primary: dict[str, int]  # subtopic tag -> planted expert
    topic_experts: dict[str, list[int]]  # hub tag -> secondary experts
    casual: list[int]
    config: SyntheticConfig

    def write_xml(self, directory: str | Path) -> tuple[Path, Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        posts_path, users_path = d / "Posts.xml", d / "Users.xml"
        posts_path.write_bytes(posts_xml(self.posts))
        users_path.write_bytes(users_xml(self.users))
        return posts_path, users_path


def _vocab(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_SYLLABLES, size=int(rng.integers(2, 4))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def generate(cfg: SyntheticConfig = SyntheticConfig()) -> PlantedCorpus:
    rng = np.random.default_rng(cfg.seed)
    taken: set[str] = set()
    noise = _vocab(rng, cfg.n_noise_words, taken)

    next_user = 1
    hubs, subs, topic_words, sub_words = [], [], [], []
    primary: dict[str, int] = {}
    topic_experts: dict[str, list[int]] = {}
    for t in range(cfg.n_topics):
        hub = f"topic{t}"
        hubs.append(hub)
        topic_words.append(_vocab(rng, cfg.words_per_topic, taken))
        topic_experts[hub] = list(range(next_user, next_user + cfg.secondaries_per_topic))
        next_user += cfg.secondaries_per_topic
        row, words = [], []
        for s in range(cfg.subtopics_per_topic):
            tag = f"t{t}-sub{s}"
            row.append(tag)
            words.append(_vocab(rng, cfg.words_per_subtopic, taken))
            primary[tag] = next_user
            next_user += 1
        subs.append(row)
        sub_words.append(words)
    casual = list(range(next_user, next_user + cfg.n_casual))
    regulars = casual[: cfg.n_regulars]
    askers = list(range(next_user + cfg.n_casual, next_user + cfg.n_casual + 200))

    posts: list[RawPost] = []
    accepted_count: dict[int, int] = {}
    post_id = 1
    for i in range(cfg.n_questions):
        t = int(rng.integers(cfg.n_topics))
        s = int(rng.integers(cfg.subtopics_per_topic))
        tags = [hubs[t], subs[t][s]]
        if rng.random() < cfg.extra_tag_rate:
            other = int(rng.integers(cfg.subtopics_per_topic))
            if other != s:
                tags.append(subs[t][other])
        n_facets = int(rng.integers(1, 3))
        for j in sorted(rng.choice(cfg.facets_per_topic, size=n_facets, replace=False).tolist()):
            tags.append(f"t{t}-facet{j}")
        sw, tw = sub_words[t][s], topic_words[t]
        title = " ".join(rng.choice(sw, size=2).tolist() + rng.choice(tw, size=1).tolist())
        body_words = []
        for _ in range(15):
            r = rng.random()
            pool = sw if r < 0.4 else tw if r < 0.7 else noise
            body_words.append(str(rng.choice(pool)))
        body = " ".join(body_words)
        created = cfg.start + i * cfg.spacing

        if rng.random() < cfg.expert_accept_rate:
            if rng.random() < cfg.primary_share:
                best = primary[subs[t][s]]
            else:
                best = int(rng.choice(topic_experts[hubs[t]]))
        else:
            best = int(rng.choice(regulars if rng.random() < cfg.regular_accept_share else casual))
        n_ans = int(rng.integers(cfg.answers_range[0], cfg.answers_range[1] + 1))
        others: list[int] = []
        if rng.random() < cfg.expert_extra_rate:
            u = int(rng.choice(topic_experts[hubs[t]] + [primary[x] for x in subs[t]]))
            if u != best:
                others.append(u)
        while len(others) < n_ans - 1:
            u = int(rng.choice(regulars if rng.random() < cfg.regular_answer_share else casual))
            if u != best and u not in others:
                others.append(u)
        answerers = [best] + others
        order = rng.permutation(len(answerers))
        qid = post_id
        post_id += 1
        answer_posts = []
        accepted_id = None
        for k, idx in enumerate(order):
            u = answerers[idx]
            aid = post_id
            post_id += 1
            if u == best:
                accepted_id = aid
            answer_posts.append(RawPost(aid, "answer", u, created + 600.0 * (k + 1), parent_id=qid,
                                        body=" ".join(rng.choice(sw, size=5).tolist())))
        accepted_count[best] = accepted_count.get(best, 0) + 1
        asker = int(rng.choice(askers))
        posts.append(RawPost(qid, "question", asker, created, accepted_answer_id=accepted_id,
                             tags=tuple(tags), title=title, body=body))
        posts.extend(answer_posts)

    users = [UserRecord(u, 1 + 10 * accepted_count.get(u, 0) + int(rng.integers(0, 50)))
             for u in range(1, askers[-1] + 1)]
    return PlantedCorpus(posts, users, primary, topic_experts, casual, cfg)


def posts_xml(posts: list[RawPost]) -> bytes:
    root = ET.Element("posts")
    for p in posts:
        attrs = {
            "Id": str(p.post_id),
            "PostTypeId": "1" if p.post_type == "question" else "2",
            "CreationDate": format_timestamp(p.creation_date),
            "OwnerUserId": str(p.owner_user_id),
            "Score": str(p.score),
            "Body": f"<p>{p.body}</p>",
        }
        if p.post_type == "question":
            attrs["Title"] = p.title
            attrs["Tags"] = "".join(f"<{t}>" for t in p.tags)
            if p.accepted_answer_id is not None:
                attrs["AcceptedAnswerId"] = str(p.accepted_answer_id)
        else:
            attrs["ParentId"] = str(p.parent_id)
        ET.SubElement(root, "row", attrs)
    return _tobytes(root)


def users_xml(users: list[UserRecord]) -> bytes:
    root = ET.Element("users")
    for u in users:
        ET.SubElement(root, "row", {"Id": str(u.user_id), "Reputation": str(u.reputation)})
    return _tobytes(root)


def _tobytes(root: ET.Element) -> bytes:
    buf = io.BytesIO()
    ET.ElementTree(root).write(buf, encoding="utf-8", xml_declaration=True)
    return buf.getvalue()
