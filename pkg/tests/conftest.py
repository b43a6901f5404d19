import dataclasses
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tuef.ingest import RawPost, UserRecord, clean_and_split  # noqa: E402

DAY = 86400.0


class DumpBuilder:
    """Hand-built dumps: each question carries its answerers, accepted first."""

    def __init__(self):
        self.posts: list[RawPost] = []
        self.users: dict[int, int] = {}
        self._next = 1

    def question(self, tags, answerers, accepted=0, asker=999, title="", body="", t=None, extra_answers=()):
        qid = self._next
        self._next += 1
        t = float(qid) * DAY if t is None else t
        aids = []
        for k, u in enumerate(list(answerers) + list(extra_answers)):
            aids.append((self._next, u))
            self._next += 1
        acc_id = aids[accepted][0] if answerers else None
        self.posts.append(RawPost(qid, "question", asker, t, accepted_answer_id=acc_id, tags=tuple(tags),
                                  title=title, body=body))
        for k, (aid, u) in enumerate(aids):
            self.posts.append(RawPost(aid, "answer", u, t + 60.0 * (k + 1), parent_id=qid))
            self.users.setdefault(u, 1)
        self.users.setdefault(asker, 1)
        return qid

    def dataset(self, split=0.8):
        users = [UserRecord(u, r) for u, r in sorted(self.users.items())]
        return clean_and_split(self.posts, users, split_ratio=split)

    def train_only(self):
        """Every question in the training period, for graph-level tests."""
        ds = self.dataset(split=0.5)
        return dataclasses.replace(ds, train_questions=ds.questions, test_questions=())


@pytest.fixture
def dump():
    return DumpBuilder()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
