from tuef.ingest import clean_and_split, parse_dump_files
from tuef.synthetic import SyntheticConfig, generate


def test_generator_is_seeded():
    a, b = generate(SyntheticConfig(n_questions=100, seed=3)), generate(SyntheticConfig(n_questions=100, seed=3))
    assert a.posts == b.posts and a.users == b.users
    assert generate(SyntheticConfig(n_questions=100, seed=4)).posts != a.posts


def test_planted_structure():
    c = generate(SyntheticConfig(n_questions=400))
    questions = [p for p in c.posts if p.post_type == "question"]
    answers = {p.post_id: p for p in c.posts if p.post_type == "answer"}
    assert len(questions) == 400
    for q in questions:
        hub = [t for t in q.tags if t.startswith("topic")]
        assert len(hub) == 1
        topic = hub[0][len("topic"):]
        assert all(t == hub[0] or t.startswith(f"t{topic}-") for t in q.tags)
        assert q.accepted_answer_id in answers and q.owner_user_id != answers[q.accepted_answer_id].owner_user_id
    expert_share = sum(answers[q.accepted_answer_id].owner_user_id in c.primary.values() for q in questions) / 400
    assert 0.25 < expert_share < 0.55


def test_xml_round_trip(tmp_path):
    c = generate(SyntheticConfig(n_questions=50))
    posts_path, users_path = c.write_xml(tmp_path)
    posts, users = parse_dump_files(posts_path, users_path)
    assert posts == c.posts and users == c.users
    ds = clean_and_split(posts, users)
    assert len(ds.questions) == 50
