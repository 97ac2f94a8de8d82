from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_corpus
from fewshot_ccd.corpus import (
    Corpus,
    Submission,
    corpus_stats,
    filter_language,
    load_corpus,
    load_store,
    normalize_language,
    save_store,
)
from fewshot_ccd.errors import EmptyCorpus, MalformedMetadata, MissingFile, UnknownLanguage


def _rows(n_problems=2, accepted=3, rejected=1):
    rows = []
    for p in range(n_problems):
        for k in range(accepted + rejected):
            status = "Accepted" if k < accepted else "Wrong Answer"
            rows.append((f"s{p}{k}", f"p{p}", "Java", status, f"s{p}{k}.java"))
    return rows


def test_rejected_filtered(tree_factory):
    root, meta = tree_factory(_rows())
    corpus = load_corpus(root, meta)
    assert len(corpus.problems) == 2
    assert len(corpus) == 6
    assert all(s.status == "Accepted" for s in corpus.submissions())


def test_missing_file_names_path(tree_factory):
    root, meta = tree_factory(_rows())
    (root / "p1" / "s10.java").unlink()
    with pytest.raises(MissingFile) as exc:
        load_corpus(root, meta)
    assert "s10.java" in str(exc.value)


def test_bad_header(tmp_path):
    meta = tmp_path / "m.csv"
    meta.write_text("id,problem\n")
    with pytest.raises(MalformedMetadata):
        load_corpus(tmp_path, meta)


def test_bad_arity(tree_factory):
    root, meta = tree_factory(_rows())
    with open(meta, "a") as fh:
        fh.write("x,y,z\n")
    with pytest.raises(MalformedMetadata):
        load_corpus(root, meta)


def test_duplicate_id(tree_factory):
    rows = _rows()
    root, meta = tree_factory(rows + [rows[0]])
    with pytest.raises(MalformedMetadata):
        load_corpus(root, meta)


def test_all_rejected_is_empty(tree_factory):
    root, meta = tree_factory(_rows(accepted=0, rejected=2))
    with pytest.raises(EmptyCorpus):
        load_corpus(root, meta)


def test_invalid_utf8_replaced(tree_factory):
    root, meta = tree_factory(_rows(1, 1, 0))
    (root / "p0" / "s00.java").write_bytes(b"int x = 1; \xff\xfe\n")
    corpus = load_corpus(root, meta)
    assert "�" in next(corpus.submissions()).source


def test_load_is_deterministic_and_ordered(tree_factory):
    rows = _rows(3, 4, 0)
    root, meta = tree_factory(list(reversed(rows)))
    a, b = load_corpus(root, meta), load_corpus(root, meta)
    assert a == b
    assert a.problem_ids() == sorted(a.problem_ids())
    for p in a.problems.values():
        ids = [s.submission_id for s in p.submissions]
        assert ids == sorted(ids)


def test_poj104_shaped_tree(tree_factory):
    rows = [(f"s{p}_{k}", f"{p + 1}", "C++", "Accepted", f"{k}.txt") for p in range(104) for k in range(2)]
    root, meta = tree_factory(rows)
    corpus = load_corpus(root, meta)
    assert len(corpus.problems) == 104
    pids = corpus.problem_ids()
    train, dev, test = pids[:64], pids[64:80], pids[80:]
    assert (len(train), len(dev), len(test)) == (64, 16, 24)
    assert {s.language for s in corpus.submissions()} == {"Cpp"}


def test_filter_language():
    corpus = make_corpus({"p1": {"Java": 10, "Cpp": 5}, "p2": {"Java": 10, "Cpp": 5}})
    java = filter_language(corpus, "java")
    assert len(java) == 20
    assert all(len(p.submissions) == 10 for p in java.problems.values())
    assert filter_language(java, "Java") == java
    with pytest.raises(UnknownLanguage):
        filter_language(corpus, "Ruby")


def test_normalize_language_aliases():
    assert normalize_language("c++") == "Cpp"
    assert normalize_language("JAVA") == "Java"
    assert normalize_language("ruby") == "Ruby"


def test_stats():
    corpus = make_corpus({"p1": {"Java": 3}, "p2": {"Java": 3}})
    st_ = corpus_stats(corpus)
    assert st_["problem_count"] == 2 and st_["submission_count"] == 6
    empty = corpus_stats(Corpus({}))
    assert empty["problem_count"] == 0 and empty["submission_count"] == 0
    assert empty["min_submissions_per_problem"] == 0


def test_store_roundtrip(tmp_path):
    corpus = make_corpus({"p1": {"Java": 3, "Ruby": 2}, "p2": {"Cpp": 4}})
    save_store(corpus, tmp_path / "s.jsonl")
    assert load_store(tmp_path / "s.jsonl") == corpus


@given(st.lists(st.tuples(st.sampled_from("abcd"), st.sampled_from(["Java", "Cpp"])), min_size=1, max_size=30))
def test_from_submissions_order_is_total(entries):
    subs = [Submission(f"id{i:03d}", p, lang, "x") for i, (p, lang) in enumerate(entries)]
    c1 = Corpus.from_submissions(subs)
    c2 = Corpus.from_submissions(reversed(subs))
    assert c1 == c2
    flat = [s.submission_id for s in c1.submissions()]
    assert len(flat) == len(subs)
