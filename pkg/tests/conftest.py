from __future__ import annotations

import csv
from pathlib import Path

import pytest
from hypothesis import settings

from fewshot_ccd.corpus import Corpus, Submission

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def write_tree(root: Path, rows, sources=None) -> Path:
    """Write ``rows`` (sid, pid, lang, status, filename) as a corpus tree; returns metadata path."""
    sources = sources or {}
    meta = root / "metadata.csv"
    with open(meta, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["submission_id", "problem_id", "language", "status", "filename"])
        for sid, pid, lang, status, fname in rows:
            d = root / "corpus" / pid
            d.mkdir(parents=True, exist_ok=True)
            (d / fname).write_text(sources.get(sid, f"int {sid} = {pid};\n"), encoding="utf-8")
            w.writerow([sid, pid, lang, status, fname])
    return meta


@pytest.fixture
def tree_factory(tmp_path):
    def make(rows, sources=None):
        return tmp_path / "corpus", write_tree(tmp_path, rows, sources)

    return make


def make_corpus(spec: dict[str, dict[str, int]]) -> Corpus:
    """``{problem: {language: count}}`` -> in-memory corpus with distinct sources."""
    subs = []
    for pid, langs in spec.items():
        for lang, n in langs.items():
            for k in range(n):
                sid = f"{pid}_{lang}_{k:03d}"
                subs.append(Submission(sid, pid, lang, f"{lang} {pid} tok{k} body\n"))
    return Corpus.from_submissions(subs)
