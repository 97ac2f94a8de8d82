"""Loading CodeNet-style corpora.

Layout on disk::

    root/<problem_id>/<filename>
    metadata.csv  ->  submission_id,problem_id,language,status,filename

Only ``Accepted`` rows survive ingest.
"""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import EmptyCorpus, MalformedMetadata, MissingFile, UnknownLanguage

METADATA_HEADER = ("submission_id", "problem_id", "language", "status", "filename")

# Named languages; anything else is kept verbatim as an "Other" language.
KNOWN_LANGUAGES = ("Java", "Cpp", "Ruby")
_ALIASES = {
    "java": "Java",
    "cpp": "Cpp",
    "c++": "Cpp",
    "cxx": "Cpp",
    "ruby": "Ruby",
}


def normalize_language(name: str) -> str:
    name = name.strip()
    return _ALIASES.get(name.lower(), name)


@dataclass(frozen=True)
class Submission:
    submission_id: str
    problem_id: str
    language: str
    source: str
    status: str = "Accepted"


@dataclass(frozen=True)
class Problem:
    problem_id: str
    submissions: tuple[Submission, ...]

    def by_language(self) -> dict[str, list[Submission]]:
        out: dict[str, list[Submission]] = {}
        for s in self.submissions:
            out.setdefault(s.language, []).append(s)
        return out


@dataclass(frozen=True)
class Corpus:
    """Immutable corpus; problems and submissions iterate in id order."""

    problems: Mapping[str, Problem] = field(default_factory=dict)

    @classmethod
    def from_submissions(cls, subs: Iterable[Submission]) -> "Corpus":
        grouped: dict[str, list[Submission]] = {}
        for s in subs:
            grouped.setdefault(s.problem_id, []).append(s)
        problems = {}
        for pid in sorted(grouped):
            items = sorted(grouped[pid], key=lambda s: s.submission_id)
            problems[pid] = Problem(pid, tuple(items))
        return cls(problems)

    @property
    def languages_present(self) -> frozenset[str]:
        return frozenset(s.language for s in self.submissions())

    def submissions(self) -> Iterator[Submission]:
        for p in self.problems.values():
            yield from p.submissions

    def problem_ids(self) -> list[str]:
        return list(self.problems)

    def subset(self, problem_ids: Iterable[str]) -> "Corpus":
        wanted = set(problem_ids)
        return Corpus({pid: p for pid, p in self.problems.items() if pid in wanted})

    def __len__(self) -> int:
        return sum(len(p.submissions) for p in self.problems.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return list(self.problems.items()) == list(other.problems.items())


def _read_metadata(path: Path) -> list[dict[str, str]]:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise MalformedMetadata(f"cannot read metadata {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedMetadata(f"{path}: empty metadata file") from None
        if tuple(h.strip() for h in header) != METADATA_HEADER:
            raise MalformedMetadata(
                f"{path}: bad header {header!r}, expected {','.join(METADATA_HEADER)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(METADATA_HEADER):
                raise MalformedMetadata(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            rows.append({k: v.strip() for k, v in zip(METADATA_HEADER, row)})
    return rows


def _read_source(path: Path) -> str:
    return path.read_bytes().decode("utf-8", errors="replace")


def load_corpus(root, metadata, workers: int = 4) -> Corpus:
    """Read accepted submissions listed in ``metadata`` from ``root``."""
    root = Path(root)
    rows = _read_metadata(Path(metadata))
    seen: set[str] = set()
    accepted = []
    for row in rows:
        sid = row["submission_id"]
        if sid in seen:
            raise MalformedMetadata(f"duplicate submission_id {sid!r}")
        seen.add(sid)
        if row["status"] != "Accepted":
            continue
        path = root / row["problem_id"] / row["filename"]
        if not path.is_file():
            raise MissingFile(path)
        accepted.append((row, path))
    if not accepted:
        raise EmptyCorpus(f"no accepted submissions in {metadata}")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        sources = list(pool.map(lambda rp: _read_source(rp[1]), accepted))
    subs = [
        Submission(
            submission_id=row["submission_id"],
            problem_id=row["problem_id"],
            language=normalize_language(row["language"]),
            source=src,
        )
        for (row, _), src in zip(accepted, sources)
    ]
    return Corpus.from_submissions(subs)


def filter_language(corpus: Corpus, lang: str) -> Corpus:
    lang = normalize_language(lang)
    if lang not in corpus.languages_present:
        raise UnknownLanguage(
            f"language {lang!r} not in corpus (present: {sorted(corpus.languages_present)})"
        )
    return Corpus.from_submissions(s for s in corpus.submissions() if s.language == lang)


def corpus_stats(corpus: Corpus) -> dict:
    per_problem = [len(p.submissions) for p in corpus.problems.values()]
    per_lang: dict[str, int] = {}
    for s in corpus.submissions():
        per_lang[s.language] = per_lang.get(s.language, 0) + 1
    return {
        "problem_count": len(corpus.problems),
        "submission_count": sum(per_problem),
        "submissions_per_language": dict(sorted(per_lang.items())),
        "min_submissions_per_problem": min(per_problem) if per_problem else 0,
        "median_submissions_per_problem": statistics.median(per_problem) if per_problem else 0,
    }


# A flat JSONL store written by the ``extract`` command; lets later steps skip
# re-validating the directory tree.
def save_store(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in corpus.submissions():
            rec = {
                "submission_id": s.submission_id,
                "problem_id": s.problem_id,
                "language": s.language,
                "source": s.source,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_store(path) -> Corpus:
    subs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                subs.append(
                    Submission(rec["submission_id"], rec["problem_id"], rec["language"], rec["source"])
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedMetadata(f"{path}:{lineno}: bad store record ({exc})") from exc
    if not subs:
        raise EmptyCorpus(f"empty corpus store {path}")
    return Corpus.from_submissions(subs)
