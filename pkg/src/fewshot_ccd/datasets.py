"""Binary-pair and retrieval datasets, JSONL I/O and scenario manifests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Corpus, Submission, filter_language, normalize_language
from .errors import (
    InsufficientPairs,
    InsufficientProblems,
    InsufficientSubmissions,
    LanguageOverlap,
    MalformedDataset,
    ParseError,
    UnknownLanguage,
)
from .rng import Xoshiro256

PAIR_KEYS = ("func1", "func2", "id1", "id2", "index", "label")
RETRIEVAL_KEYS = ("code", "id", "label")

SCENARIO1_PROBLEMS = 105
SCENARIO1_GROUP_SIZE = 15
SUBMISSION_CAP = 499
DEFAULT_SHOTS = (5, 10, 15)


@dataclass(frozen=True)
class PairRecord:
    func1: str
    func2: str
    id1: str
    id2: str
    index: str
    label: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in PAIR_KEYS}

    @classmethod
    def from_dict(cls, d: dict) -> "PairRecord":
        missing = [k for k in PAIR_KEYS if k not in d]
        if missing:
            raise MalformedDataset(f"pair record missing {missing}")
        label = d["label"]
        # CodeXGLUE-style files use 0/1
        if label in (0, 1) and not isinstance(label, float):
            label = bool(label)
        if not isinstance(label, bool):
            raise MalformedDataset(f"bad label {label!r}")
        return cls(str(d["func1"]), str(d["func2"]), str(d["id1"]), str(d["id2"]), str(d["index"]), label)


@dataclass(frozen=True)
class RetrievalRecord:
    code: str
    id: str
    label: str

    def to_dict(self) -> dict:
        return {"code": self.code, "id": self.id, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "RetrievalRecord":
        missing = [k for k in RETRIEVAL_KEYS if k not in d]
        if missing:
            raise MalformedDataset(f"retrieval record missing {missing}")
        return cls(str(d["code"]), str(d["id"]), str(d["label"]))


# --------------------------------------------------------------------------
# JSONL


def write_jsonl(records: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            d = r.to_dict() if hasattr(r, "to_dict") else r
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


def read_jsonl(path, kind: str | None = None) -> list:
    """Read a JSONL file.

    ``kind`` may be ``"pair"``, ``"retrieval"``, or None for raw dicts.
    """
    out = []
    parse = {"pair": PairRecord.from_dict, "retrieval": RetrievalRecord.from_dict, None: None}[kind]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, exc.msg) from exc
            if not isinstance(d, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            if parse is not None:
                try:
                    d = parse(d)
                except MalformedDataset as exc:
                    raise MalformedDataset(f"{path}:{lineno}: {exc}") from exc
            out.append(d)
    return out


def detect_kind(path) -> str:
    """Guess whether a JSONL file holds pair or retrieval records."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, lineno, exc.msg) from exc
            if not isinstance(d, dict):
                raise ParseError(path, lineno, "expected a JSON object")
            if "code" in d:
                return "retrieval"
            if "func1" in d or "func2" in d:
                return "pair"
            raise MalformedDataset(f"{path}:{lineno}: neither pair nor retrieval schema")
    raise MalformedDataset(f"{path}: empty dataset")


# --------------------------------------------------------------------------
# Pair construction


def _unrank_pair(r: int, n: int) -> tuple[int, int]:
    # r-th pair (i<j) of range(n), row-major
    i = 0
    row = n - 1
    while r >= row:
        r -= row
        i += 1
        row -= 1
    return i, i + 1 + r


def _locate(cum: Sequence[int], r: int) -> int:
    lo, hi = 0, len(cum) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid + 1] <= r:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _cumulative(counts: Sequence[int]) -> list[int]:
    cum = [0]
    for c in counts:
        cum.append(cum[-1] + c)
    return cum


class PairSpace:
    """Implicit enumeration of within-class and cross-class unordered pairs.

    ``groups`` is a list of item lists, one per class. Pairs are indexed so
    that sampling without replacement reduces to sampling distinct integers.
    """

    def __init__(self, groups: Sequence[Sequence]):
        self.groups = [list(g) for g in groups]
        sizes = [len(g) for g in self.groups]
        self.sizes = sizes
        self.pos_cum = _cumulative([n * (n - 1) // 2 for n in sizes])
        # cross pairs of class p with every later class
        tail = _cumulative(sizes[::-1])[::-1]  # tail[p] = sum(sizes[p:])
        self.tail = tail
        self.neg_cum = _cumulative([sizes[p] * tail[p + 1] for p in range(len(sizes))])

    @property
    def n_positive(self) -> int:
        return self.pos_cum[-1]

    @property
    def n_negative(self) -> int:
        return self.neg_cum[-1]

    def positive(self, r: int):
        p = _locate(self.pos_cum, r)
        i, j = _unrank_pair(r - self.pos_cum[p], self.sizes[p])
        return self.groups[p][i], self.groups[p][j]

    def negative(self, r: int):
        p = _locate(self.neg_cum, r)
        r -= self.neg_cum[p]
        width = self.tail[p + 1]
        i, rest = divmod(r, width)
        q = p + 1
        while rest >= self.sizes[q]:
            rest -= self.sizes[q]
            q += 1
        return self.groups[p][i], self.groups[q][rest]


def sample_balanced_pairs(groups: Sequence[Sequence], n_each: int, rng: Xoshiro256):
    """``n_each`` positives and negatives, without replacement, shuffled.

    Returns ``(a, b, label)`` triples with a random orientation per pair.
    """
    space = PairSpace(groups)
    if n_each > space.n_positive:
        raise InsufficientPairs(
            f"requested {n_each} positive pairs, only {space.n_positive} distinct exist"
        )
    if n_each > space.n_negative:
        raise InsufficientPairs(
            f"requested {n_each} negative pairs, only {space.n_negative} distinct exist"
        )
    out = []
    for r in rng.sample_indices(space.n_positive, n_each):
        a, b = space.positive(r)
        out.append((a, b, True))
    for r in rng.sample_indices(space.n_negative, n_each):
        a, b = space.negative(r)
        out.append((a, b, False))
    out = [(b, a, y) if rng.below(2) else (a, b, y) for a, b, y in out]
    rng.shuffle(out)
    return out


def build_binary_pairs(corpus: Corpus, target_count: int, seed: int) -> list[PairRecord]:
    if target_count % 2:
        raise ValueError("target_count must be even")
    if len(corpus.problems) < 2:
        raise InsufficientPairs("need at least two problems for negative pairs")
    groups = [list(p.submissions) for p in corpus.problems.values()]
    rng = Xoshiro256(seed)
    triples = sample_balanced_pairs(groups, target_count // 2, rng)
    return [
        PairRecord(a.source, b.source, a.submission_id, b.submission_id, a.problem_id, y)
        for a, b, y in triples
    ]


def build_retrieval(corpus: Corpus) -> list[RetrievalRecord]:
    return [RetrievalRecord(s.source, s.submission_id, s.problem_id) for s in corpus.submissions()]


# --------------------------------------------------------------------------
# Scenario manifests


@dataclass
class ScenarioManifest:
    scenario: str
    group_id: int
    seed: int
    K: int
    train_lang: str
    eval_lang: str
    train: list[str]
    support: list[str]
    test: list[str]
    train_problems: list[str] = field(default_factory=list)
    eval_problems: list[str] = field(default_factory=list)
    train_path: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioManifest":
        try:
            return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})
        except TypeError as exc:
            raise MalformedDataset(f"bad manifest: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ScenarioManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def check(self) -> None:
        """Raise ``OverlapError`` if support and test share a submission."""
        from .errors import OverlapError

        if set(self.support) & set(self.test):
            raise OverlapError("support and test sets overlap")
        if self.scenario == "I" and set(self.train_problems) & set(self.eval_problems):
            raise OverlapError("train and evaluation problems overlap")


def cap_submissions(subs: Sequence[Submission], cap: int | None, rng: Xoshiro256) -> list[Submission]:
    """First ``cap`` submissions after a seeded shuffle, returned in id order."""
    items = list(subs)
    if cap is not None and len(items) > cap:
        rng.shuffle(items)
        items = items[:cap]
    return sorted(items, key=lambda s: s.submission_id)


def _split_support(subs: Sequence[Submission], K: int, rng: Xoshiro256) -> tuple[list[str], list[str]]:
    ids = [s.submission_id for s in subs]
    if len(ids) <= K:
        raise InsufficientSubmissions(
            f"problem {subs[0].problem_id if subs else '?'} has {len(ids)} submissions, need > {K}"
        )
    chosen = set(rng.sample(ids, K))
    return sorted(chosen), [i for i in ids if i not in chosen]


def split_scenario1(
    corpus: Corpus,
    lang: str,
    shots: Sequence[int] = DEFAULT_SHOTS,
    seed: int = 0,
    n_problems: int = SCENARIO1_PROBLEMS,
    group_size: int = SCENARIO1_GROUP_SIZE,
    cap: int | None = SUBMISSION_CAP,
) -> list[ScenarioManifest]:
    """Unseen-problem manifests: group 1 trains, groups 2..n are few-shot targets.

    ``K`` is the number of support submissions per problem.
    """
    lang = normalize_language(lang)
    sub = filter_language(corpus, lang)
    if n_problems % group_size:
        raise ValueError("n_problems must be a multiple of group_size")
    pids = sub.problem_ids()
    if len(pids) < n_problems:
        raise InsufficientProblems(f"{len(pids)} {lang} problems available, need {n_problems}")
    if cap is not None:
        short = [p for p in pids if len(sub.problems[p].submissions) < cap]
        eligible = [p for p in pids if p not in set(short)]
        if len(eligible) < n_problems:
            raise InsufficientSubmissions(
                f"only {len(eligible)} problems have >= {cap} {lang} submissions, need {n_problems}"
            )
        pids = eligible
    rng = Xoshiro256(seed)
    chosen = rng.sample(pids, n_problems)
    groups = [sorted(chosen[g : g + group_size]) for g in range(0, n_problems, group_size)]
    capped = {p: cap_submissions(sub.problems[p].submissions, cap, rng) for p in sorted(chosen)}

    train_ids = [s.submission_id for p in groups[0] for s in capped[p]]
    manifests = []
    for gi, group in enumerate(groups[1:], start=2):
        for K in shots:
            support, test = [], []
            for p in group:
                s_ids, t_ids = _split_support(capped[p], K, rng)
                support += s_ids
                test += t_ids
            manifests.append(
                ScenarioManifest(
                    scenario="I",
                    group_id=gi,
                    seed=seed,
                    K=K,
                    train_lang=lang,
                    eval_lang=lang,
                    train=list(train_ids),
                    support=support,
                    test=test,
                    train_problems=list(groups[0]),
                    eval_problems=list(group),
                )
            )
    return manifests


def _eval_side(corpus: Corpus, eval_lang: str, problems: Sequence[str], K: int, rng, cap):
    support, test = [], []
    for p in problems:
        subs = [s for s in corpus.problems[p].submissions if s.language == eval_lang]
        subs = cap_submissions(subs, cap, rng)
        s_ids, t_ids = _split_support(subs, K, rng)
        support += s_ids
        test += t_ids
    return support, test


def split_scenario2(
    corpus: Corpus,
    train_lang: str,
    eval_lang: str,
    K: int,
    seed: int = 0,
    problems: Sequence[str] | None = None,
    cap: int | None = SUBMISSION_CAP,
) -> ScenarioManifest:
    """Unseen-language manifest over the problems both languages share."""
    train_lang, eval_lang = normalize_language(train_lang), normalize_language(eval_lang)
    if train_lang == eval_lang:
        raise LanguageOverlap(f"train and eval language are both {train_lang}")
    present = corpus.languages_present
    for lang in (train_lang, eval_lang):
        if lang not in present:
            raise UnknownLanguage(f"language {lang!r} not in corpus")
    shared = [
        pid
        for pid, p in corpus.problems.items()
        if {train_lang, eval_lang} <= {s.language for s in p.submissions}
    ]
    if problems is not None:
        shared = [p for p in shared if p in set(problems)]
    if not shared:
        raise InsufficientProblems(f"no problems solved in both {train_lang} and {eval_lang}")
    rng = Xoshiro256(seed)
    train = []
    for p in shared:
        subs = [s for s in corpus.problems[p].submissions if s.language == train_lang]
        train += [s.submission_id for s in cap_submissions(subs, cap, rng)]
    support, test = _eval_side(corpus, eval_lang, shared, K, rng, cap)
    return ScenarioManifest(
        scenario="II",
        group_id=1,
        seed=seed,
        K=K,
        train_lang=train_lang,
        eval_lang=eval_lang,
        train=train,
        support=support,
        test=test,
        train_problems=list(shared),
        eval_problems=list(shared),
    )


def load_external_train(path) -> tuple[str, list]:
    """Validate an external training file; returns ``(kind, records)``."""
    kind = detect_kind(path)
    return kind, read_jsonl(path, kind)


def split_scenario3(
    train_dataset,
    eval_corpus: Corpus,
    eval_lang: str,
    K: int,
    seed: int = 0,
    cap: int | None = SUBMISSION_CAP,
) -> ScenarioManifest:
    """Unseen dataset + language: external training file, corpus-side evaluation."""
    kind, records = load_external_train(train_dataset)
    if kind == "pair":
        train_ids = sorted({r.id1 for r in records} | {r.id2 for r in records})
        train_problems = sorted({r.index for r in records})
    else:
        train_ids = [r.id for r in records]
        train_problems = sorted({r.label for r in records})
    eval_lang = normalize_language(eval_lang)
    sub = filter_language(eval_corpus, eval_lang)
    rng = Xoshiro256(seed)
    support, test = _eval_side(sub, eval_lang, sub.problem_ids(), K, rng, cap)
    return ScenarioManifest(
        scenario="III",
        group_id=1,
        seed=seed,
        K=K,
        train_lang="external",
        eval_lang=eval_lang,
        train=train_ids,
        support=support,
        test=test,
        train_problems=train_problems,
        eval_problems=sub.problem_ids(),
        train_path=str(train_dataset),
    )
