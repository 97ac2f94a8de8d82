"""Deterministic synthetic CodeNet-like corpora.

Each problem owns a private set of signature identifiers. A submission is
a few templated statements whose identifier slots hold a signature token
with probability ``1 - noise_rate`` and a language filler token otherwise.
Filler vocabularies are disjoint across languages, so languages differ
even when the problem is the same.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .corpus import KNOWN_LANGUAGES, Corpus, Submission
from .rng import Xoshiro256

_TEMPLATES = {
    "Java": ("{0} {1} {2} {3};", ".java"),
    "Cpp": ("{0} {1} {2} {3};", ".cpp"),
    "Ruby": ("{0} {1} {2} {3}", ".rb"),
}
_OTHER = ("{0} := {1} {2} {3}", ".txt")
SLOTS = 4


@dataclass(frozen=True)
class SyntheticSpec:
    n_problems: int = 30
    n_submissions: int = 50
    n_languages: int = 1
    vocab_per_problem: int = 8
    noise_rate: float = 0.3
    seed: int = 0
    statements: int = 16
    filler_vocab: int = 64

    def __post_init__(self):
        if self.n_problems < 2:
            raise ValueError("n_problems must be >= 2")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")
        if min(self.n_submissions, self.n_languages, self.vocab_per_problem, self.statements, self.filler_vocab) < 1:
            raise ValueError("counts must be >= 1")

    @property
    def languages(self) -> list[str]:
        names = list(KNOWN_LANGUAGES[: self.n_languages])
        names += [f"Lang{i + 1}" for i in range(len(names), self.n_languages)]
        return names


def problem_id(i: int) -> str:
    return f"p{i:05d}"


def signature_tokens(spec: SyntheticSpec, i: int) -> list[str]:
    return [f"sig{i}x{j}" for j in range(spec.vocab_per_problem)]


def filler_tokens(spec: SyntheticSpec, lang: str) -> list[str]:
    return [f"{lang.lower()}_f{j}" for j in range(spec.filler_vocab)]


def _submissions(spec: SyntheticSpec):
    rng = Xoshiro256(spec.seed)
    fillers = {lang: filler_tokens(spec, lang) for lang in spec.languages}
    for i in range(spec.n_problems):
        sig = signature_tokens(spec, i)
        pid = problem_id(i)
        for lang in spec.languages:
            template, ext = _TEMPLATES.get(lang, _OTHER)
            for k in range(spec.n_submissions):
                # signature tokens are dealt from a reshuffled deck so that
                # every submission with enough signature slots uses them all
                deck: list[str] = []
                lines = []
                for _ in range(spec.statements):
                    slots = []
                    for _ in range(SLOTS):
                        if rng.random() < spec.noise_rate:
                            slots.append(rng.choice(fillers[lang]))
                            continue
                        if not deck:
                            deck = list(sig)
                            rng.shuffle(deck)
                        slots.append(deck.pop())
                    lines.append(template.format(*slots))
                sid = f"s{i:05d}{lang[:2].lower()}{k:04d}"
                yield Submission(sid, pid, lang, "\n".join(lines) + "\n"), f"{sid}{ext}"


def generate_corpus(spec: SyntheticSpec) -> Corpus:
    """In-memory equivalent of :func:`generate` followed by ``load_corpus``."""
    return Corpus.from_submissions(s for s, _ in _submissions(spec))


def generate(spec: SyntheticSpec, out_dir) -> tuple[Path, Path]:
    """Write ``out_dir/corpus/<problem>/<file>`` plus ``out_dir/metadata.csv``."""
    out = Path(out_dir)
    root = out / "corpus"
    root.mkdir(parents=True, exist_ok=True)
    meta = out / "metadata.csv"
    with open(meta, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["submission_id", "problem_id", "language", "status", "filename"])
        for sub, fname in _submissions(spec):
            pdir = root / sub.problem_id
            pdir.mkdir(exist_ok=True)
            (pdir / fname).write_text(sub.source, encoding="utf-8", newline="\n")
            w.writerow([sub.submission_id, sub.problem_id, sub.language, "Accepted", fname])
    return root, meta
