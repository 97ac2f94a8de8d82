"""Experiment configuration (JSON on disk, dataclasses in memory)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .datasets import DEFAULT_SHOTS, SCENARIO1_GROUP_SIZE, SCENARIO1_PROBLEMS, SUBMISSION_CAP
from .encoder import EncoderConfig
from .meta import MamlConfig


@dataclass
class FinetuneConfig:
    steps: int = 10
    lr: float = 5e-5
    max_pairs: int = 256


@dataclass
class ExperimentConfig:
    task: str = "binary"  # binary | retrieval
    scenario: str = "I"  # I | II | III
    corpus_root: str | None = None
    metadata: str | None = None
    store: str | None = None
    train_dataset: str | None = None
    lang: str = "Java"  # scenario I language
    train_lang: str = "Java"
    eval_lang: str = "Cpp"
    shots: list[int] = field(default_factory=lambda: list(DEFAULT_SHOTS))
    seeds: list[int] = field(default_factory=lambda: [0])
    n_problems: int = SCENARIO1_PROBLEMS
    group_size: int = SCENARIO1_GROUP_SIZE
    cap: int | None = SUBMISSION_CAP
    eval_pairs: int = 1000
    map_r: int | None = None  # None: R = size of the relevant set
    no_meta: bool = False
    supervised_steps: int | None = None  # conventional training; default matches meta-step count
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    maml: MamlConfig = field(default_factory=MamlConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)

    def __post_init__(self):
        if self.task not in ("binary", "retrieval"):
            raise ValueError(f"task must be binary or retrieval, got {self.task!r}")
        if self.scenario not in ("I", "II", "III"):
            raise ValueError(f"scenario must be I, II or III, got {self.scenario!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if not self.shots or any(k < 1 for k in self.shots):
            raise ValueError("shots must be positive integers")
        if self.scenario == "III" and not self.train_dataset:
            raise ValueError("scenario III needs train_dataset")
        for name in ("corpus_root", "metadata", "store", "train_dataset"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{name} path does not exist: {p}")

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if base_dir is not None:
            for name in ("corpus_root", "metadata", "store", "train_dataset"):
                if d.get(name) and not Path(d[name]).is_absolute():
                    d[name] = str(Path(base_dir) / d[name])
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        d["maml"] = MamlConfig.from_dict(d.get("maml", {}))
        d["finetune"] = FinetuneConfig(**d.get("finetune", {}))
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
