"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ExperimentConfig
from .corpus import corpus_stats, filter_language, load_corpus, load_store, save_store
from .datasets import ScenarioManifest, build_binary_pairs, build_retrieval, write_jsonl
from .encoder import Params
from .errors import DataError
from .experiment import (
    Workspace,
    best_shot,
    evaluate_manifest,
    finetune_for_manifest,
    load_experiment_corpus,
    make_manifests,
    make_report,
    read_aggregate,
    run_experiment,
    train_for_manifest,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("fewshot_ccd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(args) -> ExperimentConfig:
    if not args.config:
        raise UsageError("--config is required")
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = ExperimentConfig.load(path)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    if getattr(args, "objective", None):
        cfg = replace(cfg, maml=replace(cfg.maml, objective=args.objective))
    if getattr(args, "no_meta", False):
        cfg = replace(cfg, no_meta=True)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=[args.seed])
    return cfg


def _corpus_from_args(args):
    if getattr(args, "store", None):
        return load_store(args.store)
    if getattr(args, "root", None) and getattr(args, "metadata", None):
        return load_corpus(args.root, args.metadata)
    if getattr(args, "config", None):
        return load_experiment_corpus(_load_config(args))
    raise UsageError("give --store, --root and --metadata, or --config")


def _out(args) -> Path:
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def cmd_extract(args) -> int:
    if not (args.root and args.metadata):
        raise UsageError("extract needs --root and --metadata")
    corpus = load_corpus(args.root, args.metadata)
    if args.lang:
        corpus = filter_language(corpus, args.lang)
    if args.out:
        save_store(corpus, args.out)
    n_sub = len(corpus)
    print(f"extracted {len(corpus.problems)} problems, {n_sub} submissions")
    if args.stats:
        print(json.dumps(corpus_stats(corpus), sort_keys=True))
    return EXIT_OK


def cmd_build(args) -> int:
    corpus = _corpus_from_args(args)
    if args.lang:
        corpus = filter_language(corpus, args.lang)
    out = _out(args)
    if args.kind == "pairs":
        records = build_binary_pairs(corpus, args.count, args.seed or 0)
    else:
        records = build_retrieval(corpus)
    write_jsonl(records, out)
    print(f"wrote {len(records)} {args.kind} records to {out}")
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _load_config(args)
    corpus = load_experiment_corpus(cfg)
    out = _out(args)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for seed in cfg.seeds:
        for m in make_manifests(cfg, corpus, seed):
            m.save(out / f"manifest_S{m.scenario}_g{m.group_id}_K{m.K}_seed{seed}.json")
            n += 1
    print(f"wrote {n} manifests to {out}")
    return EXIT_OK


def _manifest(args) -> ScenarioManifest:
    if not args.manifest:
        raise UsageError("--manifest is required")
    return ScenarioManifest.load(args.manifest)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    m = _manifest(args)
    out = _out(args)
    ws = Workspace(load_experiment_corpus(cfg), cfg.encoder)
    params, tlog = train_for_manifest(cfg, ws, m, m.seed, cfg.no_meta, cfg.maml.objective)
    params.save(out)
    if len(tlog):
        tlog.write_csv(out.with_suffix(".trainlog.csv"))
    print(f"saved parameters to {out}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    m = _manifest(args)
    out = _out(args)
    ws = Workspace(load_experiment_corpus(cfg), cfg.encoder)
    tuned = finetune_for_manifest(cfg, ws, Params.load(args.params), m, m.seed)
    tuned.save(out)
    print(f"saved fine-tuned parameters to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    m = _manifest(args)
    params = Params.load(args.params)
    ws = Workspace(load_experiment_corpus(cfg), params.config)
    metric = evaluate_manifest(cfg, ws, params, m, m.seed)
    rep = make_report(cfg, m, m.seed, metric, cfg.no_meta, cfg.maml.objective)
    text = json.dumps(rep, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    rows = run_experiment(cfg, _out(args))
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} cells, {len(failed)} failed; aggregate at {Path(args.out) / 'aggregate.csv'}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_report(args) -> int:
    out = _out(args)
    path = out / "aggregate.csv" if out.is_dir() else out
    if not path.exists():
        raise UsageError(f"no aggregate CSV at {path}")
    rows = read_aggregate(path)
    summary = {"cells": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}
    if any(r["f1"] for r in rows):
        summary.update(best_shot(rows))
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--no-meta", action="store_true", help="conventional training instead of MAML")
    common.add_argument("--objective", choices=["ce", "infonce"], default=None)
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="fewshot-ccd", description="Few-shot code clone detection experiments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="validate a corpus tree and write a JSONL store")
    p.add_argument("--root", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--lang", default=None)
    p.add_argument("--stats", action="store_true", help="print corpus statistics as JSON")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("build", parents=[common], help="materialize pair or retrieval JSONL")
    p.add_argument("kind", choices=["pairs", "retrieval"])
    p.add_argument("--store")
    p.add_argument("--root")
    p.add_argument("--metadata")
    p.add_argument("--lang", default=None)
    p.add_argument("--count", type=int, default=1000, help="pair count (pairs only)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("split", parents=[common], help="write scenario manifests")
    p.set_defaults(func=cmd_split)

    for name, func, helptext in (
        ("train", cmd_train, "train an encoder on a manifest's training side"),
        ("finetune", cmd_finetune, "fine-tune parameters on a manifest's support set"),
        ("eval", cmd_eval, "evaluate parameters on a manifest's test split"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--manifest")
        if name != "train":
            p.add_argument("--params", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("run", parents=[common], help="run the full matrix from a config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="summarize an aggregate CSV")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
