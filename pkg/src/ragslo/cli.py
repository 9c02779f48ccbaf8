"""Command-line entry point: index, sweep, train, eval, report.

Every stage reads a JSON run config (``--config``) and writes its artifacts
under the config's ``out_dir``::

    index.json                 retriever index, keyed by corpus hash
    sweep.jsonl                offline replay log
    sweep_summary.json
    models/<slo>__<objective>.json
    evals/<slo>__<method>.json
    report/metrics.csv, metrics.txt, fig1_action_dist.csv, ...
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .corpus import corpus_manifest, parse_squad
from .desk import COLLAPSE_CONFIG, DeskCorpusConfig, desk_corpus_bytes
from .evalreport import (
    ReportRow,
    best_fixed_action,
    emit_report,
    evaluate_fixed,
    evaluate_policy_replay,
)
from .generation import HttpBackend, SimulatedBackend
from .logstore import FeatureDimensionError, read_log, run_sweep, split_log
from .policy import PolicyModel, train_policy
from .retriever import build_index, load_index, read_index_hash, save_index

logger = logging.getLogger("ragslo")

METHOD_NAMES = {"ce": "Argmax-CE", "ce-wt": "Argmax-CE-WT"}
_METHOD_ORDER = ("Baseline (a1)", "Argmax-CE", "Argmax-CE-WT")


class CliError(RuntimeError):
    """A user-facing failure, reported as one line on stderr."""


class Workspace:
    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out_dir)

    index_path = property(lambda self: self.out / "index.json")
    log_path = property(lambda self: self.out / "sweep.jsonl")
    summary_path = property(lambda self: self.out / "sweep_summary.json")
    models_dir = property(lambda self: self.out / "models")
    evals_dir = property(lambda self: self.out / "evals")
    report_dir = property(lambda self: self.out / "report")

    def model_path(self, slo: str, objective: str) -> Path:
        return self.models_dir / f"{slo}__{objective}.json"

    def corpus_bytes(self) -> bytes:
        try:
            return Path(self.config.corpus).read_bytes()
        except FileNotFoundError:
            raise CliError(f"corpus file {self.config.corpus} not found") from None

    def corpus_hash(self, raw: Optional[bytes] = None) -> str:
        return hashlib.sha256(raw if raw is not None else self.corpus_bytes()).hexdigest()[:16]

    def require(self, path: Path, producer: str) -> Path:
        if not path.exists():
            raise CliError(f"missing {path}; run `ragslo --config <cfg> {producer}` first")
        return path

    def provenance(self, corpus_hash: str, **extra) -> dict:
        return {"corpus_hash": corpus_hash, "config_hash": self.config.config_hash(), **extra}


def _profile(config: RunConfig, name: str):
    profiles = config.profiles()
    if name not in profiles:
        raise CliError(f"unknown SLO profile {name!r}; known: {', '.join(profiles)}")
    return profiles[name]


def _slug(s: str) -> str:
    return re.sub(r"[^0-9A-Za-z]+", "-", s).strip("-").lower()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --- stages ---------------------------------------------------------------


def command_index(ws: Workspace, force: bool = False):
    """Build (or reuse) the index. Returns ``(index, paragraphs, questions, corpus_hash)``."""
    raw = ws.corpus_bytes()
    chash = ws.corpus_hash(raw)
    paragraphs, questions = parse_squad(raw)
    if not force and read_index_hash(ws.index_path) == chash:
        print(f"index: skipped (hash match) {ws.index_path}")
        index = load_index(ws.index_path, chash)
    else:
        index = build_index(paragraphs)
        save_index(index, ws.index_path, chash)
        _write_json(ws.out / "corpus_manifest.json", {**corpus_manifest(paragraphs, questions), "corpus_hash": chash})
        print(f"index: built {ws.index_path} ({index.num_docs} paragraphs, {len(index.vocabulary)} terms)")
    return index, paragraphs, questions, chash


def command_sweep(ws: Workspace, backend_kind: Optional[str], n: Optional[int], seed: Optional[int]):
    cfg = ws.config
    index, paragraphs, questions, chash = command_index(ws)
    kind = backend_kind or cfg.backend.kind
    backend = SimulatedBackend() if kind == "sim" else HttpBackend(cfg.backend.http_config())
    n = cfg.sweep.n if n is None else n
    seed = cfg.sweep.seed if seed is None else seed
    if n > len(questions):
        raise CliError(f"--n {n} exceeds the {len(questions)} questions in the corpus")
    summary = run_sweep(
        questions,
        index,
        paragraphs,
        backend,
        sample_size=n,
        seed=seed,
        path=ws.log_path,
        feature_config=cfg.features.feature_config(),
        max_failure_fraction=cfg.sweep.max_failure_fraction,
        header_extra=ws.provenance(chash),
    )
    _write_json(ws.summary_path, {**summary.to_dict(), **ws.provenance(chash, backend=kind, seed=seed)})
    print(f"sweep: {summary.completed}/{summary.requested} questions -> {ws.log_path}")


def _load_split(ws: Workspace):
    dataset = read_log(ws.require(ws.log_path, "sweep"))
    return dataset, *split_log(dataset, ws.config.split.eval_fraction, ws.config.split.seed)


def command_train(ws: Workspace, slo: str, objective: str):
    profile = _profile(ws.config, slo)
    dataset, train_set, _ = _load_split(ws)
    expected = ws.config.features.feature_config().total_dim
    if dataset.feature_dim != expected:
        raise FeatureDimensionError(
            f"log header declares feature_dim {dataset.feature_dim}, config expects {expected}"
        )
    model = train_policy(train_set, profile, ws.config.train_config(objective))
    model.metadata.update(ws.provenance(dataset.header.get("corpus_hash", ""), split_seed=ws.config.split.seed))
    path = ws.model_path(slo, model.objective)
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    final = f" (final loss {model.loss_trace[-1]:.4f})" if model.loss_trace else ""
    print(f"train: {METHOD_NAMES[model.objective]} under {slo} -> {path}{final}")


def command_eval(ws: Workspace, slo: str, model_path: Optional[str], fixed: Optional[int], best_fixed: bool):
    profile = _profile(ws.config, slo)
    dataset, _, eval_set = _load_split(ws)
    chash = dataset.header.get("corpus_hash", "")
    bf_action, bf_report = best_fixed_action(eval_set, profile)
    if model_path is not None:
        model = PolicyModel.load(ws.require(Path(model_path), "train"))
        if model.metadata.get("corpus_hash", chash) != chash:
            raise CliError(f"{model_path} was trained on a different corpus than {ws.log_path}")
        report = evaluate_policy_replay(model, eval_set, profile)
        method = METHOD_NAMES[model.objective]
        if model.slo != slo:
            method += f" [trained:{model.slo}]"
    elif fixed is not None:
        report = evaluate_fixed(fixed, eval_set, profile)
        method = "Baseline (a1)" if fixed == 1 else f"Fixed (a{fixed})"
    elif best_fixed:
        report = bf_report
        method = f"Best fixed (a{bf_action})"
    else:
        raise CliError("eval needs one of --model, --fixed or --best-fixed")
    row = ReportRow(slo, method, report, bf_action, bf_report, ws.provenance(chash, split_seed=ws.config.split.seed))
    path = ws.evals_dir / f"{slo}__{_slug(method)}.json"
    _write_json(path, row.to_dict())
    m = report
    print(
        f"eval: {slo} / {method}: acc={m.accuracy:.3f} cost={m.avg_cost_tokens:.1f} "
        f"reward={m.avg_reward:.4f} refuse={m.refusal_rate:.3f} hit={m.retrieval_hit_rate:.3f} -> {path}"
    )


def command_report(ws: Workspace):
    ws.require(ws.evals_dir, "eval")
    paths = sorted(ws.evals_dir.glob("*.json"))
    if not paths:
        raise CliError(f"no eval outputs in {ws.evals_dir}; run `ragslo --config <cfg> eval` first")
    rows = [ReportRow.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths]
    hashes = {r.provenance.get("corpus_hash") for r in rows}
    if len(hashes) > 1:
        raise CliError(f"eval outputs come from different corpora ({', '.join(sorted(map(str, hashes)))})")
    slo_order = list(ws.config.profiles())

    def key(r: ReportRow):
        s = slo_order.index(r.slo) if r.slo in slo_order else len(slo_order)
        m = _METHOD_ORDER.index(r.method) if r.method in _METHOD_ORDER else len(_METHOD_ORDER)
        return (s, r.slo, m, r.method)

    rows.sort(key=key)
    emit_report(rows, ws.report_dir)
    print((ws.report_dir / "metrics.txt").read_text(encoding="utf-8"), end="")
    print(f"report: {len(rows)} rows -> {ws.report_dir}")


def command_desk_corpus(out: str, preset: str, seed: Optional[int]):
    base = COLLAPSE_CONFIG if preset == "collapse" else DeskCorpusConfig()
    if seed is not None:
        base = dataclasses.replace(base, seed=seed)
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(desk_corpus_bytes(base))
    print(f"desk-corpus: wrote {preset} corpus -> {path}")


# --- argument parsing -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ragslo", description="SLO-conditioned routing testbed for retrieval-augmented QA.")
    p.add_argument("--config", help="JSON run config (required for every stage except desk-corpus)")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("index", help="build the BM25 index (skipped when the corpus hash matches)")
    s.add_argument("--force", action="store_true", help="rebuild even on a hash match")

    s = sub.add_parser("sweep", help="run every action on a sample of questions and write the replay log")
    s.add_argument("--backend", choices=("sim", "http"), help="generator backend (default: from config)")
    s.add_argument("--n", type=int, help="number of questions to sample")
    s.add_argument("--seed", type=int, help="sampling seed")

    s = sub.add_parser("train", help="train a router on the train split of the log")
    s.add_argument("--slo", required=True, help="SLO profile name")
    s.add_argument("--objective", choices=("ce", "ce-wt"), default="ce")

    s = sub.add_parser("eval", help="replay-evaluate a policy on the eval split")
    s.add_argument("--slo", required=True, help="SLO profile name")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="path to a trained model file")
    g.add_argument("--fixed", type=int, choices=range(5), metavar="{0..4}", help="constant action")
    g.add_argument("--best-fixed", action="store_true", help="the best constant action on the eval split")

    sub.add_parser("report", help="collate eval outputs into the metrics table and plot data")

    s = sub.add_parser("desk-corpus", help="write a synthetic SQuAD 2.0 format corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--preset", choices=("desk", "collapse"), default="desk")
    s.add_argument("--seed", type=int)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "desk-corpus":
            command_desk_corpus(args.out, args.preset, args.seed)
            return 0
        if not args.config:
            raise CliError(f"{args.command} needs --config <file>")
        ws = Workspace(load_config(args.config))
        if args.command == "index":
            command_index(ws, force=args.force)
        elif args.command == "sweep":
            command_sweep(ws, args.backend, args.n, args.seed)
        elif args.command == "train":
            command_train(ws, args.slo, args.objective)
        elif args.command == "eval":
            command_eval(ws, args.slo, args.model, args.fixed, args.best_fixed)
        elif args.command == "report":
            command_report(ws)
    except (CliError, ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"ragslo {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
