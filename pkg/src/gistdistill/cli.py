"""Command-line entry point: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import synthetic
from .autodiff import CheckpointError, NonFiniteError, checkpoint_hash, softmax_t
from .config import ConfigError, RunConfig, load_config
from .distill import TransferSet, build_transfer_set, train_student, vocab_hash
from .gist import GistDetector, gist_batch
from .heatmap import heatmap_emit, html_document
from .integration import MODES, DocClassifier, train_classifier
from .sizes import paper_scale_counts
from .teacher import PointerGenerator, record_attention, train_teacher
from .textio import (CharVocab, Vocabulary, build_vocab, load_embeddings, read_labeled, read_pairs,
                     write_jsonl, _read_jsonl, tokenize)
from .training import DivergenceError

log = logging.getLogger("gistdistill")


class CLIError(Exception):
    pass


def _cfg(args) -> RunConfig:
    cfg = load_config(args.config, args.set or [], args.seed)
    log.info(json.dumps({"event": "config", "command": args.command, "resolved": cfg.to_dict()},
                        sort_keys=True))
    return cfg


def _ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- subcommands

def cmd_gen_synthetic(args) -> None:
    cfg = _cfg(args)
    paths = synthetic.write_corpus(args.out, cfg.seed, args.n_train, args.n_dev, args.n_test,
                                   min_len=args.min_len, max_len=args.max_len, k=args.k)
    for name, p in paths.items():
        print(f"{name}\t{p}")


def cmd_train_teacher(args) -> None:
    cfg = _cfg(args)
    pairs = read_pairs(args.corpus)
    vocab = build_vocab([p.source + p.summary for p in pairs], cfg.paths.vocab_size)
    chars = CharVocab.from_tokens(t for p in pairs for t in p.source + p.summary)
    pretrained = None
    emb_path = args.embeddings or cfg.paths.embeddings
    if emb_path:
        table = load_embeddings(emb_path, cfg.teacher.word_dim, seed=cfg.seed)
        pretrained = table.matrix(vocab)
    if args.vocab_out:
        vocab.dump(_ensure_parent(args.vocab_out))
    k_total = args.ensemble or cfg.distill.ensemble
    out = Path(args.out)
    for k in range(k_total):
        tcfg = replace(cfg.teacher, seed=cfg.teacher.seed + 1000 * k)
        model, curve = train_teacher(pairs, tcfg, vocab, chars, pretrained)
        path = out if k_total == 1 else out.with_name(f"{out.stem}.{k}{out.suffix}")
        digest = model.save(_ensure_parent(path), curve)
        print(f"{path}\t{digest}\tfinal_loss={np.mean(curve[-10:]):.6f}")


def cmd_record_attention(args) -> None:
    _cfg(args)
    model = PointerGenerator.load(args.teacher)
    pairs = read_pairs(args.corpus)
    records = record_attention(model, pairs, args.mode)
    write_jsonl(_ensure_parent(args.out), (r.to_json() for r in records))
    print(f"{args.out}\t{len(records)} records")


def cmd_build_transfer_set(args) -> None:
    cfg = _cfg(args)
    teachers = [PointerGenerator.load(p) for p in args.teacher]
    hashes = [checkpoint_hash(p) for p in args.teacher]
    pairs = read_pairs(args.corpus)
    T = args.T if args.T is not None else cfg.distill.T
    mode = args.mode or cfg.distill.mode
    ts = build_transfer_set(pairs, teachers, T, mode, hashes,
                            geometric=args.geometric or cfg.distill.geometric)
    ts.header["vocab_tokens"] = teachers[0].vocab.itos
    ts.header["chars"] = teachers[0].chars.chars
    ts.write(_ensure_parent(args.out))
    print(f"{args.out}\t{len(ts.records)} records\tT={T}\tK={len(teachers)}")


def cmd_train_student(args) -> None:
    cfg = _cfg(args)
    ts = TransferSet.read(args.transfer)
    if "vocab_tokens" not in ts.header:
        raise CLIError(f"{args.transfer}: header carries no vocabulary")
    vocab = Vocabulary(ts.header["vocab_tokens"])
    if vocab_hash(vocab) != ts.header.get("vocab"):
        raise CLIError(f"{args.transfer}: vocabulary hash mismatch")
    chars = CharVocab(ts.header.get("chars", []))
    scfg = cfg.student
    if args.match_temperature:
        scfg = replace(scfg, train_T=ts.T)
    model, curve = train_student(ts, scfg, vocab, chars)
    digest = model.save(_ensure_parent(args.out), curve,
                        {"transfer": {"T": ts.T, "teachers": ts.header.get("teachers", [])}})
    print(f"{args.out}\t{digest}\tfinal_loss={np.mean(curve[-10:]):.6f}")


def _read_any_corpus(path) -> list[tuple[str, list[str]]]:
    rows = _read_jsonl(path)
    out = []
    for r in rows:
        text = r.get("source", r.get("text"))
        if text is None:
            raise CLIError(f"{path}: rows need a 'source' or 'text' field")
        out.append((str(r["id"]), tokenize(text)))
    return sorted(out)


def cmd_infer_gist(args) -> None:
    cfg = _cfg(args)
    model = GistDetector.load(args.student)
    T = args.T if args.T is not None else cfg.student.infer_T
    results = gist_batch(model, _read_any_corpus(args.corpus), T)
    write_jsonl(_ensure_parent(args.out), (g.to_json() for g in results))
    print(f"{args.out}\t{len(results)} documents\tT={T}")


def _classifier_vocab(docs, cfg: RunConfig) -> Vocabulary:
    return build_vocab([d.tokens for d in docs], cfg.paths.vocab_size)


def cmd_train_classifier(args) -> None:
    cfg = _cfg(args)
    train = read_labeled(args.train)
    dev = read_labeled(args.dev) if args.dev else []
    test = read_labeled(args.test) if args.test else []
    vocab = _classifier_vocab(train, cfg)
    modes = list(MODES) if args.mode == "all" else [args.mode]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
    gist = GistDetector.load(args.gist) if args.gist else None
    if gist is None and any(m != "baseline" for m in modes):
        raise CLIError("modes +GD and +NP need --gist")
    reports = []
    for mode in modes:
        for seed in seeds:
            ccfg = replace(cfg.classifier, mode=mode, seed=seed)
            model, report = train_classifier(train, ccfg, vocab, gist if mode != "baseline" else None,
                                             dev, test)
            reports.append(report)
            if args.out and len(modes) == 1 and len(seeds) == 1:
                model.save(_ensure_parent(args.out), report)
            print(f"{mode}\tseed={seed}\ttest_accuracy={report['test_accuracy']}")
    if len(reports) > 1:
        print(comparison_table(reports))
    if args.report:
        payload = reports[0] if len(reports) == 1 else reports
        _ensure_parent(args.report).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def comparison_table(reports: list[dict]) -> str:
    modes = sorted({r["mode"] for r in reports}, key=lambda m: MODES.index(m))
    seeds = sorted({r["seed"] for r in reports})
    acc = {(r["mode"], r["seed"]): r["test_accuracy"] for r in reports}
    lines = ["mode\t" + "\t".join(f"seed={s}" for s in seeds) + "\tmean"]
    for m in modes:
        vals = [acc.get((m, s)) for s in seeds]
        got = [v for v in vals if v is not None]
        cells = "\t".join("-" if v is None else f"{100 * v:.1f}" for v in vals)
        lines.append(f"{m}\t{cells}\t{100 * np.mean(got):.2f}" if got else f"{m}\t{cells}\t-")
    return "\n".join(lines)


def cmd_evaluate(args) -> None:
    _cfg(args)
    sizes = paper_scale_counts(args.vocab_size)
    report = {"parameters_at_paper_scale": sizes}
    if args.classifier:
        model = DocClassifier.load(args.classifier)
        if not args.corpus:
            raise CLIError("--classifier needs --corpus")
        docs = read_labeled(args.corpus)
        report.update({"mode": model.cfg.mode, "seed": model.cfg.seed,
                       "accuracy": model.accuracy(docs), "n": len(docs)})
    text = json.dumps(report, sort_keys=True, indent=2)
    print(text)
    if args.report:
        _ensure_parent(args.report).write_text(text + "\n")


def cmd_heatmap(args) -> None:
    _cfg(args)
    rows = _read_jsonl(args.weights)
    if args.id:
        rows = [r for r in rows if r["id"] == args.id]
        if not rows:
            raise CLIError(f"no record with id {args.id!r} in {args.weights}")
    rows = rows[: args.limit] if args.limit else rows
    tokens_by_id = {}
    if args.corpus:
        tokens_by_id = dict(_read_any_corpus(args.corpus))
    chunks = []
    for r in rows:
        if "weights" in r:
            tokens, weights = r["tokens"], np.array(r["weights"])
        elif "logits" in r:
            if r["id"] not in tokens_by_id:
                raise CLIError("attention records need --corpus to recover the tokens")
            weights = softmax_t(np.array(r["logits"]), args.T).mean(axis=0)
            tokens = tokens_by_id[r["id"]][: len(weights)]
        else:
            raise CLIError(f"{args.weights}: rows need 'weights' or 'logits'")
        chunks.append(heatmap_emit(tokens, weights, args.format, title=r["id"]))
    if args.format == "html":
        text = html_document("".join(chunks))
    else:
        text = "\n\n".join(f"[{r['id']}]\n{c}" for r, c in zip(rows, chunks)) + "\n"
    if args.out:
        _ensure_parent(args.out).write_text(text, encoding="utf-8")
        print(f"{args.out}\t{len(chunks)} documents")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--seed", type=int, help="global seed (falls back to GD_SEED)")
    common.add_argument("--log-level", default="INFO")

    parser = argparse.ArgumentParser(prog="gistdistill", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", parents=[common], help="write the synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-dev", type=int, default=100)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--min-len", type=int, default=80)
    p.add_argument("--max-len", type=int, default=140)
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train-teacher", parents=[common], help="train pointer-generator teacher(s)")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ensemble", type=int, help="train K teachers differing only by seed")
    p.add_argument("--embeddings", help="GloVe-format text file")
    p.add_argument("--vocab-out")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("record-attention", parents=[common], help="dump raw attention logits")
    p.add_argument("--teacher", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="teacher-forced", choices=["teacher-forced", "greedy"])
    p.set_defaults(func=cmd_record_attention)

    p = sub.add_parser("build-transfer-set", parents=[common], help="soft targets from teacher attention")
    p.add_argument("--teacher", required=True, nargs="+")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=float)
    p.add_argument("--mode", choices=["teacher-forced", "greedy"])
    p.add_argument("--geometric", action="store_true")
    p.set_defaults(func=cmd_build_transfer_set)

    p = sub.add_parser("train-student", parents=[common], help="distil the gist detector")
    p.add_argument("--transfer", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--match-temperature", action="store_true",
                   help="take the training temperature from the transfer set")
    p.set_defaults(func=cmd_train_student)

    p = sub.add_parser("infer-gist", parents=[common], help="per-token importance weights")
    p.add_argument("--student", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=float)
    p.set_defaults(func=cmd_infer_gist)

    p = sub.add_parser("train-classifier", parents=[common], help="BiLSTM classifier, optionally with gist")
    p.add_argument("--train", required=True)
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--mode", default="baseline", choices=list(MODES) + ["all"])
    p.add_argument("--gist", help="student checkpoint for +GD / +NP")
    p.add_argument("--seeds", help="comma-separated seeds for a comparison run")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("evaluate", parents=[common], help="accuracy and model sizes")
    p.add_argument("--classifier")
    p.add_argument("--corpus")
    p.add_argument("--vocab-size", type=int, default=50000)
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", parents=[common], help="render importance weights over tokens")
    p.add_argument("--weights", required=True, help="infer-gist or record-attention JSONL")
    p.add_argument("--corpus", help="corpus for attention records")
    p.add_argument("--format", default="terminal", choices=["terminal", "html"])
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--id")
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 4
    except CheckpointError as exc:
        print(f"error: bad checkpoint: {exc}", file=sys.stderr)
        return 5
    except (DivergenceError, NonFiniteError) as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 6
    except (CLIError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
