"""Command-line entry point wiring the pipeline stages.

Every stage reads and writes plain files, never mutates its inputs, and
is deterministic given its seed, so re-running a stage reproduces its
artifacts byte for byte. Existing outputs are kept unless --force is
given. Exit codes: 2 for configuration errors, 3 for data errors, 1 for
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import align as align_mod
from . import dense as dense_mod
from . import noise as noise_mod
from . import selfret as selfret_mod
from . import sparse as sparse_mod
from .corpus import (LabelSet, build_vocab, load_vocab, read_conll_file,
                     save_vocab, write_conll_file)
from .encoder import EncoderConfig, init_params, load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError
from .evaluation import aggregate, entity_f1, format_pm, render_report
from .pipeline import (ContextRecord, batches_from_contexts, read_contexts,
                       stage_should_skip, write_contexts)
from .trainer import TrainConfig, decode_labels, train

log = logging.getLogger("noisyner")


def _skip(path, force: bool) -> bool:
    if stage_should_skip(path, force):
        print(f"output {path} exists, skipping (use --force to redo)")
        return True
    return False


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return fh.read().split("\n")[:-1] if os.path.getsize(path) else []


def _write_lines(lines, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# noise


def cmd_noise(args) -> int:
    if _skip(args.out, args.force):
        return 0
    dataset = read_conll_file(getattr(args, "in"))
    if args.mode == "typos":
        channel = noise_mod.TypoChannel.from_dataset(dataset, p=args.p,
                                                     seed=args.seed)
        noisy = noise_mod.corrupt_dataset_typos(dataset, channel)
        write_conll_file(noisy, args.out)
    else:
        table = (noise_mod.load_confusion_table(args.confusion)
                 if args.confusion else noise_mod.default_confusion_table())
        if args.preset:
            channel = noise_mod.ocr_preset(args.preset, seed=args.seed,
                                           confusion_table=table)
        else:
            channel = noise_mod.OcrChannel(
                confusion_table=table, p_sub=args.p_sub, p_split=args.p_split,
                p_merge=args.p_merge, p_drop=args.p_drop, seed=args.seed)
        noisy_tokens = noise_mod.corrupt_dataset_ocr(dataset, channel)
        _write_lines((" ".join(toks) for toks in noisy_tokens), args.out)
    ter = None
    if args.report_ter:
        gold_texts = [s.text for s in dataset]
        if args.mode == "typos":
            noisy_texts = [s.text for s in noisy]
        else:
            noisy_texts = [" ".join(t) for t in noisy_tokens]
        ter = noise_mod.token_error_rate(noisy_texts, gold_texts)
        print(f"token error rate {ter:.4f}")
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# align


def cmd_align(args) -> int:
    if _skip(args.out, args.force):
        return 0
    gold = read_conll_file(args.gold)
    noisy_texts = _read_lines(args.noisy)
    projected = align_mod.project_dataset(gold, noisy_texts)
    kept = [s for s in projected if s.tokens]
    if len(kept) < len(projected):
        log.warning("dropped %d empty noisy sentences",
                    len(projected) - len(kept))
    write_conll_file(kept, args.out)
    print(f"wrote {args.out} ({len(kept)} sentences)")
    return 0


# ---------------------------------------------------------------------------
# index


def cmd_index(args) -> int:
    if args.action == "build":
        if _skip(args.out, args.force):
            return 0
        units = sparse_mod.read_units_jsonl(args.units)
        index = sparse_mod.build_index(units, k1=args.k1, b=args.b)
        sparse_mod.save_index(index, args.out)
        print(f"indexed {index.N} units into {args.out}")
        return 0
    index = sparse_mod.load_index(args.index)
    hits = sparse_mod.bm25_search(index, args.query, k=args.k)
    for uid, score in hits:
        rendered = sparse_mod.render_hit(index.units[uid], args.mode)
        print(f"{score:.6f}\t{index.units[uid].sent_id}\t{rendered}")
    return 0


# ---------------------------------------------------------------------------
# retrieve


def cmd_retrieve(args) -> int:
    if _skip(args.out, args.force):
        return 0
    dataset = read_conll_file(getattr(args, "in"))
    records = []
    if args.backend == "gold":
        gold = read_conll_file(args.gold)
        gold_by_id = {s.id: s for s in gold}
        for sent in dataset:
            src = gold_by_id.get(sent.id)
            ctxs = (src.text,) if src is not None else ()
            records.append(ContextRecord(sent.id, "gold", "sent", ctxs))
    elif args.backend == "bm25":
        index = sparse_mod.load_index(args.index)
        for sent in dataset:
            hits = sparse_mod.bm25_search(index, sent.text, k=args.top_m)
            ctxs = tuple(sparse_mod.render_hit(index.units[uid], args.mode)
                         for uid, _ in hits)
            records.append(ContextRecord(sent.id, "bm25", args.mode, ctxs))
    elif args.backend == "dense":
        params = load_checkpoint(args.checkpoint)
        vocab = load_vocab(args.vocab)
        units = sparse_mod.read_units_jsonl(args.units)
        store = dense_mod.embed_corpus(
            params, [u.sentence for u in units], [u.sent_id for u in units], vocab)
        by_id = {u.sent_id: u for u in units}
        for sent in dataset:
            q = dense_mod.embed_sentence(params, sent.text, vocab).data
            hits = dense_mod.knn_exact(store, q, k=args.top_m)
            ctxs = tuple(sparse_mod.render_hit(by_id[uid], args.mode)
                         for uid, _ in hits)
            records.append(ContextRecord(sent.id, "dense", args.mode, ctxs))
    else:  # self
        params = load_checkpoint(args.checkpoint)
        vocab = load_vocab(args.vocab)
        train_ds = read_conll_file(args.train)
        store = selfret_mod.build_token_store(
            params, [s.text for s in train_ds], [s.id for s in train_ds], vocab)
        text_by_id = {s.id: s.text for s in train_ds}
        for sent in dataset:
            q = selfret_mod.token_embeddings(params, sent.text, vocab,
                                             sentence_id=sent.id)
            hits = selfret_mod.self_retrieve(q, store, k=args.top_m)
            ctxs = tuple(text_by_id[sid] for sid, _ in hits)
            records.append(ContextRecord(sent.id, "self", "sent", ctxs))
    write_contexts(records, args.out)
    print(f"wrote {args.out} ({len(records)} records)")
    return 0


# ---------------------------------------------------------------------------
# dense subcommands


def _read_pairs(path) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"{path}:{lineno}: expected noisy<TAB>gold")
        pairs.append((cols[0], cols[1]))
    return pairs


def cmd_dense(args) -> int:
    if args.action == "train-encoder":
        if _skip(args.out, args.force):
            return 0
        pairs = _read_pairs(args.pairs)
        dev_pairs = _read_pairs(args.dev_pairs) if args.dev_pairs else None
        vocab = build_vocab([], min_freq=1,
                            extra_texts=[t for pair in pairs for t in pair])
        enc = EncoderConfig(d_model=args.d_model, n_layers=args.n_layers,
                            n_heads=args.n_heads, d_ff=args.d_ff,
                            max_len=args.max_len, vocab_size=vocab.size,
                            seed=args.seed)
        cfg = dense_mod.ContrastiveConfig(
            tau=args.tau, batch_size=args.batch_size, epochs=args.epochs,
            learning_rate=args.lr, seed=args.seed)
        params, history = dense_mod.train_contrastive(pairs, vocab, enc, cfg,
                                                      dev_pairs=dev_pairs)
        save_checkpoint(params, args.out)
        save_vocab(vocab, args.out + ".vocab")
        losses = [h["loss"] for h in history if "loss" in h]
        if losses:
            print(f"steps {len(losses)}, first loss {losses[0]:.4f}, "
                  f"last loss {losses[-1]:.4f}")
        print(f"wrote {args.out}")
        return 0
    if args.action == "embed":
        if _skip(args.out, args.force):
            return 0
        params = load_checkpoint(args.checkpoint)
        vocab = load_vocab(args.vocab)
        sentences = [s for s in _read_lines(getattr(args, "in")) if s]
        ids = [str(i) for i in range(len(sentences))]
        store = dense_mod.embed_corpus(params, sentences, ids, vocab)
        dense_mod.save_store(store, args.out)
        print(f"embedded {store.count} sentences into {args.out}")
        return 0
    if args.action == "pca":
        if _skip(args.out, args.force):
            return 0
        store, _ = dense_mod.load_store(args.store)
        model = dense_mod.pca_fit(store.matrix, args.k)
        reduced = dense_mod.pca_transform_store(model, store)
        dense_mod.save_store(reduced, args.out)
        np.savez(args.out + ".pca.npz", mean=model.mean,
                 components=model.components,
                 explained_variance=model.explained_variance)
        print(f"reduced {store.dim} -> {args.k} dims into {args.out}")
        return 0
    if args.action == "ivf-build":
        if _skip(args.out, args.force):
            return 0
        store, _ = dense_mod.load_store(args.store)
        index = dense_mod.ivf_build(store, c=args.c, seed=args.seed,
                                    nprobe=args.nprobe)
        np.savez(args.out, centroids=index.centroids, nprobe=index.nprobe,
                 **{f"list{j}": lst for j, lst in enumerate(index.lists)})
        print(f"built IVF index with {args.c} lists into {args.out}")
        return 0
    if args.action == "search":
        store, _ = dense_mod.load_store(args.store)
        params = load_checkpoint(args.checkpoint)
        vocab = load_vocab(args.vocab)
        q = dense_mod.embed_sentence(params, args.query, vocab).data
        if args.ivf:
            data = np.load(args.ivf)
            n_lists = sum(1 for k in data.files if k.startswith("list"))
            index = dense_mod.IvfIndex(
                centroids=data["centroids"],
                lists=tuple(data[f"list{j}"] for j in range(n_lists)),
                nprobe=int(data["nprobe"]))
            hits = dense_mod.ivf_search(index, store, q, k=args.k,
                                        nprobe=args.nprobe)
        else:
            hits = dense_mod.knn_exact(store, q, k=args.k)
        for uid, sim in hits:
            print(f"{sim:.6f}\t{uid}")
        return 0
    # recall
    params = load_checkpoint(args.checkpoint)
    vocab = load_vocab(args.vocab)
    pairs = _read_pairs(args.pairs)
    ids = [str(i) for i in range(len(pairs))]
    store = dense_mod.embed_corpus(params, [g for _, g in pairs], ids, vocab)
    retrieved = []
    for noisy, _ in pairs:
        q = dense_mod.embed_sentence(params, noisy, vocab).data
        hits = dense_mod.knn_exact(store, q, k=max(dense_mod.RECALL_AVG_KS))
        retrieved.append([h[0] for h in hits])
    table = dense_mod.recall_at_k(retrieved, ids, dense_mod.RECALL_AVG_KS)
    for k, val in table.items():
        print(f"recall@{k} {val:.4f}")
    print(f"recall_avg {sum(table.values()) / len(table):.4f}")
    return 0


# ---------------------------------------------------------------------------
# self-retrieve


def cmd_self_retrieve(args) -> int:
    if _skip(args.out, args.force):
        return 0
    params = load_checkpoint(args.checkpoint)
    vocab = load_vocab(args.vocab)
    train_ds = read_conll_file(args.train)
    queries = read_conll_file(getattr(args, "in")) if getattr(args, "in") \
        else train_ds
    store = selfret_mod.build_token_store(
        params, [s.text for s in train_ds], [s.id for s in train_ds], vocab)
    text_by_id = {s.id: s.text for s in train_ds}
    records = []
    for sent in queries:
        q = selfret_mod.token_embeddings(params, sent.text, vocab,
                                         sentence_id=sent.id)
        hits = selfret_mod.self_retrieve(q, store, k=args.k)
        records.append(ContextRecord(sent.id, "self", args.split,
                                     tuple(text_by_id[sid] for sid, _ in hits)))
    write_contexts(records, args.out)
    print(f"wrote {args.out} ({len(records)} records)")
    return 0


# ---------------------------------------------------------------------------
# train


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        mv_mode=args.mv_mode, encoder_lr=args.encoder_lr,
        crf_lr_ratio=args.crf_lr_ratio, epochs=args.epochs,
        batch_size=args.batch_size, top_m=args.top_m,
        mv_weight=args.mv_weight, momentum=args.momentum,
    )


def cmd_train(args) -> int:
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    ck_path = os.path.join(out_dir, "params.ck")
    if _skip(ck_path, args.force):
        return 0
    config = _train_config_from_args(args)
    train_ds = read_conll_file(args.train)
    dev_ds = read_conll_file(args.dev)
    ctx_train = read_contexts(args.contexts) if args.contexts else {}
    ctx_dev = read_contexts(args.dev_contexts) if args.dev_contexts else {}
    extra = [c for rec in list(ctx_train.values()) for c in rec.contexts]
    vocab = build_vocab(train_ds, min_freq=args.min_freq, extra_texts=extra)
    label_set = LabelSet.from_dataset(train_ds + dev_ds)
    enc = EncoderConfig(d_model=args.d_model, n_layers=args.n_layers,
                        n_heads=args.n_heads, d_ff=args.d_ff,
                        max_len=args.budget, vocab_size=vocab.size,
                        seed=args.seed)
    train_batches = batches_from_contexts(train_ds, ctx_train, vocab,
                                          args.budget, config.top_m)
    dev_batches = batches_from_contexts(dev_ds, ctx_dev, vocab,
                                        args.budget, config.top_m)
    params = init_params(enc, label_set)
    params, history = train(train_batches, dev_batches, params, config,
                            seed=args.seed)
    save_checkpoint(params, ck_path)
    save_vocab(vocab, os.path.join(out_dir, "vocab.txt"))
    with open(os.path.join(out_dir, "metrics.jsonl"), "w",
              encoding="utf-8", newline="\n") as fh:
        for rec in history:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    summary = {
        "seed": args.seed,
        "mv_mode": config.mv_mode,
        "dev_f1_ov": history[-1]["dev_f1_ov"] if history else 0.0,
        "dev_f1_rv": history[-1]["dev_f1_rv"] if history else 0.0,
    }
    if args.test:
        test_ds = read_conll_file(args.test)
        ctx_test = read_contexts(args.test_contexts) if args.test_contexts else {}
        test_batches = batches_from_contexts(test_ds, ctx_test, vocab,
                                             args.budget, config.top_m)
        for view in ("ov", "rv"):
            if view == "ov" and config.mv_mode == "full":
                continue
            preds = [decode_labels(params, b, view) for b in test_batches]
            f1 = entity_f1(preds, [list(b.labels) for b in test_batches])[2]
            summary[f"test_f1_{view}"] = f1
            pred_ds = [s.__class__(s.tokens, tuple(p), id=s.id)
                       for s, p in zip(test_ds, preds)]
            write_conll_file(pred_ds,
                             os.path.join(out_dir, f"pred_{view}.conll"))
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {ck_path}")
    for key, val in summary.items():
        if key.startswith(("dev_", "test_")):
            print(f"{key} {100 * val:.2f}")
    return 0


# ---------------------------------------------------------------------------
# eval / report


def cmd_eval(args) -> int:
    pred = read_conll_file(args.pred)
    gold = read_conll_file(args.gold)
    p, r, f1 = entity_f1([list(s.labels) for s in pred],
                         [list(s.labels) for s in gold])
    print(f"P {100 * p:.1f}")
    print(f"R {100 * r:.1f}")
    print(f"F1 {100 * f1:.1f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8", newline="\n") as fh:
            json.dump({"precision": p, "recall": r, "f1": f1}, fh,
                      indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_report(args) -> int:
    runs = []
    for path in args.runs:
        with open(path, encoding="utf-8") as fh:
            runs.append(json.load(fh))
    metric_keys = sorted({k for run in runs for k in run
                          if isinstance(run[k], (int, float)) and k != "seed"})
    stats = aggregate([{k: run.get(k, 0.0) for k in metric_keys}
                       for run in runs])
    rows = []
    for base in sorted({k.rsplit("_", 1)[0] for k in metric_keys
                        if k.endswith(("_ov", "_rv"))}):
        row = {"setting": base}
        for view in ("ov", "rv"):
            key = f"{base}_{view}"
            if key in stats:
                mean, std = stats[key]
                row[view] = format_pm(100 * mean, 100 * std)
        rows.append(row)
    table = render_report(rows)
    print(table)
    if args.out:
        payload = {"stats": {k: {"mean": m, "std": s}
                             for k, (m, s) in stats.items()},
                   "rows": rows}
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisyner",
        description="robust NER from noisy text: corruption, alignment, "
                    "retrieval, and two-view CRF training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("noise", help="corrupt a labeled corpus")
    p.add_argument("--mode", choices=("typos", "ocr"), required=True)
    p.add_argument("--p", type=float, default=0.1, help="typo noise level")
    p.add_argument("--preset", default="",
                   help="OCR preset name (ocr1..ocr4)")
    p.add_argument("--p-sub", type=float, default=0.0)
    p.add_argument("--p-split", type=float, default=0.0)
    p.add_argument("--p-merge", type=float, default=0.0)
    p.add_argument("--p-drop", type=float, default=0.0)
    p.add_argument("--confusion", default="", help="confusion table tsv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report-ter", action="store_true")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("align", help="project gold labels onto noisy text")
    p.add_argument("--gold", required=True)
    p.add_argument("--noisy", required=True, help="one sentence per line")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("index", help="build or query the BM25 index")
    idx_sub = p.add_subparsers(dest="action", required=True)
    b = idx_sub.add_parser("build")
    b.add_argument("--units", required=True, help="JSON-lines unit corpus")
    b.add_argument("--k1", type=float, default=1.2)
    b.add_argument("--b", type=float, default=0.75)
    b.add_argument("--out", required=True)
    b.add_argument("--force", action="store_true")
    b.set_defaults(func=cmd_index)
    s = idx_sub.add_parser("search")
    s.add_argument("--index", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--mode", choices=sparse_mod.CONTEXT_MODES, default="sent")
    s.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="write a contexts file")
    p.add_argument("--backend", choices=("gold", "bm25", "dense", "self"),
                   required=True)
    p.add_argument("--in", required=True, help="query corpus (CoNLL)")
    p.add_argument("--gold", default="", help="gold corpus for backend=gold")
    p.add_argument("--index", default="", help="BM25 index JSON")
    p.add_argument("--units", default="", help="unit corpus for backend=dense")
    p.add_argument("--train", default="", help="training corpus for backend=self")
    p.add_argument("--checkpoint", default="")
    p.add_argument("--vocab", default="")
    p.add_argument("--mode", choices=sparse_mod.CONTEXT_MODES, default="sent")
    p.add_argument("--top-m", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("dense", help="dense retrieval toolbox")
    dsub = p.add_subparsers(dest="action", required=True)
    t = dsub.add_parser("train-encoder")
    t.add_argument("--pairs", required=True, help="noisy<TAB>gold lines")
    t.add_argument("--dev-pairs", default="")
    t.add_argument("--tau", type=float, default=0.3)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--epochs", type=int, default=1)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--d-model", type=int, default=32)
    t.add_argument("--n-layers", type=int, default=2)
    t.add_argument("--n-heads", type=int, default=2)
    t.add_argument("--d-ff", type=int, default=64)
    t.add_argument("--max-len", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--force", action="store_true")
    t.set_defaults(func=cmd_dense)
    e = dsub.add_parser("embed")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--vocab", required=True)
    e.add_argument("--in", required=True, help="one sentence per line")
    e.add_argument("--out", required=True)
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_dense)
    c = dsub.add_parser("pca")
    c.add_argument("--store", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--force", action="store_true")
    c.set_defaults(func=cmd_dense)
    v = dsub.add_parser("ivf-build")
    v.add_argument("--store", required=True)
    v.add_argument("--c", type=int, required=True)
    v.add_argument("--nprobe", type=int, default=64)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", required=True)
    v.add_argument("--force", action="store_true")
    v.set_defaults(func=cmd_dense)
    q = dsub.add_parser("search")
    q.add_argument("--store", required=True)
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--vocab", required=True)
    q.add_argument("--query", required=True)
    q.add_argument("--k", type=int, default=10)
    q.add_argument("--ivf", default="")
    q.add_argument("--nprobe", type=int, default=None)
    q.set_defaults(func=cmd_dense)
    r = dsub.add_parser("recall")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--vocab", required=True)
    r.add_argument("--pairs", required=True)
    r.set_defaults(func=cmd_dense)

    p = sub.add_parser("self-retrieve",
                       help="BERTScore retrieval from the training set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--split", choices=("train", "dev", "test"), default="train")
    p.add_argument("--in", default="", help="query corpus; defaults to --train")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_self_retrieve)

    p = sub.add_parser("train", help="train the two-view NER model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", default="")
    p.add_argument("--contexts", default="")
    p.add_argument("--dev-contexts", default="")
    p.add_argument("--test-contexts", default="")
    p.add_argument("--mv-mode", choices=("none", "l2", "kl", "full"),
                   default="kl")
    p.add_argument("--encoder-lr", type=float, default=5e-4)
    p.add_argument("--crf-lr-ratio", type=float, default=5.0)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--top-m", type=int, default=10)
    p.add_argument("--mv-weight", type=float, default=1.0)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--budget", type=int, default=256)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=2)
    p.add_argument("--d-ff", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="entity-level F1 of pred vs gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--json", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate per-seed summaries")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", default="")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - single-line diagnostic contract
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
