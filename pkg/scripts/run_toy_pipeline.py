#!/usr/bin/env python3
"""Drive the full pipeline on the shipped toy corpus via the CLI.

corpus prep -> typo noise -> OCR noise + label projection -> BM25 index
-> context retrieval -> two-view training -> evaluation -> report.
Everything lands under work/toy/ and the whole run takes a few minutes
on CPU. Rerunning skips stages whose outputs already exist.
"""

import os
import sys

from noisyner.cli import main as cli

DATA = os.path.join(os.path.dirname(__file__), "..", "data", "toy")
WORK = os.path.join(os.path.dirname(__file__), "..", "work", "toy")


def run(*args):
    print("+ noisyner " + " ".join(args))
    rc = cli(list(args))
    if rc != 0:
        sys.exit(rc)


def main():
    os.makedirs(WORK, exist_ok=True)
    train = os.path.join(DATA, "train.conll")
    dev = os.path.join(DATA, "dev.conll")
    test = os.path.join(DATA, "test.conll")

    # typo noise (token counts preserved, labels carry over)
    noisy = {}
    for split, src in (("train", train), ("dev", dev), ("test", test)):
        noisy[split] = os.path.join(WORK, f"{split}_typos.conll")
        run("noise", "--mode", "typos", "--p", "0.2", "--seed", "13",
            "--in", src, "--out", noisy[split], "--report-ter")

    # an OCR-noised variant of the test split, labels projected back on
    ocr_txt = os.path.join(WORK, "test_ocr.txt")
    run("noise", "--mode", "ocr", "--preset", "ocr2", "--seed", "13",
        "--in", test, "--out", ocr_txt)
    run("align", "--gold", test, "--noisy", ocr_txt,
        "--out", os.path.join(WORK, "test_ocr.conll"))

    # sparse retrieval contexts from the toy knowledge corpus
    index = os.path.join(WORK, "index.json")
    run("index", "build", "--units", os.path.join(DATA, "knowledge.jsonl"),
        "--out", index)
    contexts = {}
    for split in ("train", "dev", "test"):
        contexts[split] = os.path.join(WORK, f"ctx_{split}.jsonl")
        run("retrieve", "--backend", "bm25", "--index", index,
            "--in", noisy[split], "--mode", "sent", "--top-m", "5",
            "--out", contexts[split])

    # two-view training with dev selection, then test evaluation
    run_dir = os.path.join(WORK, "run_seed0")
    run("train", "--train", noisy["train"], "--dev", noisy["dev"],
        "--test", noisy["test"], "--contexts", contexts["train"],
        "--dev-contexts", contexts["dev"], "--test-contexts",
        contexts["test"], "--mv-mode", "kl", "--encoder-lr", "5e-4",
        "--crf-lr-ratio", "5", "--epochs", "12", "--batch-size", "8",
        "--budget", "200", "--min-freq", "6", "--seed", "0",
        "--out-dir", run_dir)

    run("eval", "--pred", os.path.join(run_dir, "pred_ov.conll"),
        "--gold", noisy["test"])
    run("report", "--runs", os.path.join(run_dir, "summary.json"),
        "--out", os.path.join(WORK, "report.json"))


if __name__ == "__main__":
    main()
