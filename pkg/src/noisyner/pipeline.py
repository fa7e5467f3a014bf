"""Pipeline plumbing: the contexts file, the key=value config, and
stage-output bookkeeping shared by the CLI subcommands."""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field

from .corpus import SEP_TOKEN, Dataset, Vocabulary
from .encoder import ViewBatch, concat_views
from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ContextRecord:
    sentence_id: str
    backend: str
    mode: str
    contexts: tuple[str, ...]


def write_contexts(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps({
                "sentence_id": rec.sentence_id,
                "backend": rec.backend,
                "mode": rec.mode,
                "contexts": list(rec.contexts),
            }, ensure_ascii=False) + "\n")


def read_contexts(path) -> dict[str, ContextRecord]:
    out: dict[str, ContextRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = ContextRecord(
                    sentence_id=str(obj["sentence_id"]),
                    backend=obj.get("backend", ""),
                    mode=obj.get("mode", ""),
                    contexts=tuple(obj.get("contexts", ())),
                )
            except (KeyError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad context record ({exc})") from exc
            out[rec.sentence_id] = rec
    return out


def batches_from_contexts(dataset: Dataset, contexts: dict[str, ContextRecord],
                          vocab: Vocabulary, budget: int,
                          top_m: int = 10) -> list[ViewBatch]:
    """Join each sentence's top contexts with the separator token."""
    batches = []
    for sent in dataset:
        rec = contexts.get(sent.id)
        joined = ""
        if rec is not None and rec.contexts:
            joined = f" {SEP_TOKEN} ".join(rec.contexts[:top_m])
        batches.append(concat_views(list(sent.tokens), list(sent.labels),
                                    joined, vocab, budget, sentence_id=sent.id))
    return batches


@dataclass(frozen=True)
class PipelineConfig:
    """Paths plus per-stage settings, parsed from an ini-style file."""

    corpus: str = ""
    knowledge: str = ""
    work_dir: str = "work"
    noise_mode: str = "typos"
    noise_p: float = 0.2
    noise_preset: str = ""
    noise_seed: int = 13
    backend: str = "bm25"
    context_mode: str = "sent"
    top_m: int = 10
    encoder: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if self.top_m < 1:
            raise ConfigError("top_m must be >= 1")


def load_pipeline_config(path) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")

    def sec(name):
        return parser[name] if parser.has_section(name) else {}

    paths, noise, retrieval = sec("paths"), sec("noise"), sec("retrieval")
    train = dict(sec("train"))
    seeds = tuple(int(s) for s in train.pop("seeds", "0,1,2,3").split(","))
    cfg = PipelineConfig(
        corpus=paths.get("corpus", ""),
        knowledge=paths.get("knowledge", ""),
        work_dir=paths.get("work_dir", "work"),
        noise_mode=noise.get("mode", "typos"),
        noise_p=float(noise.get("p", 0.2)),
        noise_preset=noise.get("preset", ""),
        noise_seed=int(noise.get("seed", 13)),
        backend=retrieval.get("backend", "bm25"),
        context_mode=retrieval.get("mode", "sent"),
        top_m=int(retrieval.get("top_m", 10)),
        encoder=dict(sec("encoder")),
        train=train,
        seeds=seeds,
    )
    for key in ("corpus", "knowledge"):
        val = getattr(cfg, key)
        if val and not os.path.exists(val):
            raise ConfigError(f"{key} path {val!r} does not exist")
    return cfg


def stage_should_skip(out_path, force: bool) -> bool:
    """Stages are resumable: existing outputs are kept unless forced."""
    return (not force) and os.path.exists(str(out_path))
