"""End-to-end experiment drivers over synthetic corpora.

The trend experiment mirrors the headline comparison at desk scale:
corrupt a closed-inventory corpus with typos, hand each sentence its own
gold text as retrieved context, train the two-view model next to a
no-context baseline across several seeds, and compare test F1 of the
retrieval view, the original view, and the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus import Dataset, LabelSet, Vocabulary, build_vocab
from .encoder import EncoderConfig, ViewBatch, concat_views, init_params
from .noise import TypoChannel, corrupt_dataset_typos
from .synth import make_entity_corpus, split_dataset
from .trainer import TrainConfig, evaluate_view, train


def build_batches(dataset: Dataset, contexts: dict[str, str],
                  vocab: Vocabulary, budget: int) -> list[ViewBatch]:
    """Pair every sentence with its precomputed context string."""
    return [
        concat_views(list(s.tokens), list(s.labels), contexts.get(s.id, ""),
                     vocab, budget, sentence_id=s.id)
        for s in dataset
    ]


@dataclass(frozen=True)
class TrendSetup:
    n_sentences: int = 500
    n_surfaces: int = 50
    surface_min_len: int = 6
    surface_max_len: int = 10
    typo_p: float = 0.2
    corpus_seed: int = 17
    noise_seed: int = 23
    dev_frac: float = 0.12
    test_frac: float = 0.16
    budget: int = 160
    min_freq: int = 8
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64


def prepare_trend_data(setup: TrendSetup):
    """Synthesize, corrupt, and batch the three splits.

    Returns (vocab, label_set, splits) where splits maps name to a pair
    (multi-view batches with gold context, baseline batches without).
    """
    gold = make_entity_corpus(setup.n_sentences, setup.n_surfaces,
                              seed=setup.corpus_seed,
                              min_len=setup.surface_min_len,
                              max_len=setup.surface_max_len)
    channel = TypoChannel.from_dataset(gold, p=setup.typo_p, seed=setup.noise_seed)
    gold_splits = dict(zip(("train", "dev", "test"),
                           split_dataset(gold, setup.dev_frac, setup.test_frac)))
    noisy_splits = {k: corrupt_dataset_typos(v, channel)
                    for k, v in gold_splits.items()}
    # the vocabulary threshold sits above the per-surface intact-mention
    # count, so entity forms shatter into characters on the noisy side
    # and in the retrieved context alike; shared character embeddings are
    # what lets attention match a corrupted span to its clean copy
    label_set = LabelSet.from_dataset(gold)
    vocab = build_vocab(noisy_splits["train"], min_freq=setup.min_freq)
    splits = {}
    for name in ("train", "dev", "test"):
        contexts = {s.id: s.text for s in gold_splits[name]}
        with_ctx = build_batches(noisy_splits[name], contexts, vocab, setup.budget)
        without = build_batches(noisy_splits[name], {}, vocab, setup.budget)
        splits[name] = (with_ctx, without)
    return vocab, label_set, splits


def run_trend_seed(seed: int, vocab: Vocabulary, label_set: LabelSet,
                   splits, setup: TrendSetup, config: TrainConfig) -> dict:
    """One multi-view run and one no-context baseline run on `seed`."""
    enc = EncoderConfig(d_model=setup.d_model, n_layers=setup.n_layers,
                        n_heads=setup.n_heads, d_ff=setup.d_ff,
                        max_len=setup.budget, vocab_size=vocab.size, seed=seed)
    train_ctx, train_plain = splits["train"]
    dev_ctx, dev_plain = splits["dev"]
    test_ctx, test_plain = splits["test"]

    mv_params = init_params(enc, label_set)
    mv_params, mv_history = train(train_ctx, dev_ctx, mv_params, config, seed=seed)
    ov_f1 = evaluate_view(mv_params, test_ctx, "ov")
    rv_f1 = evaluate_view(mv_params, test_ctx, "rv")

    base_cfg = replace(config, mv_mode="none")
    base_params = init_params(enc, label_set)
    base_params, base_history = train(train_plain, dev_plain, base_params,
                                      base_cfg, seed=seed)
    base_f1 = evaluate_view(base_params, test_plain, "ov")
    return {
        "seed": seed,
        "ov_f1": ov_f1,
        "rv_f1": rv_f1,
        "baseline_f1": base_f1,
        "mv_history": mv_history,
        "baseline_history": base_history,
    }


def default_trend_config() -> TrainConfig:
    """Settings used for the shipped end-to-end trend run."""
    return TrainConfig(mv_mode="kl", encoder_lr=5e-4, crf_lr_ratio=5.0,
                       epochs=26, batch_size=8)


def run_trend_experiment(config: TrainConfig | None = None,
                         setup: TrendSetup | None = None,
                         seeds=None) -> dict:
    config = config or default_trend_config()
    setup = setup or TrendSetup()
    seeds = tuple(seeds if seeds is not None else config.seeds)
    vocab, label_set, splits = prepare_trend_data(setup)
    runs = [run_trend_seed(s, vocab, label_set, splits, setup, config)
            for s in seeds]
    n_rv_wins = sum(1 for r in runs if r["rv_f1"] >= r["ov_f1"])
    mean_ov = sum(r["ov_f1"] for r in runs) / len(runs)
    mean_rv = sum(r["rv_f1"] for r in runs) / len(runs)
    mean_base = sum(r["baseline_f1"] for r in runs) / len(runs)
    return {
        "runs": runs,
        "rv_ge_ov_seats": n_rv_wins,
        "mean_ov_f1": mean_ov,
        "mean_rv_f1": mean_rv,
        "mean_baseline_f1": mean_base,
    }
