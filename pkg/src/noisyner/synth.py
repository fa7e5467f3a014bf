"""Deterministic synthetic data: labeled toy corpora, social-media-like
text for channel calibration, contrastive pairs, and clustered vectors."""

from __future__ import annotations

import random

import numpy as np

from .corpus import Dataset, LabeledSentence
from .noise import TypoChannel, induce_typos

_CONSONANTS = "bcdfghklmnprstvz"
_VOWELS = "aeiou"

_FILLER = (
    "the a an old new young local famous visited met saw left joined near in at "
    "on from with said told asked went came spoke wrote report statement office "
    "city town river market festival morning evening again yesterday today"
).split()


def _pseudo_word(rng: np.random.Generator, n_chars: int, capital: bool = False) -> str:
    chars = []
    for i in range(n_chars):
        pool = _CONSONANTS if i % 2 == 0 else _VOWELS
        chars.append(pool[rng.integers(len(pool))])
    word = "".join(chars)
    return word.capitalize() if capital else word


def make_entity_surfaces(n_surfaces: int, seed: int = 0,
                         tags=("PER", "LOC", "ORG"), min_len: int = 4,
                         max_len: int = 8,
                         two_token_frac: float = 0.3) -> list[tuple[tuple[str, ...], str]]:
    """Surface forms (1 or 2 tokens) with a fixed tag each."""
    rng = np.random.default_rng(seed)
    out = []
    seen = set()
    while len(out) < n_surfaces:
        n_tokens = 2 if rng.random() < two_token_frac else 1
        toks = tuple(
            _pseudo_word(rng, int(rng.integers(min_len, max_len + 1)), capital=True)
            for _ in range(n_tokens)
        )
        if toks in seen:
            continue
        seen.add(toks)
        out.append((toks, tags[len(out) % len(tags)]))
    return out


def make_entity_corpus(n_sentences: int, n_surfaces: int = 50,
                       seed: int = 0, tags=("PER", "LOC", "ORG"),
                       min_len: int = 4, max_len: int = 8) -> Dataset:
    """Template sentences with 1-2 entity mentions from a closed surface
    inventory; every surface keeps one tag throughout."""
    rng = np.random.default_rng(seed)
    surfaces = make_entity_surfaces(n_surfaces, seed=seed + 1, tags=tags,
                                    min_len=min_len, max_len=max_len)
    sentences = []
    for i in range(n_sentences):
        n_entities = 2 if rng.random() < 0.35 else 1
        n_filler = int(rng.integers(5, 9))
        tokens = [_FILLER[rng.integers(len(_FILLER))] for _ in range(n_filler)]
        labels = ["O"] * n_filler
        slots = sorted(rng.choice(n_filler + 1, size=n_entities, replace=False),
                       reverse=True)
        for slot in slots:
            toks, tag = surfaces[rng.integers(len(surfaces))]
            ent_labels = [f"B-{tag}"] + [f"I-{tag}"] * (len(toks) - 1)
            tokens[slot:slot] = list(toks)
            labels[slot:slot] = ent_labels
        sentences.append(LabeledSentence(tuple(tokens), tuple(labels), id=f"s{i}"))
    return sentences


def split_dataset(dataset: Dataset, dev_frac: float = 0.1,
                  test_frac: float = 0.1) -> tuple[Dataset, Dataset, Dataset]:
    n = len(dataset)
    n_dev = max(1, int(n * dev_frac))
    n_test = max(1, int(n * test_frac))
    train = dataset[: n - n_dev - n_test]
    dev = dataset[n - n_dev - n_test: n - n_test]
    test = dataset[n - n_test:]
    return train, dev, test


def make_social_text(n_sentences: int, seed: int = 0) -> list[str]:
    """Short noisy-web-style sentences: mixed case, digits, handles,
    hashtags. Used to calibrate the OCR presets."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_sentences):
        n_tokens = int(rng.integers(6, 14))
        toks = []
        for _ in range(n_tokens):
            roll = rng.random()
            if roll < 0.06:
                toks.append("@" + _pseudo_word(rng, int(rng.integers(4, 8))))
            elif roll < 0.12:
                toks.append("#" + _pseudo_word(rng, int(rng.integers(4, 9))))
            elif roll < 0.18:
                toks.append(str(rng.integers(0, 2030)))
            elif roll < 0.30:
                toks.append(_pseudo_word(rng, int(rng.integers(3, 9)), capital=True))
            else:
                toks.append(_pseudo_word(rng, int(rng.integers(2, 10))))
        out.append(" ".join(toks))
    return out


_WIDE_CHARS = ("abcdefghijklmnopqrstuvwxyz"
               "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789")


def make_contrastive_pairs(n_pairs: int, seed: int = 0, noise_p: float = 0.2,
                           vocab_size: int = 400) -> list[tuple[str, str]]:
    """(noisy, gold) sentence pairs built for separability.

    Sentences stay short relative to the 62-symbol pool, so character
    signatures are sparse and barely overlap across pairs, while the
    typo channel only perturbs a few positions of each gold sentence.
    """
    rng = np.random.default_rng(seed)
    words = []
    seen = set()
    while len(words) < vocab_size:
        n = int(rng.integers(4, 8))
        w = "".join(_WIDE_CHARS[rng.integers(len(_WIDE_CHARS))] for _ in range(n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    alphabet = tuple(sorted({ch for w in words for ch in w}))
    channel = TypoChannel(p=noise_p, alphabet=alphabet, seed=seed)
    pairs = []
    for i in range(n_pairs):
        k = int(rng.integers(3, 5))
        gold = " ".join(words[j] for j in rng.choice(vocab_size, size=k, replace=False))
        noisy = induce_typos(gold, channel, rng=random.Random(channel.seed ^ i))
        pairs.append((noisy, gold))
    return pairs


def make_knowledge_units(surfaces, seed: int = 0, per_surface: int = 3):
    """Wiki-like sentence units mentioning the given entity surfaces.

    Each unit carries a title (the surface), an anchor span over the
    mention, and a two-sentence paragraph; suitable for the BM25 and
    dense retrieval backends. `surfaces` are (tokens, tag) pairs as
    produced by make_entity_surfaces.
    """
    from .sparse import Anchor, IndexedUnit

    rng = np.random.default_rng(seed)
    lead_in = ("history of", "notes on", "records about", "story of")
    units = []
    for (toks, tag) in surfaces:
        mention = " ".join(toks)
        title = mention
        for j in range(per_surface):
            left = " ".join(_FILLER[rng.integers(len(_FILLER))]
                            for _ in range(int(rng.integers(2, 5))))
            right = " ".join(_FILLER[rng.integers(len(_FILLER))]
                             for _ in range(int(rng.integers(2, 5))))
            sentence = f"{left} {mention} {right}"
            start = len(left) + 1
            anchor = Anchor(mention, f"{tag}:{mention.replace(' ', '_')}",
                            start, start + len(mention))
            prefix = lead_in[int(rng.integers(len(lead_in)))]
            paragraph = f"{prefix} {title} . {sentence}"
            units.append(IndexedUnit(
                sent_id=f"k{len(units)}", sentence=sentence,
                paragraph=paragraph, title=title, anchors=(anchor,)))
    return units


def make_clustered_vectors(n: int, dim: int, n_clusters: int,
                           seed: int = 0, spread: float = 0.25) -> np.ndarray:
    """Unit-norm rows drawn around random cluster centers."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_clusters, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    assign = rng.integers(n_clusters, size=n)
    rows = centers[assign] + spread * rng.normal(size=(n, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows
