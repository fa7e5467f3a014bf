"""BERTScore-style greedy matching for retrieval from the training set.

Each sentence is represented by the unit-normalized contextual
embeddings of all its subtoken positions. Precision averages, over the
candidate's tokens, the best cosine match into the reference, recall
does the reverse, and candidates are ranked by F1. Negative cosines are
clipped at zero so scores stay in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary, tokenize_sentence
from .dense import EmbeddingStore, load_store, save_store
from .encoder import ModelParams, encode_layers
from .errors import DataError


@dataclass(frozen=True)
class TokenEmbeddingSet:
    sentence_id: str
    matrix: np.ndarray  # n_tokens x d, unit-norm rows

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1:
            raise DataError(f"{self.sentence_id!r}: need at least one token row")
        object.__setattr__(self, "matrix", m)


def token_embeddings(params: ModelParams, sentence: str, vocab: Vocabulary,
                     sentence_id: str = "") -> TokenEmbeddingSet:
    """Final-layer representation at every subtoken position, unit-norm."""
    words = sentence.split()
    if not words:
        raise DataError("cannot embed an empty sentence")
    ids: list[int] = []
    for span in tokenize_sentence(words, vocab):
        ids.extend(span.subtoken_ids)
    ids = ids[: params.config.max_len]
    reps = encode_layers(params, ids)[-1].data
    norms = np.linalg.norm(reps, axis=1, keepdims=True)
    return TokenEmbeddingSet(sentence_id, reps / np.where(norms > 0, norms, 1.0))


def bertscore(cand: TokenEmbeddingSet, ref: TokenEmbeddingSet):
    """(P, R, F1) under greedy max-cosine matching, similarities clipped
    at zero; F1 is 0 when P + R is 0."""
    sims = np.clip(cand.matrix @ ref.matrix.T, 0.0, None)
    p = float(sims.max(axis=1).mean())
    r = float(sims.max(axis=0).mean())
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def self_retrieve(query: TokenEmbeddingSet, training_embeddings, k: int):
    """Top-k (sentence_id, F1) over the precomputed training store.

    The query's own training entry (same sentence id) is excluded; ties
    break by id ascending.
    """
    training_embeddings = list(training_embeddings)
    if not training_embeddings:
        raise DataError("empty training embedding store")
    if k <= 0:
        return []
    scored = []
    for cand in training_embeddings:
        if cand.sentence_id == query.sentence_id:
            continue
        _, _, f1 = bertscore(cand, query)
        scored.append((cand.sentence_id, f1))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


def build_token_store(params: ModelParams, sentences, ids,
                      vocab: Vocabulary) -> list[TokenEmbeddingSet]:
    return [token_embeddings(params, s, vocab, sentence_id=i)
            for s, i in zip(sentences, ids)]


# ---------------------------------------------------------------------------
# Persistence: the embedding-store format with a sentence index section


def save_token_store(sets, path) -> None:
    sets = list(sets)
    rows = np.concatenate([s.matrix for s in sets], axis=0) if sets else np.zeros((0, 0))
    row_ids = tuple(f"r{i}" for i in range(rows.shape[0]))
    index = []
    start = 0
    for s in sets:
        index.append((s.sentence_id, start, s.matrix.shape[0]))
        start += s.matrix.shape[0]
    save_store(EmbeddingStore(row_ids, rows), path, sentence_index=index)


def load_token_store(path) -> list[TokenEmbeddingSet]:
    store, index = load_store(path)
    if index is None:
        raise DataError(f"{path}: missing per-sentence index section")
    return [TokenEmbeddingSet(sid, store.matrix[start:start + cnt])
            for sid, start, cnt in index]
