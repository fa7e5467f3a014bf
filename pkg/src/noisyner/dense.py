"""Dense retrieval: sentence embeddings, InfoNCE contrastive training,
PCA reduction, exact and IVF-accelerated cosine search, and recall@k.

Sentence embeddings average the encoder's first and last layer outputs
over all positions and are unit-normalized, so inner product equals
cosine similarity everywhere below.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, stack_rows
from .corpus import Vocabulary, tokenize_sentence
from .encoder import EncoderConfig, ModelParams, encode_layers, init_params
from .errors import ConfigError, DataError
from .optim import MomentumSgd

STORE_MAGIC = b"EMBS"
STORE_VERSION = 1
SENT_INDEX_MAGIC = b"SIDX"
RECALL_AVG_KS = (1, 4, 16, 64)


@dataclass
class EmbeddingStore:
    """Unit-norm row vectors with parallel string ids."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise DataError("id list and matrix row count disagree")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in embedding store")
        if self.matrix.size:
            norms = np.linalg.norm(self.matrix, axis=1)
            if np.abs(norms - 1.0).max() > 1e-6:
                raise DataError("embedding rows must be unit-norm")

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def save_store(store: EmbeddingStore, path,
               sentence_index: list[tuple[str, int, int]] | None = None) -> None:
    """Binary layout: magic, version u32, count u64, dim u32, row-major
    float32 LE data, then length-prefixed utf-8 ids. An optional SIDX
    section maps sentence ids to (start, count) row ranges."""
    with open(str(path), "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<IQI", STORE_VERSION, store.count, store.dim))
        fh.write(np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())
        for sid in store.ids:
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        if sentence_index is not None:
            fh.write(SENT_INDEX_MAGIC)
            fh.write(struct.pack("<Q", len(sentence_index)))
            for sid, start, count in sentence_index:
                raw = sid.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<QQ", start, count))


def load_store(path, renormalize: bool = True):
    """Returns (store, sentence_index or None). Rows are renormalized by
    default to undo float32 rounding."""
    with open(str(path), "rb") as fh:
        if fh.read(4) != STORE_MAGIC:
            raise DataError(f"{path}: not an embedding store")
        version, count, dim = struct.unpack("<IQI", fh.read(16))
        if version != STORE_VERSION:
            raise DataError(f"{path}: unsupported store version {version}")
        matrix = np.frombuffer(fh.read(4 * count * dim), dtype="<f4")
        matrix = matrix.astype(np.float64).reshape(count, dim)
        ids = []
        for _ in range(count):
            (n,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(n).decode("utf-8"))
        sentence_index = None
        tag = fh.read(4)
        if tag == SENT_INDEX_MAGIC:
            (n_sent,) = struct.unpack("<Q", fh.read(8))
            sentence_index = []
            for _ in range(n_sent):
                (n,) = struct.unpack("<H", fh.read(2))
                sid = fh.read(n).decode("utf-8")
                start, cnt = struct.unpack("<QQ", fh.read(16))
                sentence_index.append((sid, start, cnt))
    if renormalize and count:
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        matrix = matrix / np.where(norms > 0, norms, 1.0)
    return EmbeddingStore(tuple(ids), matrix), sentence_index


# ---------------------------------------------------------------------------
# Sentence embedding


def _normalize_rows(t: Tensor) -> Tensor:
    sq = (t * t).sum(axis=-1, keepdims=True)
    return t * sq.pow(-0.5)


def embed_sentence(params: ModelParams, sentence: str,
                   vocab: Vocabulary) -> Tensor:
    """Mean over positions of (first layer + last layer)/2, unit-norm."""
    words = sentence.split()
    if not words:
        raise DataError("cannot embed an empty sentence")
    ids: list[int] = []
    for span in tokenize_sentence(words, vocab):
        ids.extend(span.subtoken_ids)
    ids = ids[: params.config.max_len]
    layers = encode_layers(params, ids)
    avg = (layers[0] + layers[-1]) * 0.5
    sent = avg.mean(axis=0)
    sq = (sent * sent).sum()
    return sent * sq.pow(-0.5)


def embed_corpus(params: ModelParams, sentences, ids, vocab: Vocabulary) -> EmbeddingStore:
    rows = [embed_sentence(params, s, vocab).data for s in sentences]
    return EmbeddingStore(tuple(ids), np.stack(rows))


# ---------------------------------------------------------------------------
# InfoNCE


def infonce_loss(noisy_embs, gold_embs, tau: float) -> Tensor:
    """Batch-mean contrastive loss with in-batch negatives.

    Row i of `noisy_embs` is the anchor whose positive is row i of
    `gold_embs`; similarity is cosine (rows are normalized internally).
    """
    if tau <= 0:
        raise ConfigError(f"temperature tau={tau} must be positive")
    noisy = _normalize_rows(as_tensor(noisy_embs))
    gold = _normalize_rows(as_tensor(gold_embs))
    n = noisy.data.shape[0]
    if gold.data.shape[0] != n:
        raise DataError("noisy and gold batches differ in size")
    sims = (noisy @ gold.swapaxes(0, 1)) * (1.0 / tau)
    pos = sims[np.arange(n), np.arange(n)]
    return (sims.logsumexp(axis=1) - pos).mean()


@dataclass(frozen=True)
class ContrastiveConfig:
    tau: float = 0.3
    batch_size: int = 16
    epochs: int = 1
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")


def train_contrastive(pairs, vocab: Vocabulary, enc_config: EncoderConfig,
                      config: ContrastiveConfig, dev_pairs=None):
    """SGD on the batch-mean InfoNCE loss over (noisy, gold) pairs.

    Model selection is by recall_avg on `dev_pairs` (gold sentences as
    the search corpus, noisy ones as queries); without a dev split the
    final parameters are returned. Returns (params, history).
    """
    pairs = list(pairs)
    if not pairs:
        raise DataError("no training pairs")
    params = init_params(enc_config)
    opt = MomentumSgd(params, encoder_lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    best = (-1.0, params.copy_values())
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        for lo in range(0, len(pairs), config.batch_size):
            batch = [pairs[i] for i in order[lo: lo + config.batch_size]]
            if len(batch) < 2:
                continue
            noisy = stack_rows([embed_sentence(params, n, vocab) for n, _ in batch])
            gold = stack_rows([embed_sentence(params, g, vocab) for _, g in batch])
            loss = infonce_loss(noisy, gold, config.tau)
            if not np.isfinite(loss.data):
                raise RuntimeError(f"contrastive loss diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            history.append({"step": step, "epoch": epoch, "loss": float(loss.data)})
            step += 1
        if dev_pairs:
            r_avg = _dev_recall_avg(params, dev_pairs, vocab)
            history.append({"step": step, "epoch": epoch, "recall_avg": r_avg})
            if r_avg > best[0]:
                best = (r_avg, params.copy_values())
    if dev_pairs and best[0] >= 0:
        params.load_values(best[1])
    opt.zero_grad()
    return params, history


def _dev_recall_avg(params: ModelParams, dev_pairs, vocab: Vocabulary) -> float:
    ids = [str(i) for i in range(len(dev_pairs))]
    store = embed_corpus(params, [g for _, g in dev_pairs], ids, vocab)
    retrieved = []
    for noisy, _ in dev_pairs:
        q = embed_sentence(params, noisy, vocab).data
        hits = knn_exact(store, q, max(RECALL_AVG_KS))
        retrieved.append([h[0] for h in hits])
    return recall_avg(retrieved, ids)


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray        # k x dim, orthonormal rows
    explained_variance: np.ndarray


def pca_fit(vectors: np.ndarray, k: int) -> PcaModel:
    """Top-k principal axes of the covariance, via SVD of centered data.

    Component signs are fixed (largest-magnitude coordinate positive) so
    repeated fits agree exactly.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    count, dim = vectors.shape
    if count <= k:
        raise DataError(f"need more than k={k} vectors, got {count}")
    mean = vectors.mean(axis=0)
    centered = vectors - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((s > s[0] * max(count, dim) * np.finfo(np.float64).eps).sum())
    if k > rank:
        raise DataError(f"k={k} exceeds data rank {rank}")
    components = vt[:k].copy()
    for row in components:
        pivot = np.argmax(np.abs(row))
        if row[pivot] < 0:
            row *= -1.0
    explained = (s[:k] ** 2) / (count - 1)
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def pca_transform(model: PcaModel, v: np.ndarray, renormalize: bool = False) -> np.ndarray:
    """Project onto the retained axes; renormalize before indexing so
    L2 search stays equivalent to cosine."""
    v = np.asarray(v, dtype=np.float64)
    out = (v - model.mean) @ model.components.T
    if renormalize:
        norm = np.linalg.norm(out, axis=-1, keepdims=v.ndim > 1)
        out = out / np.where(norm > 0, norm, 1.0)
    return out


def pca_reconstruct(model: PcaModel, y: np.ndarray) -> np.ndarray:
    return np.asarray(y) @ model.components + model.mean


def pca_transform_store(model: PcaModel, store: EmbeddingStore) -> EmbeddingStore:
    return EmbeddingStore(store.ids, pca_transform(model, store.matrix, renormalize=True))


# ---------------------------------------------------------------------------
# Nearest-neighbor search


def _rank(ids: np.ndarray, sims: np.ndarray, k: int):
    order = np.lexsort((ids, -sims))[:k]
    return [(str(ids[i]), float(sims[i])) for i in order]


def knn_exact(store: EmbeddingStore, query: np.ndarray, k: int):
    """Exhaustive cosine scan; ties broken by id ascending; k clamps."""
    if store.count == 0:
        return []
    sims = store.matrix @ np.asarray(query, dtype=np.float64)
    return _rank(np.asarray(store.ids), sims, min(k, store.count))


@dataclass
class IvfIndex:
    centroids: np.ndarray
    lists: tuple[np.ndarray, ...]   # row indices into the source store
    nprobe: int = 64


def _kmeans_pp_init(mat: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = mat.shape[0]
    centroids = np.empty((c, mat.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = mat[first]
    d2 = ((mat - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, c):
        total = d2.sum()
        if total <= 0:
            centroids[i] = mat[int(rng.integers(n))]
            continue
        probs = d2 / total
        pick = int(rng.choice(n, p=probs))
        centroids[i] = mat[pick]
        d2 = np.minimum(d2, ((mat - centroids[i]) ** 2).sum(axis=1))
    return centroids


def ivf_build(store: EmbeddingStore, c: int, seed: int = 0,
              nprobe: int = 64, iterations: int = 25) -> IvfIndex:
    """k-means coarse quantizer: k-means++ init, fixed Lloyd iterations."""
    if c > store.count:
        raise DataError(f"c={c} centroids exceed {store.count} vectors")
    rng = np.random.default_rng(seed)
    mat = store.matrix
    centroids = _kmeans_pp_init(mat, c, rng)
    sq_rows = (mat**2).sum(axis=1)[:, None]

    def assignments():
        d2 = sq_rows - 2.0 * (mat @ centroids.T) + (centroids**2).sum(axis=1)[None, :]
        return d2.argmin(axis=1)

    for _ in range(iterations):
        assign = assignments()
        for j in range(c):
            members = mat[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    # final assignment against the updated centroids keeps the nearest-
    # centroid invariant that search relies on
    assign = assignments()
    lists = tuple(np.flatnonzero(assign == j) for j in range(c))
    return IvfIndex(centroids=centroids, lists=lists, nprobe=nprobe)


def ivf_search(index: IvfIndex, store: EmbeddingStore, query: np.ndarray,
               k: int, nprobe: int | None = None):
    """Scan only the nprobe nearest centroids' lists, then rank by cosine."""
    if nprobe is None:
        nprobe = index.nprobe
    query = np.asarray(query, dtype=np.float64)
    d2 = ((index.centroids - query) ** 2).sum(axis=1)
    probe = np.argsort(d2, kind="stable")[:nprobe]
    rows = np.concatenate([index.lists[j] for j in probe]) if len(probe) else np.array([], dtype=int)
    if rows.size == 0:
        return []
    sims = store.matrix[rows] @ query
    ids = np.asarray(store.ids)[rows]
    return _rank(ids, sims, min(k, rows.size))


# ---------------------------------------------------------------------------
# Recall


def recall_at_k(retrieved_ids_per_query, gold_id_per_query, ks) -> dict[int, float]:
    """Fraction of queries whose gold id appears in the top k."""
    retrieved = list(retrieved_ids_per_query)
    gold = list(gold_id_per_query)
    if len(retrieved) != len(gold):
        raise DataError("query and gold counts differ")
    if not retrieved:
        return {k: 0.0 for k in ks}
    out = {}
    for k in ks:
        hits = sum(1 for r, g in zip(retrieved, gold) if g in r[:k])
        out[k] = hits / len(retrieved)
    return out


def recall_avg(retrieved_ids_per_query, gold_id_per_query,
               ks=RECALL_AVG_KS) -> float:
    table = recall_at_k(retrieved_ids_per_query, gold_id_per_query, ks)
    return sum(table.values()) / len(ks)
