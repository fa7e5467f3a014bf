"""Trainable contextual encoder and the two-view input plumbing.

A small pre-norm transformer (learned absolute positions, GELU feed
forward) stands in for the large pretrained encoders this pipeline is
normally run with. The retrieval-based view concatenates the noisy
subtokens, a reserved separator id, and the retrieved-context subtokens;
full bidirectional attention then lets noisy positions read the context.
Only first-subtoken positions of noisy words feed the CRF.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, layer_norm, linear
from .corpus import LabelSet, SubtokenSpan, Vocabulary, tokenize_sentence
from .errors import ConfigError, DataError

CHECKPOINT_MAGIC = b"NNCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ff: int = 64
    max_len: int = 256
    vocab_size: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.vocab_size < 2:
            raise ConfigError("vocab_size must cover the reserved ids")


class ModelParams:
    """All trainable tensors, addressable by name.

    Names beginning with "crf." form the CRF parameter group (emission
    projection and transition table); everything else is the encoder
    group. The BIO transition mask is a constant, not a parameter.
    """

    def __init__(self, config: EncoderConfig, label_set: LabelSet | None,
                 tensors: dict[str, Tensor], trans_mask: np.ndarray | None):
        self.config = config
        self.label_set = label_set
        self.tensors = tensors
        self.trans_mask = trans_mask

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def group(self, name: str) -> dict[str, Tensor]:
        want_crf = name == "crf"
        return {k: v for k, v in self.tensors.items()
                if k.startswith("crf.") == want_crf}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self.tensors[k].data = v.copy()

    def masked_transitions(self) -> Tensor:
        return self.tensors["crf.trans"] + Tensor(self.trans_mask)


def init_params(config: EncoderConfig, label_set: LabelSet | None = None) -> ModelParams:
    from .crf import bio_transition_mask

    rng = np.random.default_rng(config.seed)
    d, h = config.d_model, config.d_ff

    def linear(n_in, n_out):
        bound = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-bound, bound, size=(n_in, n_out))

    t: dict[str, Tensor] = {}
    t["enc.tok_emb"] = Tensor(rng.normal(0.0, 0.5 / np.sqrt(d),
                                         size=(config.vocab_size, d)))
    t["enc.pos_emb"] = Tensor(rng.normal(0.0, 0.5 / np.sqrt(d),
                                         size=(config.max_len, d)))
    for i in range(config.n_layers):
        pre = f"enc.layer{i}."
        t[pre + "ln1.g"] = Tensor(np.ones(d))
        t[pre + "ln1.b"] = Tensor(np.zeros(d))
        for proj in ("wq", "wk", "wv", "wo"):
            t[pre + proj] = Tensor(linear(d, d))
            t[pre + proj.replace("w", "b")] = Tensor(np.zeros(d))
        t[pre + "ln2.g"] = Tensor(np.ones(d))
        t[pre + "ln2.b"] = Tensor(np.zeros(d))
        t[pre + "ff.w1"] = Tensor(linear(d, h))
        t[pre + "ff.b1"] = Tensor(np.zeros(h))
        t[pre + "ff.w2"] = Tensor(linear(h, d))
        t[pre + "ff.b2"] = Tensor(np.zeros(d))
    mask = None
    if label_set is not None:
        K = label_set.K
        t["crf.emit_w"] = Tensor(linear(d, K))
        t["crf.emit_b"] = Tensor(np.zeros(K))
        t["crf.trans"] = Tensor(np.zeros((K + 2, K + 2)))
        mask = bio_transition_mask(label_set)
    return ModelParams(config, label_set, t, mask)


# ---------------------------------------------------------------------------
# Two-view batch construction


@dataclass(frozen=True)
class ViewBatch:
    """One paired training instance.

    `ov_ids` is the noisy text alone; `rv_ids` appends the separator and
    the retrieved-context subtokens (equal to `ov_ids` when there is no
    context). `pool_positions` are the first-subtoken positions of the
    noisy words, valid in both views because the noisy prefix is shared.
    """

    sentence_id: str
    ov_ids: tuple[int, ...]
    rv_ids: tuple[int, ...]
    word_spans: tuple[SubtokenSpan, ...]
    sep_position: int | None
    pool_positions: tuple[int, ...]
    labels: tuple[str, ...]

    @property
    def crf_mask(self) -> tuple[bool, ...]:
        pos = set(self.pool_positions)
        return tuple(i in pos for i in range(len(self.rv_ids)))

    @property
    def has_context(self) -> bool:
        return self.sep_position is not None


def concat_views(noisy_tokens, labels, context: str, vocab: Vocabulary,
                 budget: int, sentence_id: str = "") -> ViewBatch:
    """Build both views, truncating the context from the right to fit."""
    spans = tuple(tokenize_sentence(noisy_tokens, vocab))
    ov_ids: list[int] = []
    pool: list[int] = []
    for span in spans:
        pool.append(len(ov_ids))
        ov_ids.extend(span.subtoken_ids)
    if len(ov_ids) + 1 > budget:
        raise DataError(
            f"sentence {sentence_id!r}: {len(ov_ids)} subtokens exceed "
            f"budget {budget} (separator included)"
        )
    ctx_ids: list[int] = []
    for word in context.split():
        ctx_ids.extend(tokenize_sentence([word], vocab)[0].subtoken_ids)
    ctx_ids = ctx_ids[: budget - len(ov_ids) - 1]
    if ctx_ids:
        rv_ids = tuple(ov_ids) + (vocab.sep_id,) + tuple(ctx_ids)
        sep_position = len(ov_ids)
    else:
        rv_ids = tuple(ov_ids)
        sep_position = None
    return ViewBatch(
        sentence_id=sentence_id,
        ov_ids=tuple(ov_ids),
        rv_ids=rv_ids,
        word_spans=spans,
        sep_position=sep_position,
        pool_positions=tuple(pool),
        labels=tuple(labels),
    )


# ---------------------------------------------------------------------------
# Forward pass


def _attention(x: Tensor, params: ModelParams, layer: int) -> Tensor:
    cfg = params.config
    L = x.data.shape[0]
    H, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
    pre = f"enc.layer{layer}."
    q = linear(x, params[pre + "wq"], params[pre + "bq"]).reshape(L, H, dh).swapaxes(0, 1)
    k = linear(x, params[pre + "wk"], params[pre + "bk"]).reshape(L, H, dh).swapaxes(0, 1)
    v = linear(x, params[pre + "wv"], params[pre + "bv"]).reshape(L, H, dh).swapaxes(0, 1)
    att = (q @ k.swapaxes(-1, -2) * (1.0 / np.sqrt(dh))).softmax(axis=-1)
    ctx = (att @ v).swapaxes(0, 1).reshape(L, cfg.d_model)
    return linear(ctx, params[pre + "wo"], params[pre + "bo"])


def encode_layers(params: ModelParams, ids) -> list[Tensor]:
    """All layer outputs, embeddings first; length n_layers + 1."""
    ids = list(ids)
    if not ids:
        raise DataError("cannot encode an empty id sequence")
    if len(ids) > params.config.max_len:
        raise DataError(f"sequence length {len(ids)} exceeds max_len")
    x = params["enc.tok_emb"].take_rows(ids) + params["enc.pos_emb"][: len(ids)]
    outs = [x]
    for i in range(params.config.n_layers):
        pre = f"enc.layer{i}."
        h = layer_norm(x, params[pre + "ln1.g"], params[pre + "ln1.b"])
        x = x + _attention(h, params, i)
        h2 = layer_norm(x, params[pre + "ln2.g"], params[pre + "ln2.b"])
        ff = linear(h2, params[pre + "ff.w1"], params[pre + "ff.b1"]).gelu()
        x = x + linear(ff, params[pre + "ff.w2"], params[pre + "ff.b2"])
        outs.append(x)
    return outs


def encode(params: ModelParams, batch: ViewBatch, view: str = "rv") -> Tensor:
    """Contextual representations for one view of a batch instance."""
    if view not in ("ov", "rv"):
        raise ConfigError(f"unknown view {view!r}")
    ids = batch.rv_ids if view == "rv" else batch.ov_ids
    return encode_layers(params, ids)[-1]


def first_pool(representations: Tensor, batch: ViewBatch) -> Tensor:
    """One row per noisy word: the representation of its first subtoken."""
    return representations.take_rows(list(batch.pool_positions))


def emissions_for(params: ModelParams, pooled: Tensor) -> Tensor:
    return pooled @ params["crf.emit_w"] + params["crf.emit_b"]


# ---------------------------------------------------------------------------
# Checkpoint I/O: named float64 tensors plus a text config


def save_checkpoint(params: ModelParams, path) -> None:
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.tensors)))
        for name, tensor in params.tensors.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.data, dtype="<f8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())
    cfg = params.config
    lines = [
        f"d_model={cfg.d_model}",
        f"n_layers={cfg.n_layers}",
        f"n_heads={cfg.n_heads}",
        f"d_ff={cfg.d_ff}",
        f"max_len={cfg.max_len}",
        f"vocab_size={cfg.vocab_size}",
        f"seed={cfg.seed}",
        "tags=" + ",".join(params.label_set.tags if params.label_set else ()),
    ]
    with open(path + ".cfg", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelParams:
    from .crf import bio_transition_mask

    path = str(path)
    kv: dict[str, str] = {}
    with open(path + ".cfg", encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                key, _, val = line.strip().partition("=")
                kv[key] = val
    config = EncoderConfig(
        d_model=int(kv["d_model"]), n_layers=int(kv["n_layers"]),
        n_heads=int(kv["n_heads"]), d_ff=int(kv["d_ff"]),
        max_len=int(kv["max_len"]), vocab_size=int(kv["vocab_size"]),
        seed=int(kv["seed"]),
    )
    label_set = LabelSet(tuple(t for t in kv.get("tags", "").split(",") if t))
    tensors: dict[str, Tensor] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            tensors[name] = Tensor(data.astype(np.float64))
    mask = bio_transition_mask(label_set) if label_set.tags else None
    return ModelParams(config, label_set if label_set.tags else None, tensors, mask)
