"""Character-level Levenshtein alignment and gold-to-noisy label projection.

Noise that splits, merges, or deletes words leaves the noisy tokenization
out of step with the gold labels. Aligning the two texts at character
level induces a token-to-token map, through which BIO labels are
projected so that every recognized noisy token gets exactly one label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, LabeledSentence
from .errors import DataError

MATCH, SUB, DEL, INS = "MATCH", "SUB", "DEL", "INS"


def levenshtein_distance(a: str, b: str) -> int:
    """Unit-cost edit distance, row-vectorized DP.

    The insertion dependency within a row is resolved with a prefix-min
    transform: cur[j] = min_k (base[k] + (j-k)).
    """
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return n + m
    b_arr = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    a_arr = np.frombuffer(a.encode("utf-32-le"), dtype=np.uint32)
    idx = np.arange(m + 1)
    prev = idx.copy()
    for i in range(1, n + 1):
        base = np.empty(m + 1, dtype=np.int64)
        base[0] = i
        base[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (b_arr != a_arr[i - 1]))
        prev = np.minimum.accumulate(base - idx) + idx
    return int(prev[m])


def _cost_matrix(a: str, b: str) -> np.ndarray:
    n, m = len(a), len(b)
    dp = np.zeros((n + 1, m + 1), dtype=np.int64)
    dp[0] = np.arange(m + 1)
    dp[:, 0] = np.arange(n + 1)
    if m == 0 or n == 0:
        return dp
    b_arr = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    idx = np.arange(m + 1)
    for i in range(1, n + 1):
        base = np.empty(m + 1, dtype=np.int64)
        base[0] = i
        base[1:] = np.minimum(dp[i - 1, 1:] + 1, dp[i - 1, :-1] + (b_arr != ord(a[i - 1])))
        dp[i] = np.minimum.accumulate(base - idx) + idx
    return dp


def _char_token_map(text: str) -> list[int | None]:
    """Token index for every character; None on whitespace."""
    out: list[int | None] = [None] * len(text)
    tok = -1
    in_tok = False
    for i, ch in enumerate(text):
        if ch.isspace():
            in_tok = False
            continue
        if not in_tok:
            tok += 1
            in_tok = True
        out[i] = tok
    return out


@dataclass(frozen=True)
class EditAlignment:
    """One canonical optimal edit path plus the induced token map.

    Op positions: MATCH/SUB carry the indices of the aligned characters;
    DEL carries (gold_pos, current noisy cursor); INS carries (current
    gold cursor, noisy_pos). Replaying the ops rebuilds the noisy text.
    """

    ops: tuple[tuple[str, int, int], ...]
    cost: int
    token_map: dict[int, frozenset[int]]


def levenshtein_align(gold_text: str, noisy_text: str) -> EditAlignment:
    """Minimal-cost alignment with a fixed tie-break.

    At equal cost the backtrace prefers MATCH > SUB > DEL > INS, so the
    returned path is canonical and runs are reproducible.
    """
    dp = _cost_matrix(gold_text, noisy_text)
    i, j = len(gold_text), len(noisy_text)
    rev: list[tuple[str, int, int]] = []
    while i > 0 or j > 0:
        here = dp[i, j]
        if i > 0 and j > 0 and gold_text[i - 1] == noisy_text[j - 1] \
                and dp[i - 1, j - 1] == here:
            rev.append((MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and gold_text[i - 1] != noisy_text[j - 1] \
                and dp[i - 1, j - 1] + 1 == here:
            rev.append((SUB, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dp[i - 1, j] + 1 == here:
            rev.append((DEL, i - 1, j))
            i -= 1
        else:
            rev.append((INS, i, j - 1))
            j -= 1
    ops = tuple(reversed(rev))

    gold_tokens = _char_token_map(gold_text)
    noisy_tokens = _char_token_map(noisy_text)
    n_noisy = max((t for t in noisy_tokens if t is not None), default=-1) + 1
    mapping: dict[int, set[int]] = {t: set() for t in range(n_noisy)}
    for kind, gpos, npos in ops:
        if kind not in (MATCH, SUB):
            continue
        ntok = noisy_tokens[npos]
        gtok = gold_tokens[gpos]
        if ntok is not None and gtok is not None:
            mapping[ntok].add(gtok)
    token_map = {k: frozenset(v) for k, v in mapping.items()}
    return EditAlignment(ops=ops, cost=int(dp[-1, -1]), token_map=token_map)


def apply_ops(gold_text: str, noisy_text: str, ops) -> str:
    """Replay the edit script; MATCH/DEL read gold, SUB/INS read noisy."""
    out: list[str] = []
    for kind, gpos, npos in ops:
        if kind == MATCH:
            out.append(gold_text[gpos])
        elif kind == SUB or kind == INS:
            out.append(noisy_text[npos])
    return "".join(out)


def repair_bio(labels: list[str]) -> list[str]:
    """Convert orphan I-T labels to B-T, left to right."""
    out: list[str] = []
    prev = "O"
    for lab in labels:
        if lab.startswith("I-"):
            tag = lab[2:]
            if prev == "O" or prev[2:] != tag:
                lab = "B-" + tag
        out.append(lab)
        prev = lab
    return out


def project_labels(gold: LabeledSentence, noisy_tokens,
                   alignment: EditAlignment) -> list[str]:
    """One label per noisy token, projected through the token map.

    A noisy token aligned to gold tokens S takes the label of min(S); a
    gold B-T token consumed by an earlier noisy token yields I-T on later
    pieces; unaligned (inserted) tokens get O; a repair pass then fixes
    any orphan I-T left by dropped tokens.
    """
    noisy_tokens = list(noisy_tokens)
    if set(alignment.token_map) != set(range(len(noisy_tokens))):
        raise DataError("alignment does not cover the noisy token sequence")
    labels: list[str] = []
    consumed_b: set[int] = set()
    for j in range(len(noisy_tokens)):
        aligned = alignment.token_map[j]
        if not aligned:
            labels.append("O")
            continue
        g = min(aligned)
        if g >= len(gold.tokens):
            raise DataError("alignment refers to a missing gold token")
        lab = gold.labels[g]
        if lab.startswith("B-"):
            if g in consumed_b:
                lab = "I-" + lab[2:]
            else:
                consumed_b.add(g)
        labels.append(lab)
    return repair_bio(labels)


def project_sentence(gold: LabeledSentence, noisy_text: str) -> LabeledSentence:
    alignment = levenshtein_align(gold.text, noisy_text)
    tokens = noisy_text.split()
    labels = project_labels(gold, tokens, alignment)
    return LabeledSentence(tuple(tokens), tuple(labels), id=gold.id)


def project_dataset(gold_dataset: Dataset, noisy_texts) -> Dataset:
    if len(gold_dataset) != len(noisy_texts):
        raise DataError("gold and noisy corpora differ in sentence count")
    return [project_sentence(g, t) for g, t in zip(gold_dataset, noisy_texts)]
