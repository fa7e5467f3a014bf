"""Noisy-channel text corruption and token error rate.

Two channels are provided. The typo channel follows the epsilon-slot
confusion-matrix procedure: an epsilon slot is interleaved before and
after every letter, insertion/deletion/substitution each fire with
probability p/3, and whitespace is never an edit site, so the token
count is preserved. The OCR-like channel substitutes visually confusable
character groups and may split, merge, or drop whole tokens, so the
token count can change.
"""

from __future__ import annotations

import importlib.resources
import logging
import random
from dataclasses import dataclass

from .align import levenshtein_distance
from .corpus import Dataset, LabeledSentence
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TypoStats:
    """Event counters for Monte-Carlo calibration of the typo channel."""

    letter_sites: int = 0
    slot_sites: int = 0
    insertions: int = 0
    deletions: int = 0
    substitutions: int = 0

    def merge(self, other: "TypoStats") -> "TypoStats":
        return TypoStats(
            self.letter_sites + other.letter_sites,
            self.slot_sites + other.slot_sites,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.substitutions + other.substitutions,
        )


@dataclass(frozen=True)
class TypoChannel:
    """Spelling-mistake channel at overall noise level p.

    `alphabet` is the edit alphabet (epsilon excluded); by convention it
    holds every non-whitespace character observed in the source corpus.
    """

    p: float
    alphabet: tuple[str, ...]
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"noise level p={self.p} outside [0, 1]")
        if self.p > 0 and not self.alphabet:
            raise ConfigError("empty alphabet with p > 0")
        object.__setattr__(self, "alphabet", tuple(self.alphabet))

    @classmethod
    def from_dataset(cls, dataset: Dataset, p: float, seed: int = 0) -> "TypoChannel":
        chars = sorted({ch for s in dataset for tok in s.tokens for ch in tok})
        return cls(p=p, alphabet=tuple(chars), seed=seed)


def _pick_other(rng: random.Random, alphabet: tuple[str, ...], exclude: str) -> str:
    """Uniform draw from the alphabet minus `exclude`, one rng call."""
    try:
        pos = alphabet.index(exclude)
    except ValueError:
        return alphabet[rng.randrange(len(alphabet))]
    if len(alphabet) == 1:
        return exclude
    j = rng.randrange(len(alphabet) - 1)
    return alphabet[j + 1 if j >= pos else j]


def _corrupt_word(word: str, channel: TypoChannel, rng: random.Random,
                  counts: list[int]) -> str:
    third = channel.p / 3.0
    out: list[str] = []
    # slots and letters strictly left to right: slot0, c0, slot1, c1, ...
    for ch in word:
        counts[1] += 1
        if rng.random() < third:
            counts[2] += 1
            out.append(channel.alphabet[rng.randrange(len(channel.alphabet))])
        counts[0] += 1
        u = rng.random()
        if u < third:
            counts[3] += 1  # deletion: letter becomes epsilon
        elif u < 2 * third:
            counts[4] += 1
            out.append(_pick_other(rng, channel.alphabet, ch))
        else:
            out.append(ch)
    counts[1] += 1
    if rng.random() < third:
        counts[2] += 1
        out.append(channel.alphabet[rng.randrange(len(channel.alphabet))])
    result = "".join(out)
    # token count must be preserved: a fully deleted word stays as-is
    return result if result else word


def induce_typos(sentence_text: str, channel: TypoChannel,
                 rng: random.Random | None = None,
                 stats: list["TypoStats"] | None = None) -> str:
    """Corrupt one sentence; whitespace runs are copied verbatim.

    Deterministic given (input, channel.seed). Pass `stats` (a one-item
    list is appended to) to collect per-site event counts.
    """
    if rng is None:
        rng = random.Random(channel.seed)
    counts = [0, 0, 0, 0, 0]  # letters, slots, ins, del, sub
    pieces: list[str] = []
    word: list[str] = []
    for ch in sentence_text:
        if ch.isspace():
            if word:
                pieces.append(_corrupt_word("".join(word), channel, rng, counts))
                word.clear()
            pieces.append(ch)
        else:
            word.append(ch)
    if word:
        pieces.append(_corrupt_word("".join(word), channel, rng, counts))
    if stats is not None:
        stats.append(TypoStats(*counts))
    return "".join(pieces)


def corrupt_dataset_typos(dataset: Dataset, channel: TypoChannel) -> Dataset:
    """Per-sentence derived streams (seed xor index); labels carry over
    unchanged because the token count is preserved."""
    out: list[LabeledSentence] = []
    for i, sent in enumerate(dataset):
        rng = random.Random(channel.seed ^ i)
        noisy = induce_typos(sent.text, channel, rng=rng)
        out.append(LabeledSentence(tuple(noisy.split(" ")), sent.labels, id=sent.id))
    return out


# ---------------------------------------------------------------------------
# OCR-like channel

ConfusionTable = dict[str, list[tuple[str, float]]]


@dataclass(frozen=True)
class OcrChannel:
    """Text-level stand-in for render-and-recognize OCR noise.

    Substitutions use a visual confusion table (sources may span several
    characters, e.g. rn -> m); split/merge/drop events change the token
    count the way real OCR output does.
    """

    confusion_table: dict
    p_sub: float = 0.0
    p_split: float = 0.0
    p_merge: float = 0.0
    p_drop: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub", "p_split", "p_merge", "p_drop"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name}={v} outside [0, 1]")
        for src, alts in self.confusion_table.items():
            for tgt, w in alts:
                if w <= 0:
                    raise ConfigError(f"confusion weight {src}->{tgt} not positive")


def _weighted_choice(rng: random.Random, alts: list[tuple[str, float]]) -> str:
    total = sum(w for _, w in alts)
    u = rng.random() * total
    acc = 0.0
    for tgt, w in alts:
        acc += w
        if u < acc:
            return tgt
    return alts[-1][0]


def _sub_pass(token: str, channel: OcrChannel, rng: random.Random) -> str:
    sources = channel.confusion_table
    max_len = max((len(s) for s in sources), default=0)
    out: list[str] = []
    i = 0
    while i < len(token):
        if rng.random() < channel.p_sub:
            hit = None
            for L in range(min(max_len, len(token) - i), 0, -1):
                if token[i:i + L] in sources:
                    hit = token[i:i + L]
                    break
            if hit is not None:
                out.append(_weighted_choice(rng, sources[hit]))
                i += len(hit)
                continue
        out.append(token[i])
        i += 1
    return "".join(out)


def induce_ocr(tokens, channel: OcrChannel,
               rng: random.Random | None = None) -> list[str]:
    """Corrupt a token sequence; the output token count may differ.

    Per token: one drop draw, then one substitution draw per character
    position, then one split draw per intra-token boundary; after each
    token but the last, one merge draw for the following boundary.
    """
    if rng is None:
        rng = random.Random(channel.seed)
    groups: list[list[str]] = []   # surviving pieces per input token
    merges: list[bool] = []        # merge decision per input boundary
    for t, token in enumerate(tokens):
        if rng.random() < channel.p_drop:
            groups.append([])
        else:
            subbed = _sub_pass(token, channel, rng)
            pieces: list[str] = []
            cur: list[str] = []
            for i, ch in enumerate(subbed):
                cur.append(ch)
                if i < len(subbed) - 1 and rng.random() < channel.p_split:
                    pieces.append("".join(cur))
                    cur = []
            if cur:
                pieces.append("".join(cur))
            groups.append([p for p in pieces if p])
        if t < len(tokens) - 1:
            merges.append(rng.random() < channel.p_merge)

    out: list[str] = []
    carry: list[str] | None = None  # piece waiting to be merged rightward
    for t, pieces in enumerate(groups):
        pieces = list(pieces)
        if carry is not None and pieces:
            pieces[0] = "".join(carry) + pieces[0]
            carry = None
        elif carry is not None:
            # right-hand token dropped: the pending piece stands alone
            out.append("".join(carry))
            carry = None
        if t < len(merges) and merges[t] and pieces:
            carry = [pieces.pop()]
        out.extend(pieces)
    if carry:
        out.append("".join(carry))
    if tokens and not out:
        log.warning("OCR channel dropped every token of a sentence")
    return out


def corrupt_dataset_ocr(dataset: Dataset, channel: OcrChannel) -> list[list[str]]:
    out = []
    for i, sent in enumerate(dataset):
        rng = random.Random(channel.seed ^ i)
        out.append(induce_ocr(list(sent.tokens), channel, rng=rng))
    return out


# ---------------------------------------------------------------------------
# Confusion table I/O and calibrated presets


def load_confusion_table(path) -> ConfusionTable:
    """Read "source<TAB>target<TAB>weight" lines."""
    table: ConfusionTable = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataError(f"confusion table line {lineno}: need 3 columns")
            src, tgt, w = cols
            table.setdefault(src, []).append((tgt, float(w)))
    return table


def default_confusion_table() -> ConfusionTable:
    ref = importlib.resources.files("noisyner").joinpath("data/confusion_default.tsv")
    with importlib.resources.as_file(ref) as path:
        return load_confusion_table(path)


# Calibrated by Monte-Carlo sweep on synthetic social-media-like text to
# land near the four reference corpus-level token error rates
# (2.5%, 8%, 14%, 26%); see scripts/calibrate_ocr_presets.py.
OCR_PRESET_PARAMS: dict[str, dict[str, float]] = {
    "ocr1": {"p_sub": 0.04364, "p_split": 0.00349, "p_merge": 0.01047, "p_drop": 0.01397},
    "ocr2": {"p_sub": 0.13702, "p_split": 0.01113, "p_merge": 0.03425, "p_drop": 0.04282},
    "ocr3": {"p_sub": 0.24412, "p_split": 0.02005, "p_merge": 0.06103, "p_drop": 0.07672},
    "ocr4": {"p_sub": 0.50501, "p_split": 0.04079, "p_merge": 0.12625, "p_drop": 0.1583},
}

OCR_PRESET_TARGET_RATES = {"ocr1": 0.025, "ocr2": 0.08, "ocr3": 0.14, "ocr4": 0.26}


def ocr_preset(name: str, seed: int = 0,
               confusion_table: ConfusionTable | None = None) -> OcrChannel:
    if name not in OCR_PRESET_PARAMS:
        raise ConfigError(f"unknown OCR preset {name!r}")
    table = confusion_table if confusion_table is not None else default_confusion_table()
    return OcrChannel(confusion_table=table, seed=seed, **OCR_PRESET_PARAMS[name])


# ---------------------------------------------------------------------------
# Token error rate


def token_error_rate(noisy_corpus, gold_corpus) -> float:
    """Summed character-level edit distance over summed gold length.

    Inputs are parallel sequences of sentence strings.
    """
    noisy_corpus, gold_corpus = list(noisy_corpus), list(gold_corpus)
    if len(noisy_corpus) != len(gold_corpus):
        raise DataError("corpora are not aligned sentence-by-sentence")
    total_dist = 0
    total_len = 0
    for noisy, gold in zip(noisy_corpus, gold_corpus):
        total_dist += levenshtein_distance(noisy, gold)
        total_len += len(gold)
    if total_len == 0:
        return 0.0
    return total_dist / total_len
