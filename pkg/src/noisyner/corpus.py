"""Labeled-sentence data model, CoNLL I/O, vocabulary, and subword tokenizer.

The tokenizer is deliberately simple: exact word lookup with per-character
fallback. A corrupted word that is no longer in the vocabulary shatters
into single characters (unknown characters map to the UNK id), which is
the behaviour the downstream NER model has to be robust against.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import DataError

UNK_TOKEN = "<unk>"
SEP_TOKEN = "[SEP]"


def validate_bio(labels) -> None:
    """Raise DataError unless `labels` is a strict BIO2 sequence."""
    prev = "O"
    for i, lab in enumerate(labels):
        if lab == "O":
            prev = lab
            continue
        if len(lab) < 3 or lab[:2] not in ("B-", "I-"):
            raise DataError(f"bad label {lab!r} at position {i}")
        if lab[0] == "I":
            tag = lab[2:]
            if prev == "O" or prev[2:] != tag:
                raise DataError(f"orphan {lab} at position {i} (follows {prev})")
        prev = lab


@dataclass(frozen=True)
class LabeledSentence:
    """Token sequence with one BIO label per token."""

    tokens: tuple[str, ...]
    labels: tuple[str, ...]
    id: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise DataError(
                f"sentence {self.id!r}: {len(self.tokens)} tokens "
                f"vs {len(self.labels)} labels"
            )
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


Dataset = list[LabeledSentence]


@dataclass(frozen=True)
class LabelSet:
    """Ordered entity tags with a dense label index; index 0 is O."""

    tags: tuple[str, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        out = ["O"]
        for tag in self.tags:
            out += [f"B-{tag}", f"I-{tag}"]
        return tuple(out)

    @property
    def K(self) -> int:
        return 2 * len(self.tags) + 1

    def index(self, label: str) -> int:
        return self.labels.index(label)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "LabelSet":
        tags = sorted({lab[2:] for s in dataset for lab in s.labels if lab != "O"})
        return cls(tuple(tags))


@dataclass(frozen=True)
class SubtokenSpan:
    word_index: int
    subtoken_ids: tuple[int, ...]

    def __post_init__(self):
        if not self.subtoken_ids:
            raise DataError(f"empty span for word {self.word_index}")
        object.__setattr__(self, "subtoken_ids", tuple(self.subtoken_ids))


@dataclass(frozen=True)
class Vocabulary:
    """Word and character id maps sharing one dense id space.

    Ids 0 and 1 are reserved for the UNK and separator tokens; word ids
    then char ids follow, each ordered by (frequency desc, lexicographic)
    so two builds over the same corpus agree exactly.
    """

    entries: dict[str, int]
    char_entries: dict[str, int]
    unk_id: int = 0
    sep_id: int = 1
    min_freq: int = 1

    @property
    def size(self) -> int:
        return 2 + len(self.entries) + len(self.char_entries)


def parse_conll(text: str) -> Dataset:
    """Parse "token<TAB>label" lines, blank line between sentences.

    Invalid BIO is rejected here; lenient repair only happens during
    label projection onto noisy text.
    """
    sentences: Dataset = []
    tokens: list[str] = []
    labels: list[str] = []

    def flush():
        if tokens:
            validate_bio(labels)
            sentences.append(
                LabeledSentence(tuple(tokens), tuple(labels), id=f"s{len(sentences)}")
            )
            tokens.clear()
            labels.clear()

    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"line {lineno}: expected 2 tab-separated columns")
        tok, lab = cols
        if not tok:
            raise DataError(f"line {lineno}: empty token")
        if lab != "O" and (len(lab) < 3 or lab[:2] not in ("B-", "I-")):
            raise DataError(f"line {lineno}: unknown label {lab!r}")
        tokens.append(tok)
        labels.append(lab)
    flush()
    return sentences


def write_conll(dataset: Dataset) -> str:
    lines: list[str] = []
    for sent in dataset:
        for tok, lab in zip(sent.tokens, sent.labels):
            lines.append(f"{tok}\t{lab}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def read_conll_file(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_conll(fh.read())


def write_conll_file(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_conll(dataset))


def _ordered_ids(counter: Counter, start: int) -> dict[str, int]:
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return {key: start + i for i, (key, _) in enumerate(ranked)}


def build_vocab(dataset: Dataset, min_freq: int = 1,
                extra_texts: list[str] | None = None) -> Vocabulary:
    """Count words and characters; words below `min_freq` get no entry.

    `extra_texts` lets retrieval corpora contribute words (split on
    whitespace) so rendered contexts tokenize to single ids.
    """
    if min_freq < 1:
        raise DataError("min_freq must be >= 1")
    if not dataset and not extra_texts:
        raise DataError("cannot build a vocabulary from an empty dataset")
    word_freq: Counter = Counter()
    char_freq: Counter = Counter()
    for sent in dataset:
        for tok in sent.tokens:
            word_freq[tok] += 1
            char_freq.update(tok)
    for text in extra_texts or []:
        for tok in text.split():
            word_freq[tok] += 1
            char_freq.update(tok)
    word_freq.pop(SEP_TOKEN, None)
    words = {w: c for w, c in word_freq.items() if c >= min_freq}
    entries = _ordered_ids(Counter(words), start=2)
    char_entries = _ordered_ids(char_freq, start=2 + len(entries))
    return Vocabulary(entries=entries, char_entries=char_entries, min_freq=min_freq)


def tokenize(word: str, vocab: Vocabulary, word_index: int = 0) -> SubtokenSpan:
    """Exact-match lookup, else one subtoken per character (unk fallback)."""
    if not word:
        raise DataError("cannot tokenize an empty word")
    if word == SEP_TOKEN:
        return SubtokenSpan(word_index, (vocab.sep_id,))
    if word in vocab.entries:
        return SubtokenSpan(word_index, (vocab.entries[word],))
    ids = tuple(vocab.char_entries.get(ch, vocab.unk_id) for ch in word)
    return SubtokenSpan(word_index, ids)


def tokenize_sentence(tokens, vocab: Vocabulary) -> list[SubtokenSpan]:
    return [tokenize(tok, vocab, i) for i, tok in enumerate(tokens)]


def save_vocab(vocab: Vocabulary, path) -> None:
    lines = [f"#meta\tmin_freq={vocab.min_freq}"]
    lines += [f"{w}\t{i}" for w, i in sorted(vocab.entries.items(), key=lambda kv: kv[1])]
    lines.append("#chars")
    lines += [f"{c}\t{i}" for c, i in
              sorted(vocab.char_entries.items(), key=lambda kv: kv[1])]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocabulary:
    entries: dict[str, int] = {}
    char_entries: dict[str, int] = {}
    min_freq = 1
    section = "words"
    with open(path, encoding="utf-8") as fh:
        for raw in fh.read().split("\n"):
            if not raw:
                continue
            if raw.startswith("#meta"):
                min_freq = int(raw.split("min_freq=")[1])
                continue
            if raw == "#chars":
                section = "chars"
                continue
            key, _, idx = raw.rpartition("\t")
            target = entries if section == "words" else char_entries
            target[key] = int(idx)
    return Vocabulary(entries=entries, char_entries=char_entries, min_freq=min_freq)
