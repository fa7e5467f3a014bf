"""Inverted index with Okapi BM25 ranking and context rendering.

Units are single sentences carrying their paragraph, page title, and
anchor (hyperlink) spans. A unit is only ever returned if it shares at
least one term with the query. Rendered contexts follow three modes:
para (title + paragraph), sent (title + plain sentence), and sent-link
(title + sentence with anchors rewritten to <e:target>surface</e>).
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

from .corpus import SEP_TOKEN
from .errors import ConfigError, DataError

_TERM_RE = re.compile(r"\w+")

CONTEXT_MODES = ("para", "sent", "sent-link")


def terms_of(text: str) -> list[str]:
    """Lowercased word characters; punctuation and whitespace split."""
    return _TERM_RE.findall(text.lower())


@dataclass(frozen=True)
class Anchor:
    surface: str
    target: str
    start: int
    end: int


@dataclass(frozen=True)
class IndexedUnit:
    sent_id: str
    sentence: str
    paragraph: str = ""
    title: str = ""
    anchors: tuple[Anchor, ...] = ()

    def __post_init__(self):
        para = self.paragraph or self.sentence
        object.__setattr__(self, "paragraph", para)
        if self.sentence not in para:
            raise DataError(f"unit {self.sent_id!r}: sentence not inside paragraph")
        for a in self.anchors:
            if not (0 <= a.start <= a.end <= len(self.sentence)):
                raise DataError(f"unit {self.sent_id!r}: anchor span out of range")
            if self.sentence[a.start:a.end] != a.surface:
                raise DataError(f"unit {self.sent_id!r}: anchor surface mismatch")


@dataclass
class InvertedIndex:
    units: tuple[IndexedUnit, ...]
    postings: dict[str, list[tuple[int, int]]]
    doc_len: list[int]
    avgdl: float
    k1: float = 1.2
    b: float = 0.75

    @property
    def N(self) -> int:
        return len(self.units)


def build_index(units, k1: float = 1.2, b: float = 0.75) -> InvertedIndex:
    units = tuple(units)
    if not units:
        raise DataError("cannot index an empty unit list")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_len = []
    for uid, unit in enumerate(units):
        toks = terms_of(unit.sentence)
        doc_len.append(len(toks))
        for term, tf in sorted(Counter(toks).items()):
            postings.setdefault(term, []).append((uid, tf))
    avgdl = sum(doc_len) / len(units)
    return InvertedIndex(units=units, postings=postings, doc_len=doc_len,
                         avgdl=avgdl, k1=k1, b=b)


def bm25_search(index: InvertedIndex, query: str, k: int = 10):
    """Top-k (unit_id, score), score descending, ties by unit id.

    idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)); zero-overlap units are
    never scored, matching the at-least-one-term contract.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    scores: dict[int, float] = {}
    seen = set()
    for term in terms_of(query):
        if term in seen or term not in index.postings:
            seen.add(term)
            continue
        seen.add(term)
        plist = index.postings[term]
        df = len(plist)
        idf = math.log(1.0 + (index.N - df + 0.5) / (df + 0.5))
        for uid, tf in plist:
            norm = index.k1 * (
                1.0 - index.b + index.b * index.doc_len[uid] / index.avgdl
            )
            scores[uid] = scores.get(uid, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


# ---------------------------------------------------------------------------
# Context rendering


def _with_anchors_marked(unit: IndexedUnit) -> str:
    """Rewrite each [surface -> target] span to <e:target>surface</e>,
    left to right (spans are non-overlapping)."""
    out = []
    pos = 0
    for a in sorted(unit.anchors, key=lambda a: a.start):
        if a.start < pos:
            raise DataError(f"unit {unit.sent_id!r}: overlapping anchors")
        out.append(unit.sentence[pos:a.start])
        out.append(f"<e:{a.target}>{a.surface}</e>")
        pos = a.end
    out.append(unit.sentence[pos:])
    return "".join(out)


def render_hit(unit: IndexedUnit, mode: str) -> str:
    if mode not in CONTEXT_MODES:
        raise ConfigError(f"unknown context mode {mode!r}")
    if mode == "para":
        body = unit.paragraph
    elif mode == "sent":
        body = unit.sentence
    else:
        body = _with_anchors_marked(unit)
    return f"{unit.title} : {body}" if unit.title else body


def render_context(hits, mode: str, top_m: int = 10,
                   max_tokens: int | None = None) -> str:
    """Join the top hits with the separator token; `hits` are units."""
    parts = [render_hit(u, mode) for u in list(hits)[:top_m]]
    joined = f" {SEP_TOKEN} ".join(p for p in parts if p)
    if max_tokens is not None:
        joined = " ".join(joined.split()[:max_tokens])
    return joined


# ---------------------------------------------------------------------------
# JSON-lines corpus ingestion


def unit_from_json(obj: dict) -> IndexedUnit:
    anchors = tuple(
        Anchor(surface=a[0], target=a[1], start=int(a[2]), end=int(a[3]))
        for a in obj.get("anchors", ())
    )
    return IndexedUnit(
        sent_id=str(obj.get("id", obj.get("sent_id", ""))),
        sentence=obj["sent"],
        paragraph=obj.get("para", ""),
        title=obj.get("title", ""),
        anchors=anchors,
    )


def unit_to_json(unit: IndexedUnit) -> dict:
    return {
        "id": unit.sent_id,
        "sent": unit.sentence,
        "para": unit.paragraph,
        "title": unit.title,
        "anchors": [[a.surface, a.target, a.start, a.end] for a in unit.anchors],
    }


def save_index(index: InvertedIndex, path) -> None:
    payload = {
        "k1": index.k1,
        "b": index.b,
        "avgdl": index.avgdl,
        "doc_len": index.doc_len,
        "units": [unit_to_json(u) for u in index.units],
        "postings": {t: p for t, p in sorted(index.postings.items())},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False)
        fh.write("\n")


def load_index(path) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return InvertedIndex(
        units=tuple(unit_from_json(u) for u in payload["units"]),
        postings={t: [(int(u), int(f)) for u, f in p]
                  for t, p in payload["postings"].items()},
        doc_len=[int(x) for x in payload["doc_len"]],
        avgdl=float(payload["avgdl"]),
        k1=float(payload["k1"]),
        b=float(payload["b"]),
    )


def read_units_jsonl(path) -> list[IndexedUnit]:
    units = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                units.append(unit_from_json(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise DataError(f"{path}:{lineno}: bad unit record ({exc})") from exc
    return units


def write_units_jsonl(units, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for unit in units:
            fh.write(json.dumps(unit_to_json(unit), ensure_ascii=False) + "\n")
