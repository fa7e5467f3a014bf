"""Entity-level scoring, multi-seed aggregation, and correction stats."""

from __future__ import annotations

import json
import math
from typing import NamedTuple

from .align import EditAlignment
from .corpus import Dataset, validate_bio
from .errors import DataError


class EntitySpan(NamedTuple):
    tag: str
    start: int
    end: int  # inclusive


def extract_spans(labels) -> frozenset[EntitySpan]:
    """Maximal B-T (I-T)* runs as typed spans; input must be valid BIO."""
    labels = list(labels)
    validate_bio(labels)
    spans = []
    start = None
    tag = None
    for i, lab in enumerate(labels):
        if lab.startswith("B-"):
            if start is not None:
                spans.append(EntitySpan(tag, start, i - 1))
            start, tag = i, lab[2:]
        elif lab == "O":
            if start is not None:
                spans.append(EntitySpan(tag, start, i - 1))
            start = None
    if start is not None:
        spans.append(EntitySpan(tag, start, len(labels) - 1))
    return frozenset(spans)


def entity_f1(pred_labels_per_sentence, gold_labels_per_sentence):
    """Micro-averaged (P, R, F1) over exact span-and-type matches."""
    preds = list(pred_labels_per_sentence)
    golds = list(gold_labels_per_sentence)
    if len(preds) != len(golds):
        raise DataError("prediction and gold corpora differ in length")
    tp = n_pred = n_gold = 0
    for pred, gold in zip(preds, golds):
        if len(pred) != len(gold):
            raise DataError("sentence length mismatch between pred and gold")
        p_spans = extract_spans(pred)
        g_spans = extract_spans(gold)
        tp += len(p_spans & g_spans)
        n_pred += len(p_spans)
        n_gold += len(g_spans)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def correction_stats(gold_dataset: Dataset, noisy_dataset: Dataset,
                     alignments: list[EditAlignment]) -> dict:
    """Counts of entities and tokens that survived the noise unchanged.

    A gold token survives when exactly one noisy token maps to it and the
    strings are byte-identical; an entity counts as true when all of its
    tokens survived. Rates are percentages.
    """
    if not len(gold_dataset) == len(noisy_dataset) == len(alignments):
        raise DataError("gold, noisy, and alignment lists differ in length")
    ent = ent_true = token = token_true = 0
    for gold, noisy, ali in zip(gold_dataset, noisy_dataset, alignments):
        survived = set()
        for j, tok in enumerate(noisy.tokens):
            aligned = ali.token_map.get(j, frozenset())
            if len(aligned) == 1:
                (g,) = aligned
                if g < len(gold.tokens) and gold.tokens[g] == tok:
                    survived.add(g)
        token += len(gold.tokens)
        token_true += len(survived)
        for span in extract_spans(gold.labels):
            ent += 1
            if all(g in survived for g in range(span.start, span.end + 1)):
                ent_true += 1
    return {
        "ent": ent,
        "ent_true": ent_true,
        "ent_rate": 100.0 * ent_true / ent if ent else 0.0,
        "token": token,
        "token_true": token_true,
        "token_rate": 100.0 * token_true / token if token else 0.0,
    }


def aggregate(per_seed_metrics: list[dict]) -> dict:
    """Mean and population std per metric across seed runs."""
    if not per_seed_metrics:
        raise DataError("no runs to aggregate")
    keys = per_seed_metrics[0].keys()
    out = {}
    for key in keys:
        vals = [run[key] for run in per_seed_metrics]
        mean = sum(vals) / len(vals)
        var = sum((v - mean) ** 2 for v in vals) / len(vals)
        out[key] = (mean, math.sqrt(var))
    return out


def format_pm(mean: float, std: float, digits: int = 2) -> str:
    return f"{mean:.{digits}f}±{std:.{digits}f}"


def render_report(rows: list[dict]) -> str:
    """Aligned text table with one OV and one RV column per setting."""
    header = ("setting", "OV", "RV")
    table = [header]
    for row in rows:
        table.append((str(row.get("setting", "")),
                      str(row.get("ov", "-")),
                      str(row.get("rv", "-"))))
    widths = [max(len(r[c]) for r in table) for c in range(3)]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def report_json(rows: list[dict]) -> str:
    return json.dumps({"rows": rows}, indent=2, sort_keys=True)
