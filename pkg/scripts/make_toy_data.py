#!/usr/bin/env python3
"""Regenerate the toy corpus shipped under data/toy/.

200 labeled sentences over 30 entity surface forms, split 160/20/20,
plus a small wiki-like knowledge corpus covering the same surfaces.
Deterministic: rerunning reproduces the files byte for byte.
"""

import os

from noisyner.corpus import write_conll_file
from noisyner.sparse import write_units_jsonl
from noisyner.synth import (make_entity_corpus, make_entity_surfaces,
                            make_knowledge_units, split_dataset)

OUT = os.path.join(os.path.dirname(__file__), "..", "data", "toy")


def main():
    os.makedirs(OUT, exist_ok=True)
    corpus = make_entity_corpus(200, 30, seed=41, min_len=6, max_len=10)
    train, dev, test = split_dataset(corpus)
    for name, part in (("train", train), ("dev", dev), ("test", test)):
        write_conll_file(part, os.path.join(OUT, f"{name}.conll"))
        print(f"{name}: {len(part)} sentences")
    surfaces = make_entity_surfaces(30, seed=42, min_len=6, max_len=10)
    units = make_knowledge_units(surfaces, seed=43, per_surface=3)
    write_units_jsonl(units, os.path.join(OUT, "knowledge.jsonl"))
    print(f"knowledge: {len(units)} units")


if __name__ == "__main__":
    main()
