#!/usr/bin/env python3
"""Re-derive the OCR preset parameters by iterative rescaling.

Measures each preset's corpus-level token error rate on synthetic
social-media-like text and rescales all four event probabilities toward
the target rate (TER is close to linear in them at these levels). The
resulting numbers are frozen into noisyner.noise.OCR_PRESET_PARAMS.
"""

import random

from noisyner.noise import (OCR_PRESET_PARAMS, OCR_PRESET_TARGET_RATES,
                            OcrChannel, default_confusion_table, induce_ocr,
                            token_error_rate)
from noisyner.synth import make_social_text


def measure(params, corpus, table, seed=0):
    channel = OcrChannel(confusion_table=table, seed=seed, **params)
    noisy = []
    for i, text in enumerate(corpus):
        toks = induce_ocr(text.split(), channel, rng=random.Random(seed ^ i))
        noisy.append(" ".join(toks))
    return token_error_rate(noisy, corpus)


def main():
    calib = make_social_text(800, seed=101)
    holdout = make_social_text(600, seed=777)
    table = default_confusion_table()
    for name, start in OCR_PRESET_PARAMS.items():
        target = OCR_PRESET_TARGET_RATES[name]
        params = dict(start)
        for _ in range(4):
            ter = measure(params, calib, table)
            scale = target / ter
            params = {k: min(0.95, v * scale) for k, v in params.items()}
        final = measure(params, calib, table)
        check = measure(params, holdout, table, seed=9)
        print(f"{name}: target={target:.3f} calib={final:.4f} "
              f"holdout={check:.4f}")
        print("    " + ", ".join(f"{k}={v:.5f}" for k, v in params.items()))


if __name__ == "__main__":
    main()
