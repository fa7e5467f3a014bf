"""Acceptance suite: one test per criterion, at the stated tolerances.

Run `pytest tests/test_acceptance.py -v` for the per-criterion pass/fail
lines; each test also prints its measured numbers.
"""

import math
import random
import time

import numpy as np
import pytest

from noisyner.autodiff import Tensor
from noisyner.corpus import (LabelSet, LabeledSentence, build_vocab,
                             validate_bio, write_conll_file)
from noisyner.crf import CrfScores, crf_nll, log_partition, marginals, viterbi
from noisyner.dense import (ContrastiveConfig, EmbeddingStore, RECALL_AVG_KS,
                            embed_corpus, embed_sentence, infonce_loss,
                            ivf_build, ivf_search, knn_exact, pca_fit,
                            pca_reconstruct, pca_transform, recall_at_k,
                            train_contrastive)
from noisyner.encoder import EncoderConfig, concat_views, init_params
from noisyner.evaluation import entity_f1
from noisyner.align import levenshtein_align, project_labels
from noisyner.noise import (OCR_PRESET_TARGET_RATES, TypoChannel,
                            corrupt_dataset_ocr, induce_typos, ocr_preset,
                            token_error_rate)
from noisyner.selfret import TokenEmbeddingSet, bertscore, self_retrieve
from noisyner.sparse import IndexedUnit, bm25_search, build_index, terms_of
from noisyner.synth import (make_clustered_vectors, make_contrastive_pairs,
                            make_entity_corpus, make_social_text)
from noisyner.trainer import (TrainConfig, grad_check, joint_loss,
                              teacher_values)
from oracle_utils import (enum_crf, slow_bertscore, slow_bm25_score,
                          slow_levenshtein)

rng = np.random.default_rng(20250810)


def _report(name, detail):
    print(f"[acceptance] {name}: {detail}")


# ---------------------------------------------------------------------------
# 1. CRF oracle equivalence


def test_criterion_01_crf_matches_enumeration():
    start = time.time()
    gen = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        n = int(gen.integers(1, 7))
        K = int(gen.integers(1, 6))
        E = gen.normal(size=(n, K))
        T = gen.normal(size=(K + 2, K + 2))
        sc = CrfScores(E, T)
        logz_o, marg_o, vit_o, scores = enum_crf(E, T)
        gold = gen.integers(0, K, size=n)
        nll_o = -(scores[tuple(gold)] - logz_o)
        worst = max(worst,
                    abs(log_partition(sc).item() - logz_o),
                    np.abs(marginals(sc).data - marg_o).max(),
                    abs(crf_nll(sc, gold).item() - nll_o))
        assert viterbi(sc) == vit_o
    elapsed = time.time() - start
    _report("criterion 1", f"max |delta|={worst:.2e}, {elapsed:.1f}s")
    assert worst < 1e-8
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 2. Gradient correctness of the full joint loss


def test_criterion_02_joint_loss_gradients():
    start = time.time()
    ds = [LabeledSentence(("alpha", "beta", "gamma"), ("O", "O", "O"), id="0")]
    vocab = build_vocab(ds, min_freq=1)
    enc = EncoderConfig(d_model=8, n_layers=2, n_heads=2, d_ff=16,
                        max_len=32, vocab_size=vocab.size, seed=3)
    label_set = LabelSet(("PER", "LOC"))
    params = init_params(enc, label_set)
    batch = concat_views(["alpha", "zzq", "beta", "alpha"],
                         ["B-PER", "I-PER", "O", "B-LOC"],
                         "gamma beta gamma", vocab, budget=30,
                         sentence_id="g0")
    errors = {}
    for mode in ("none", "l2", "kl", "full"):
        config = TrainConfig(mv_mode=mode)
        teacher = teacher_values(batch, params, config)
        errors[mode] = grad_check(
            lambda: joint_loss(batch, params, config,
                               frozen_teacher=teacher)[0],
            params, eps=1e-5, samples_per_group=200, seed=11)
    elapsed = time.time() - start
    _report("criterion 2", f"max rel err per mode={ {m: f'{e:.1e}' for m, e in errors.items()} }, {elapsed:.1f}s")
    assert max(errors.values()) < 1e-4
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 3. Analytic CRF gradient identity


def test_criterion_03_nll_gradient_is_marginals_minus_onehot():
    gen = np.random.default_rng(33)
    worst = 0.0
    for _ in range(50):
        n, K = int(gen.integers(1, 7)), int(gen.integers(2, 6))
        E, T = gen.normal(size=(n, K)), gen.normal(size=(K + 2, K + 2))
        gold = gen.integers(0, K, size=n)
        Et = Tensor(E)
        crf_nll(CrfScores(Et, Tensor(T)), gold).backward()
        q = marginals(CrfScores(E, T)).data
        onehot = np.zeros((n, K))
        onehot[np.arange(n), gold] = 1.0
        worst = max(worst, np.abs(Et.grad - (q - onehot)).max())
    _report("criterion 3", f"max |delta|={worst:.2e}")
    assert worst < 1e-8


# ---------------------------------------------------------------------------
# 4. Noise channel calibration


def test_criterion_04_typo_channel_rates_and_token_counts():
    alphabet = tuple("abcdefghijklmnopqrstuvwxyz")
    word = "abcdefghij"
    n_letters = 1_000_000
    text = " ".join(word for _ in range(n_letters // len(word)))
    for p in (0.1, 0.2, 0.3):
        channel = TypoChannel(p=p, alphabet=alphabet, seed=int(p * 100))
        box = []
        induce_typos(text, channel, stats=box)
        s = box[0]
        q = p / 3.0
        checks = {
            "del": (s.deletions, s.letter_sites),
            "sub": (s.substitutions, s.letter_sites),
            "ins": (s.insertions, s.slot_sites),
        }
        for name, (count, sites) in checks.items():
            sigma = math.sqrt(sites * q * (1 - q))
            assert abs(count - sites * q) < 3 * sigma, (p, name)
        _report("criterion 4", f"p={p}: all per-op rates within 3 sigma "
                               f"of p/3 over {s.letter_sites} letter sites")
    gen = random.Random(4)
    channel = TypoChannel(p=0.3, alphabet=alphabet, seed=9)
    for i in range(10_000):
        k = gen.randrange(1, 12)
        sentence = " ".join(
            "".join(gen.choice(alphabet) for _ in range(gen.randrange(1, 9)))
            for _ in range(k))
        noisy = induce_typos(sentence, channel,
                             rng=random.Random(channel.seed ^ i))
        assert len(noisy.split()) == k
    _report("criterion 4", "token count preserved on 10^4 random sentences")


# ---------------------------------------------------------------------------
# 5. Token error rate oracle + OCR preset calibration


def test_criterion_05_ter_oracle_and_preset_rates():
    gen = random.Random(55)
    noisy, gold = [], []
    for _ in range(1000):
        gold.append("".join(gen.choice("abcde ") for _ in range(gen.randrange(1, 25))))
        noisy.append("".join(gen.choice("abcde ") for _ in range(gen.randrange(0, 25))))
    ours = token_error_rate(noisy, gold)
    oracle = sum(slow_levenshtein(n, g) for n, g in zip(noisy, gold)) \
        / sum(len(g) for g in gold)
    assert ours == pytest.approx(oracle, abs=1e-12)
    _report("criterion 5", f"TER matches DP oracle on 1000 pairs ({ours:.4f})")

    texts = make_social_text(700, seed=205)
    dataset = [LabeledSentence(tuple(t.split()), ("O",) * len(t.split()),
                               id=str(i)) for i, t in enumerate(texts)]
    for name, target in OCR_PRESET_TARGET_RATES.items():
        channel = ocr_preset(name, seed=3)
        noisy_tokens = corrupt_dataset_ocr(dataset, channel)
        rate = token_error_rate([" ".join(t) for t in noisy_tokens], texts)
        rel = abs(rate - target) / target
        _report("criterion 5", f"{name}: rate={rate:.4f} target={target} "
                               f"(rel dev {rel:.1%})")
        assert rel <= 0.20


# ---------------------------------------------------------------------------
# 6. Label projection totality and validity


def test_criterion_06_projection_counts_and_bio_validity():
    corpus = make_entity_corpus(1250, 40, seed=61)
    dataset = corpus * 8  # 10,000 sentences
    channel = ocr_preset("ocr3", seed=66)
    noisy_tokens = corrupt_dataset_ocr(dataset, channel)
    checked = 0
    for gold, tokens in zip(dataset, noisy_tokens):
        ali = levenshtein_align(gold.text, " ".join(tokens))
        labels = project_labels(gold, tokens, ali)
        assert len(labels) == len(tokens)
        validate_bio(labels)
        checked += 1
    _report("criterion 6", f"{checked} noised sentences: label count == "
                           "token count and BIO-valid")
    assert checked == 10_000


# ---------------------------------------------------------------------------
# 7. BM25 oracle and overlap property


def test_criterion_07_bm25_oracle_and_overlap():
    docs = ("the cat sat", "the dog", "cat cat cat")
    units = [IndexedUnit(sent_id=f"u{i}", sentence=s)
             for i, s in enumerate(docs)]
    index = build_index(units)
    docs_terms = [terms_of(s) for s in docs]
    worst = 0.0
    for query in ("cat", "the cat", "dog", "the cat dog sat"):
        hits = dict(bm25_search(index, query, k=3))
        for uid in range(3):
            expected = slow_bm25_score(docs_terms, terms_of(query), uid)
            if expected == 0.0:
                assert uid not in hits
            else:
                worst = max(worst, abs(hits[uid] - expected))
    _report("criterion 7", f"3-doc fixture max |delta|={worst:.2e}")
    assert worst < 1e-9

    gen = random.Random(77)
    vocab = "alpha beta gamma delta epsilon zeta".split()
    for _ in range(500):
        n_docs = gen.randrange(1, 9)
        sentences = [" ".join(gen.choice(vocab)
                              for _ in range(gen.randrange(1, 7)))
                     for _ in range(n_docs)]
        idx = build_index([IndexedUnit(sent_id=str(i), sentence=s)
                           for i, s in enumerate(sentences)])
        query = " ".join(gen.choice(vocab) for _ in range(gen.randrange(1, 5)))
        q_terms = set(terms_of(query))
        for uid, _ in bm25_search(idx, query, k=n_docs):
            assert q_terms & set(terms_of(sentences[uid]))
    _report("criterion 7", "no zero-overlap unit returned over 500 corpora")


# ---------------------------------------------------------------------------
# 8. InfoNCE values and gradient


def test_criterion_08_infonce_values_and_gradient():
    d = 6
    row = rng.normal(size=(1, d))
    noisy = np.tile(row / np.linalg.norm(row), (8, 1))
    other = rng.normal(size=(1, d))
    gold = np.tile(other / np.linalg.norm(other), (8, 1))
    uniform = infonce_loss(noisy, gold, tau=0.3).item()
    assert uniform == pytest.approx(math.log(8), abs=1e-9)
    single = infonce_loss(noisy[:1], gold[:1], tau=0.3).item()
    assert single == pytest.approx(0.0, abs=1e-12)

    n = 5
    a = rng.normal(size=(n, d))
    b = rng.normal(size=(n, d))
    at, bt = Tensor(a), Tensor(b)
    infonce_loss(at, bt, tau=0.3).backward()
    eps = 1e-5
    worst = 0.0
    for t, base, which in ((at, a, 0), (bt, b, 1)):
        for i in range(n):
            for j in range(d):
                up, dn = base.copy(), base.copy()
                up[i, j] += eps
                dn[i, j] -= eps
                fu = infonce_loss(up if which == 0 else a,
                                  up if which == 1 else b, tau=0.3).item()
                fd = infonce_loss(dn if which == 0 else a,
                                  dn if which == 1 else b, tau=0.3).item()
                num = (fu - fd) / (2 * eps)
                ana = t.grad[i, j]
                worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-6))
    _report("criterion 8", f"ln8 ok, N=1 ok, grad max rel err={worst:.1e}")
    assert worst < 1e-4


# ---------------------------------------------------------------------------
# 9. Dense retrieval: exact, IVF-exhaustive, IVF recall


def test_criterion_09_knn_and_ivf():
    mat = make_clustered_vectors(10_000, 12, 80, seed=91)
    ids = tuple(f"v{i:05d}" for i in range(10_000))
    store = EmbeddingStore(ids, mat)
    queries = make_clustered_vectors(1000, 12, 80, seed=92)
    sims_all = queries @ mat.T
    for qi in range(1000):
        ours = knn_exact(store, queries[qi], k=10)
        ranked = sorted(zip(sims_all[qi], ids), key=lambda t: (-t[0], t[1]))
        oracle = [(i, s) for s, i in ranked[:10]]
        assert [i for i, _ in ours] == [i for i, _ in oracle]
    _report("criterion 9", "exact KNN matches brute-force oracle on 1000x10k")

    index = ivf_build(store, c=64, seed=9, iterations=25)
    for qi in range(0, 1000, 50):
        exact = knn_exact(store, queries[qi], k=10)
        full_probe = ivf_search(index, store, queries[qi], k=10, nprobe=64)
        assert full_probe == exact
    _report("criterion 9", "ivf_search(nprobe=c) identical to exact search")

    hits10 = []
    for qi in range(300):
        exact = {i for i, _ in knn_exact(store, queries[qi], k=10)}
        approx = {i for i, _ in ivf_search(index, store, queries[qi],
                                           k=10, nprobe=8)}
        hits10.append(len(exact & approx) / 10.0)
    recall = sum(hits10) / len(hits10)
    _report("criterion 9", f"ivf recall@10 (c=64, nprobe=8) = {recall:.3f}")
    assert recall >= 0.9


# ---------------------------------------------------------------------------
# 10. Contrastive training end to end


def test_criterion_10_contrastive_training_recall():
    pairs = make_contrastive_pairs(250, seed=5, noise_p=0.2)
    train_pairs, held = pairs[:150], pairs[150:]
    vocab = build_vocab([], min_freq=10_000,
                        extra_texts=[g for _, g in train_pairs])
    enc = EncoderConfig(d_model=96, n_layers=1, n_heads=2, d_ff=192,
                        max_len=80, vocab_size=vocab.size, seed=1)
    config = ContrastiveConfig(tau=0.3, batch_size=15, epochs=20,
                               learning_rate=0.03, seed=0)
    params, history = train_contrastive(train_pairs, vocab, enc, config,
                                        dev_pairs=train_pairs[:40])
    losses = [h["loss"] for h in history if "loss" in h]
    assert losses[-1] < losses[0]
    ids = [str(i) for i in range(len(held))]
    store = embed_corpus(params, [g for _, g in held], ids, vocab)
    retrieved = []
    for noisy, _ in held:
        q = embed_sentence(params, noisy, vocab).data
        retrieved.append([h[0] for h in knn_exact(store, q, k=64)])
    table = recall_at_k(retrieved, ids, RECALL_AVG_KS)
    r_avg = sum(table.values()) / len(table)
    _report("criterion 10", f"held-out recall={ {k: round(v, 3) for k, v in table.items()} } "
                            f"recall_avg={r_avg:.3f}")
    assert table[1] >= 0.9
    vals = [table[k] for k in RECALL_AVG_KS]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# 11. BERTScore and self-retrieval


def test_criterion_11_bertscore_and_self_retrieve():
    gen = np.random.default_rng(111)
    m = gen.normal(size=(4, 8))
    m /= np.linalg.norm(m, axis=1, keepdims=True)
    sset = TokenEmbeddingSet("s", m)
    p, r, f1 = bertscore(sset, sset)
    assert abs(f1 - 1.0) < 1e-6 and abs(p - 1.0) < 1e-6 and abs(r - 1.0) < 1e-6
    cand = TokenEmbeddingSet("c", np.eye(8)[:3])
    ref = TokenEmbeddingSet("r", np.eye(8)[4:7])
    assert bertscore(cand, ref) == (0.0, 0.0, 0.0)
    worst = 0.0
    for _ in range(50):
        a = gen.normal(size=(int(gen.integers(1, 6)), 8))
        b = gen.normal(size=(int(gen.integers(1, 6)), 8))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        ours = bertscore(TokenEmbeddingSet("a", a), TokenEmbeddingSet("b", b))
        oracle = slow_bertscore(a, b)
        worst = max(worst, max(abs(x - y) for x, y in zip(ours, oracle)))
    assert worst < 1e-9

    store = []
    for i in range(20):
        m = gen.normal(size=(int(gen.integers(2, 7)), 8))
        m /= np.linalg.norm(m, axis=1, keepdims=True)
        store.append(TokenEmbeddingSet(f"s{i:02d}", m))
    qm = gen.normal(size=(4, 8))
    qm /= np.linalg.norm(qm, axis=1, keepdims=True)
    query = TokenEmbeddingSet("q", qm)
    ours = self_retrieve(query, store, k=20)
    oracle = sorted(((s.sentence_id, slow_bertscore(s.matrix, qm)[2])
                     for s in store), key=lambda t: (-t[1], t[0]))
    assert [i for i, _ in ours] == [i for i, _ in oracle]
    _report("criterion 11", f"random-pair max |delta|={worst:.1e}; "
                            "20-sentence ranking equals pairwise oracle")


# ---------------------------------------------------------------------------
# 12. PCA properties


def test_criterion_12_pca_orthonormality_and_reconstruction():
    data = rng.normal(size=(60, 9))
    model = pca_fit(data, k=5)
    gram_err = np.abs(model.components @ model.components.T - np.eye(5)).max()
    assert gram_err < 1e-6
    full = pca_fit(data, k=9)
    recon = pca_reconstruct(full, pca_transform(full, data))
    recon_err = np.abs(recon - data).max()
    _report("criterion 12", f"|CC^T - I|={gram_err:.1e}, "
                            f"k=dim reconstruction err={recon_err:.1e}")
    assert recon_err < 1e-6


# ---------------------------------------------------------------------------
# 13. Entity F1 fixture


def test_criterion_13_entity_f1_fixture():
    gold = [["B-PER", "I-PER", "O", "B-LOC"]]
    pred = [["B-PER", "I-PER", "O", "O"]]
    p, r, f1 = entity_f1(pred, gold)
    _report("criterion 13", f"P={p:.3f} R={r:.3f} F1={f1:.3f}")
    assert p == pytest.approx(1.000, abs=5e-4)
    assert r == pytest.approx(0.500, abs=5e-4)
    assert f1 == pytest.approx(0.667, abs=5e-4)


# ---------------------------------------------------------------------------
# 14. End-to-end trend


def test_criterion_14_two_view_trend():
    from noisyner.experiments import run_trend_experiment

    start = time.time()
    result = run_trend_experiment(seeds=(0, 1, 2, 3))
    elapsed = time.time() - start
    for run in result["runs"]:
        _report("criterion 14",
                f"seed {run['seed']}: ov={run['ov_f1']:.3f} "
                f"rv={run['rv_f1']:.3f} baseline={run['baseline_f1']:.3f}")
    _report("criterion 14",
            f"rv>=ov in {result['rv_ge_ov_seats']}/4 seeds; "
            f"mean mv-ov={result['mean_ov_f1']:.3f} vs "
            f"baseline={result['mean_baseline_f1']:.3f}; {elapsed:.0f}s")
    assert result["rv_ge_ov_seats"] >= 3
    assert result["mean_ov_f1"] >= result["mean_baseline_f1"]
    assert elapsed < 600.0


# ---------------------------------------------------------------------------
# 15. Stage determinism


def test_criterion_15_stage_determinism(tmp_path):
    from noisyner.cli import main

    corpus = make_entity_corpus(30, 10, seed=151)
    gold_path = tmp_path / "gold.conll"
    write_conll_file(corpus, gold_path)
    artifacts = {}
    for tag in ("a", "b"):
        base = tmp_path / tag
        base.mkdir()
        noisy = base / "noisy.conll"
        assert main(["noise", "--mode", "typos", "--p", "0.25", "--seed",
                     "4", "--in", str(gold_path), "--out", str(noisy)]) == 0
        ocr_txt = base / "ocr.txt"
        assert main(["noise", "--mode", "ocr", "--preset", "ocr2", "--seed",
                     "4", "--in", str(gold_path), "--out", str(ocr_txt)]) == 0
        aligned = base / "aligned.conll"
        assert main(["align", "--gold", str(gold_path), "--noisy",
                     str(ocr_txt), "--out", str(aligned)]) == 0
        ctx = base / "ctx.jsonl"
        assert main(["retrieve", "--backend", "gold", "--in", str(noisy),
                     "--gold", str(gold_path), "--out", str(ctx)]) == 0
        run_dir = base / "run"
        assert main(["train", "--train", str(noisy), "--dev", str(noisy),
                     "--contexts", str(ctx), "--dev-contexts", str(ctx),
                     "--mv-mode", "kl", "--encoder-lr", "1e-3",
                     "--crf-lr-ratio", "5", "--epochs", "2",
                     "--batch-size", "4", "--d-model", "8", "--d-ff", "16",
                     "--budget", "220", "--seed", "1",
                     "--out-dir", str(run_dir)]) == 0
        artifacts[tag] = [noisy, ocr_txt, aligned, ctx,
                          run_dir / "params.ck", run_dir / "metrics.jsonl",
                          run_dir / "vocab.txt"]
    for fa, fb in zip(artifacts["a"], artifacts["b"]):
        assert fa.read_bytes() == fb.read_bytes(), fa.name
    _report("criterion 15", "all stage artifacts byte-identical on rerun")
