import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyner.autodiff import Tensor
from noisyner.corpus import build_vocab, LabeledSentence
from noisyner.dense import (ContrastiveConfig, EmbeddingStore, RECALL_AVG_KS,
                            embed_sentence, infonce_loss,
                            ivf_build, ivf_search, knn_exact, load_store,
                            pca_fit, pca_reconstruct, pca_transform,
                            recall_at_k, recall_avg, save_store,
                            train_contrastive)
from noisyner.encoder import EncoderConfig, init_params
from noisyner.errors import ConfigError, DataError
from noisyner.synth import make_clustered_vectors, make_contrastive_pairs
from oracle_utils import slow_infonce, slow_knn

rng = np.random.default_rng(11)


def _unit_rows(n, d, gen=rng):
    m = gen.normal(size=(n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# embeddings


@pytest.fixture(scope="module")
def tiny_setup():
    ds = [LabeledSentence(("alpha", "beta", "gamma"), ("O", "O", "O"), id="0")]
    vocab = build_vocab(ds, min_freq=1)
    cfg = EncoderConfig(d_model=8, n_layers=2, n_heads=2, d_ff=16,
                        max_len=32, vocab_size=vocab.size, seed=5)
    return init_params(cfg), vocab


def test_embed_deterministic_and_unit_norm(tiny_setup):
    params, vocab = tiny_setup
    a = embed_sentence(params, "alpha beta", vocab).data
    b = embed_sentence(params, "alpha beta", vocab).data
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6


def test_embed_zero_layer_equals_embedding_average():
    ds = [LabeledSentence(("alpha", "beta"), ("O", "O"), id="0")]
    vocab = build_vocab(ds, min_freq=1)
    cfg = EncoderConfig(d_model=8, n_layers=0, n_heads=2, d_ff=16,
                        max_len=16, vocab_size=vocab.size, seed=0)
    params = init_params(cfg)
    v = embed_sentence(params, "alpha beta", vocab).data
    ids = [vocab.entries["alpha"], vocab.entries["beta"]]
    raw = params["enc.tok_emb"].data[ids] + params["enc.pos_emb"].data[:2]
    expect = raw.mean(axis=0)
    expect /= np.linalg.norm(expect)
    assert np.abs(v - expect).max() < 1e-12


def test_embed_empty_sentence_rejected(tiny_setup):
    params, vocab = tiny_setup
    with pytest.raises(DataError):
        embed_sentence(params, "   ", vocab)


# ---------------------------------------------------------------------------
# InfoNCE


def test_infonce_single_pair_is_zero():
    e = _unit_rows(1, 6)
    assert infonce_loss(e, e, tau=0.3).item() == pytest.approx(0.0, abs=1e-12)


def test_infonce_uniform_similarities_is_log_n():
    n, d = 8, 4
    noisy = np.tile(_unit_rows(1, d), (n, 1))
    gold = np.tile(_unit_rows(1, d, np.random.default_rng(3)), (n, 1))
    loss = infonce_loss(noisy, gold, tau=0.3).item()
    assert loss == pytest.approx(math.log(n), abs=1e-9)


def test_infonce_matches_double_loop_oracle():
    for _ in range(10):
        n = int(rng.integers(2, 9))
        noisy, gold = _unit_rows(n, 5), _unit_rows(n, 5)
        ours = infonce_loss(noisy, gold, tau=0.3).item()
        assert ours == pytest.approx(slow_infonce(noisy, gold, 0.3), abs=1e-9)


def test_infonce_rejects_bad_tau():
    e = _unit_rows(2, 4)
    with pytest.raises(ConfigError):
        infonce_loss(e, e, tau=0.0)


def test_infonce_gradient_matches_finite_differences():
    n, d = 4, 5
    noisy, gold = _unit_rows(n, d), _unit_rows(n, d)
    nt, gt = Tensor(noisy), Tensor(gold)
    infonce_loss(nt, gt, tau=0.3).backward()
    eps = 1e-6
    for t, base in ((nt, noisy), (gt, gold)):
        num = np.zeros_like(base)
        for i in range(n):
            for j in range(d):
                up, dn = base.copy(), base.copy()
                up[i, j] += eps
                dn[i, j] -= eps
                args_up = (up, gold) if t is nt else (noisy, up)
                args_dn = (dn, gold) if t is nt else (noisy, dn)
                num[i, j] = (infonce_loss(*args_up, tau=0.3).item()
                             - infonce_loss(*args_dn, tau=0.3).item()) / (2 * eps)
        denom = np.maximum(np.abs(t.grad) + np.abs(num), 1e-6)
        assert (np.abs(t.grad - num) / denom).max() < 1e-4


# ---------------------------------------------------------------------------
# PCA


def test_pca_identity_reconstruction_full_rank():
    data = rng.normal(size=(40, 6))
    model = pca_fit(data, k=6)
    recon = pca_reconstruct(model, pca_transform(model, data))
    assert np.abs(recon - data).max() < 1e-6


def test_pca_components_orthonormal():
    data = rng.normal(size=(50, 8))
    model = pca_fit(data, k=5)
    gram = model.components @ model.components.T
    assert np.abs(gram - np.eye(5)).max() < 1e-6


def test_pca_line_data_first_component_dominates():
    t = rng.normal(size=(200, 1))
    direction = np.array([[3.0, 4.0]]) / 5.0
    data = t @ direction + 1e-4 * rng.normal(size=(200, 2))
    model = pca_fit(data, k=2)
    ratio = model.explained_variance[0] / model.explained_variance.sum()
    assert ratio > 0.999


def test_pca_variance_non_increasing():
    data = rng.normal(size=(60, 7))
    model = pca_fit(data, k=7)
    assert all(a >= b - 1e-12 for a, b in
               zip(model.explained_variance, model.explained_variance[1:]))


def test_pca_rank_deficient_rejected():
    low = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 6))
    with pytest.raises(DataError):
        pca_fit(low, k=5)


def test_pca_needs_more_rows_than_k():
    with pytest.raises(DataError):
        pca_fit(rng.normal(size=(3, 5)), k=3)


def test_pca_transform_renormalize():
    data = rng.normal(size=(30, 5))
    model = pca_fit(data, k=3)
    out = pca_transform(model, data, renormalize=True)
    assert np.abs(np.linalg.norm(out, axis=1) - 1.0).max() < 1e-9


def test_pca_deterministic():
    data = rng.normal(size=(30, 5))
    a, b = pca_fit(data, k=4), pca_fit(data, k=4)
    assert np.array_equal(a.components, b.components)


# ---------------------------------------------------------------------------
# exact and IVF search


def _store(n=100, d=8, seed=0):
    m = _unit_rows(n, d, np.random.default_rng(seed))
    return EmbeddingStore(tuple(f"v{i:04d}" for i in range(n)), m)


def test_knn_self_query_first():
    store = _store()
    hits = knn_exact(store, store.matrix[17], k=3)
    assert hits[0][0] == "v0017"
    assert hits[0][1] == pytest.approx(1.0, abs=1e-6)


def test_knn_orthogonal_query_all_zero():
    m = np.eye(4)[:3]
    store = EmbeddingStore(("a", "b", "c"), m)
    hits = knn_exact(store, np.array([0.0, 0, 0, 1]), k=3)
    assert all(abs(s) < 1e-12 for _, s in hits)


def test_knn_matches_brute_force_oracle():
    store = _store(n=64, d=6, seed=4)
    queries = _unit_rows(20, 6, np.random.default_rng(9))
    for q in queries:
        ours = knn_exact(store, q, k=10)
        oracle = slow_knn(store.matrix, store.ids, q, 10)
        assert [i for i, _ in ours] == [i for i, _ in oracle]


def test_knn_k_clamps():
    store = _store(n=5)
    assert len(knn_exact(store, store.matrix[0], k=50)) == 5


def test_ivf_nprobe_full_equals_exact():
    store = _store(n=200, d=8, seed=2)
    index = ivf_build(store, c=16, seed=7)
    queries = _unit_rows(25, 8, np.random.default_rng(1))
    for q in queries:
        exact = knn_exact(store, q, k=10)
        approx = ivf_search(index, store, q, k=10, nprobe=16)
        assert approx == exact


def test_ivf_every_vector_findable_when_its_list_probed():
    store = _store(n=120, d=6, seed=3)
    index = ivf_build(store, c=8, seed=0)
    for row in range(0, 120, 7):
        hits = ivf_search(index, store, store.matrix[row], k=1, nprobe=8)
        assert hits[0][0] == store.ids[row]


def test_ivf_recall_on_clustered_vectors():
    mat = make_clustered_vectors(2000, 12, 40, seed=5)
    store = EmbeddingStore(tuple(f"x{i:05d}" for i in range(2000)), mat)
    index = ivf_build(store, c=32, seed=1)
    queries = make_clustered_vectors(30, 12, 40, seed=6)
    recalls = []
    for q in queries:
        exact = {i for i, _ in knn_exact(store, q, k=10)}
        approx = {i for i, _ in ivf_search(index, store, q, k=10, nprobe=8)}
        recalls.append(len(exact & approx) / 10)
    assert sum(recalls) / len(recalls) >= 0.9


def test_ivf_c_larger_than_count_rejected():
    with pytest.raises(DataError):
        ivf_build(_store(n=5), c=10)


def test_store_round_trip(tmp_path):
    store = _store(n=17, d=5)
    path = tmp_path / "v.embs"
    save_store(store, path)
    loaded, index = load_store(path)
    assert index is None
    assert loaded.ids == store.ids
    assert np.abs(loaded.matrix - store.matrix).max() < 1e-6


# ---------------------------------------------------------------------------
# recall


def test_recall_at_k_direct_count():
    retrieved = [["b", "c", "a"], ["g", "x"]]
    gold = ["a", "g"]
    table = recall_at_k(retrieved, gold, ks=(1, 4))
    assert table == {1: 0.5, 4: 1.0}


def test_recall_saturates():
    retrieved = [["a"], ["b"]]
    assert recall_at_k(retrieved, ["a", "b"], ks=(5,))[5] == 1.0


@given(st.integers(1, 30), st.integers(0, 1000))
@settings(max_examples=40)
def test_recall_non_decreasing_in_k(n_queries, seed):
    gen = np.random.default_rng(seed)
    ids = [str(i) for i in range(50)]
    retrieved = [[ids[j] for j in gen.permutation(50)[:20]]
                 for _ in range(n_queries)]
    gold = [ids[int(gen.integers(50))] for _ in range(n_queries)]
    table = recall_at_k(retrieved, gold, ks=(1, 2, 4, 8, 16))
    vals = [table[k] for k in (1, 2, 4, 8, 16)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_recall_avg_formula():
    retrieved = [["a", "b", "c"] + [f"z{i}" for i in range(70)]]
    table = recall_at_k(retrieved, ["c"], ks=RECALL_AVG_KS)
    assert recall_avg(retrieved, ["c"]) == pytest.approx(
        sum(table.values()) / 4)


# ---------------------------------------------------------------------------
# contrastive training (small smoke; the full check is in acceptance)


def test_contrastive_loss_decreases_on_toy_pairs():
    pairs = make_contrastive_pairs(50, seed=0, noise_p=0.15)
    vocab = build_vocab([], min_freq=1,
                        extra_texts=[t for p in pairs for t in p])
    enc = EncoderConfig(d_model=16, n_layers=1, n_heads=2, d_ff=32,
                        max_len=48, vocab_size=vocab.size, seed=1)
    cfg = ContrastiveConfig(tau=0.3, batch_size=16, epochs=4,
                            learning_rate=0.05, seed=0)
    params, history = train_contrastive(pairs, vocab, enc, cfg)
    losses = [h["loss"] for h in history if "loss" in h]
    assert losses[-1] < losses[0]


def test_contrastive_training_deterministic():
    pairs = make_contrastive_pairs(24, seed=3, noise_p=0.2)
    vocab = build_vocab([], min_freq=1,
                        extra_texts=[t for p in pairs for t in p])
    enc = EncoderConfig(d_model=8, n_layers=1, n_heads=2, d_ff=16,
                        max_len=48, vocab_size=vocab.size, seed=1)
    cfg = ContrastiveConfig(tau=0.3, batch_size=8, epochs=1,
                            learning_rate=0.03, seed=5)
    p1, _ = train_contrastive(pairs, vocab, enc, cfg)
    p2, _ = train_contrastive(pairs, vocab, enc, cfg)
    for name in p1.tensors:
        assert np.array_equal(p1[name].data, p2[name].data)
