import math

import numpy as np
import pytest

from noisyner.autodiff import Tensor
from noisyner.corpus import LabelSet
from noisyner.crf import (CrfScores, bio_transition_mask, crf_nll,
                          log_partition, marginals, viterbi)
from noisyner.errors import DataError
from oracle_utils import enum_crf

rng = np.random.default_rng(20240817)


def _random_instance(n=None, K=None):
    n = n or int(rng.integers(1, 7))
    K = K or int(rng.integers(1, 6))
    E = rng.normal(size=(n, K))
    T = rng.normal(size=(K + 2, K + 2))
    return E, T


def test_uniform_two_by_two_partition():
    sc = CrfScores(np.zeros((2, 2)), np.zeros((4, 4)))
    assert log_partition(sc).item() == pytest.approx(math.log(4), abs=1e-12)


def test_single_position_partition():
    K = 5
    sc = CrfScores(np.zeros((1, K)), np.zeros((K + 2, K + 2)))
    assert log_partition(sc).item() == pytest.approx(math.log(K), abs=1e-12)


def test_nll_uniform_single_position():
    K = 4
    sc = CrfScores(np.zeros((1, K)), np.zeros((K + 2, K + 2)))
    assert crf_nll(sc, [2]).item() == pytest.approx(math.log(K), abs=1e-12)


def test_single_feasible_path_has_zero_nll_and_onehot_marginals():
    K = 3
    T = np.full((K + 2, K + 2), -np.inf)
    path = [1, 0, 2]
    T[K, 1] = T[1, 0] = T[0, 2] = T[2, K + 1] = 0.0
    sc = CrfScores(np.zeros((3, K)), T)
    assert crf_nll(sc, path).item() == pytest.approx(0.0, abs=1e-9)
    q = marginals(sc).data
    expect = np.zeros((3, K))
    expect[np.arange(3), path] = 1.0
    assert np.abs(q - expect).max() < 1e-9
    assert viterbi(sc) == path


def test_uniform_marginals():
    sc = CrfScores(np.zeros((1, 3)), np.zeros((5, 5)))
    assert np.abs(marginals(sc).data - 1 / 3).max() < 1e-12


def test_matches_enumeration_oracle():
    for _ in range(60):
        E, T = _random_instance()
        n, K = E.shape
        sc = CrfScores(E, T)
        logz_o, marg_o, vit_o, scores = enum_crf(E, T)
        assert log_partition(sc).item() == pytest.approx(logz_o, abs=1e-8)
        assert np.abs(marginals(sc).data - marg_o).max() < 1e-8
        gold = rng.integers(0, K, size=n)
        nll_o = -(scores[tuple(gold)] - logz_o)
        assert crf_nll(sc, gold).item() == pytest.approx(nll_o, abs=1e-8)
        assert viterbi(sc) == vit_o


def test_total_probability_sums_to_one():
    E, T = _random_instance(n=4, K=3)
    sc_template = (E, T)
    logz_o, _, _, scores = enum_crf(E, T)
    total = sum(math.exp(-crf_nll(CrfScores(E, T), list(seq)).item())
                for seq in scores)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_marginal_rows_sum_to_one():
    for _ in range(20):
        E, T = _random_instance()
        q = marginals(CrfScores(E, T)).data
        assert np.abs(q.sum(axis=1) - 1.0).max() < 1e-9
        assert q.min() >= 0.0


def test_nll_emission_gradient_identity():
    for _ in range(10):
        E, T = _random_instance(n=5, K=4)
        gold = rng.integers(0, 4, size=5)
        Et = Tensor(E)
        nll = crf_nll(CrfScores(Et, Tensor(T)), gold)
        nll.backward()
        q = marginals(CrfScores(E, T)).data
        onehot = np.zeros_like(q)
        onehot[np.arange(5), gold] = 1.0
        assert np.abs(Et.grad - (q - onehot)).max() < 1e-8


def test_partition_shift_identity():
    E, T = _random_instance(n=4, K=3)
    base = log_partition(CrfScores(E, T)).item()
    shifted = E.copy()
    shifted[2] += 1.7
    assert log_partition(CrfScores(shifted, T)).item() == \
        pytest.approx(base + 1.7, abs=1e-9)


def test_gold_through_forbidden_transition_rejected():
    K = 2
    T = np.zeros((K + 2, K + 2))
    T[0, 1] = -np.inf
    with pytest.raises(DataError):
        crf_nll(CrfScores(np.zeros((2, K)), T), [0, 1])


def test_no_finite_path_rejected():
    T = np.full((4, 4), -np.inf)
    with pytest.raises(DataError):
        log_partition(CrfScores(np.zeros((2, 2)), T))


def test_bio_mask_blocks_illegal_transitions():
    ls = LabelSet(("LOC", "PER"))
    mask = bio_transition_mask(ls)
    labels = ls.labels
    o = labels.index("O")
    b_loc, i_loc = labels.index("B-LOC"), labels.index("I-LOC")
    b_per, i_per = labels.index("B-PER"), labels.index("I-PER")
    bos = ls.K
    assert mask[o, i_loc] == -np.inf
    assert mask[b_per, i_loc] == -np.inf
    assert mask[bos, i_per] == -np.inf
    assert mask[b_loc, i_loc] == 0.0
    assert mask[i_loc, i_loc] == 0.0
    assert mask[o, b_loc] == 0.0


def test_viterbi_always_bio_valid_under_mask():
    ls = LabelSet(("LOC", "PER"))
    mask = bio_transition_mask(ls)
    labels = ls.labels
    for _ in range(300):
        n = int(rng.integers(1, 8))
        E = rng.normal(scale=3.0, size=(n, ls.K))
        T = rng.normal(size=(ls.K + 2, ls.K + 2)) + mask
        path = viterbi(CrfScores(E, T))
        seq = [labels[i] for i in path]
        prev = "O"
        for lab in seq:
            if lab.startswith("I-"):
                assert prev != "O" and prev[2:] == lab[2:]
            prev = lab


def test_viterbi_tie_break_prefers_smallest_sequence():
    # all-zero potentials: every sequence ties; expect all label index 0
    sc = CrfScores(np.zeros((3, 3)), np.zeros((5, 5)))
    assert viterbi(sc) == [0, 0, 0]
