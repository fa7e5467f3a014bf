"""Linear-chain CRF over BIO labels.

Potentials are emission + transition log-scores with BOS/EOS handled as
two augmented states. Illegal BIO transitions are hard -inf entries, so
decoded sequences can never violate the scheme. All dynamic programs run
in log space; partition function, likelihood, and marginals are built
from tape operations and therefore differentiable end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, stack_rows
from .corpus import LabelSet
from .errors import DataError

NEG_INF = -np.inf


def bio_transition_mask(label_set: LabelSet) -> np.ndarray:
    """(K+2)x(K+2) additive mask; -inf marks forbidden transitions.

    Index K is BOS, K+1 is EOS. I-T may only follow B-T or I-T.
    """
    labels = label_set.labels
    K = label_set.K
    bos, eos = K, K + 1
    mask = np.zeros((K + 2, K + 2))
    for j, lab in enumerate(labels):
        if not lab.startswith("I-"):
            continue
        tag = lab[2:]
        for i, prev in enumerate(labels):
            if prev == "O" or prev[2:] != tag:
                mask[i, j] = NEG_INF
        mask[bos, j] = NEG_INF
    mask[:, bos] = NEG_INF
    mask[eos, :] = NEG_INF
    mask[bos, eos] = NEG_INF
    return mask


@dataclass
class CrfScores:
    """Per-position emission log-potentials plus the transition table.

    `transitions` is (K+2)x(K+2) and already includes any BIO mask; rows
    and columns K/K+1 are the BOS/EOS boundary states.
    """

    emissions: Tensor
    transitions: Tensor

    def __post_init__(self):
        self.emissions = as_tensor(self.emissions)
        self.transitions = as_tensor(self.transitions)
        n, K = self.emissions.data.shape
        if self.transitions.data.shape != (K + 2, K + 2):
            raise DataError("transition table does not match the label count")
        if n < 1:
            raise DataError("empty emission sequence")

    @property
    def n(self) -> int:
        return self.emissions.data.shape[0]

    @property
    def K(self) -> int:
        return self.emissions.data.shape[1]


def _logsumexp_rows(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = m_safe + np.log(np.exp(x - m_safe).sum(axis=axis, keepdims=True))
    return np.squeeze(np.where(np.isfinite(m), out, -np.inf), axis=axis)


def forward_backward_arrays(E: np.ndarray, T: np.ndarray):
    """Plain-numpy forward/backward tables: (alphas, betas, logz)."""
    n, K = E.shape
    alphas = np.empty((n, K))
    alphas[0] = T[K, :K] + E[0]
    for i in range(1, n):
        alphas[i] = _logsumexp_rows(alphas[i - 1][:, None] + T[:K, :K], 0) + E[i]
    betas = np.empty((n, K))
    betas[n - 1] = T[:K, K + 1]
    for i in range(n - 2, -1, -1):
        betas[i] = _logsumexp_rows(T[:K, :K] + (E[i + 1] + betas[i + 1])[None, :], 1)
    logz = _logsumexp_rows(alphas[n - 1] + T[:K, K + 1], 0)
    return alphas, betas, float(logz)


def marginals_values(E: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Posterior q(y_i) as plain arrays (no gradient tracking)."""
    alphas, betas, logz = forward_backward_arrays(E, T)
    if not np.isfinite(logz):
        raise DataError("no label sequence has finite score")
    return np.exp(alphas + betas - logz)


def _log_partition_op(emissions: Tensor, transitions: Tensor) -> Tensor:
    """Fused partition function.

    The gradient of log Z w.r.t. the emissions is the table of node
    marginals and w.r.t. the transitions the expected transition counts,
    so one forward-backward pass serves both directions without taping
    the recursions.
    """
    E, T = emissions.data, transitions.data
    n, K = E.shape
    alphas, betas, logz = forward_backward_arrays(E, T)
    out = Tensor(logz, (emissions, transitions))

    def bw(g):
        g = float(g)
        q = np.exp(alphas + betas - logz)
        emissions._accumulate(g * q)
        xi = np.zeros_like(T)
        with np.errstate(invalid="ignore"):
            for i in range(1, n):
                pair = (alphas[i - 1][:, None] + T[:K, :K]
                        + (E[i] + betas[i])[None, :] - logz)
                xi[:K, :K] += np.exp(np.where(np.isneginf(pair), -np.inf, pair))
        xi[K, :K] = q[0]
        xi[:K, K + 1] = q[n - 1]
        transitions._accumulate(g * xi)

    out._backward = bw
    return out


def _forward_alphas(scores: CrfScores) -> list[Tensor]:
    """alpha_i(y): log-score of all prefixes ending at i with label y."""
    E, T = scores.emissions, scores.transitions
    K = scores.K
    alpha = T[K, :K] + E[0]
    alphas = [alpha]
    for i in range(1, scores.n):
        trellis = alpha.reshape(K, 1) + T[:K, :K]
        alpha = trellis.logsumexp(axis=0) + E[i]
        alphas.append(alpha)
    return alphas


def _backward_betas(scores: CrfScores) -> list[Tensor]:
    """beta_i(y): log-score of all suffixes after i given label y at i."""
    E, T = scores.emissions, scores.transitions
    K = scores.K
    beta = T[:K, K + 1]
    betas = [beta]
    for i in range(scores.n - 2, -1, -1):
        trellis = T[:K, :K] + (E[i + 1] + beta).reshape(1, K)
        beta = trellis.logsumexp(axis=1)
        betas.append(beta)
    betas.reverse()
    return betas


def log_partition(scores: CrfScores) -> Tensor:
    """log sum over all label sequences (fused forward recursion)."""
    out = _log_partition_op(scores.emissions, scores.transitions)
    if not np.isfinite(out.data):
        raise DataError("no label sequence has finite score")
    return out


def gold_path_score(scores: CrfScores, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape[0] != scores.n:
        raise DataError("gold label length does not match emissions")
    E, T = scores.emissions, scores.transitions
    K = scores.K
    emit = E[np.arange(scores.n), labels].sum()
    prev = np.concatenate(([K], labels[:-1]))
    nxt = np.concatenate((labels, [K + 1]))
    frm = np.concatenate((prev, [labels[-1]]))
    trans = T[frm, nxt].sum()
    return emit + trans


def crf_nll(scores: CrfScores, labels) -> Tensor:
    """Negative log-likelihood of the gold path; >= 0 up to float slack."""
    if not np.isfinite(scores.emissions.data).all():
        raise RuntimeError("non-finite emission scores (diverged training?)")
    path = gold_path_score(scores, labels)
    if not np.isfinite(path.data):
        raise DataError("gold path crosses a forbidden transition")
    return log_partition(scores) - path


def marginals(scores: CrfScores) -> Tensor:
    """Per-position posterior q(y_i), rows summing to 1."""
    alphas = _forward_alphas(scores)
    betas = _backward_betas(scores)
    K = scores.K
    logz = (alphas[-1] + scores.transitions[:K, K + 1]).logsumexp(axis=0)
    if not np.isfinite(logz.data):
        raise DataError("no label sequence has finite score")
    rows = [(a + b - logz) for a, b in zip(alphas, betas)]
    return stack_rows(rows).exp()


def viterbi(scores: CrfScores) -> list[int]:
    """Best label sequence; ties resolved to the lexicographically
    smallest index sequence by scanning suffix-optimal scores from the
    front."""
    E = scores.emissions.data
    T = scores.transitions.data
    n, K = E.shape
    # gamma[i, y]: best completion score from position i labelled y
    gamma = np.empty((n, K))
    gamma[n - 1] = T[:K, K + 1]
    for i in range(n - 2, -1, -1):
        gamma[i] = np.max(T[:K, :K] + (E[i + 1] + gamma[i + 1])[None, :], axis=1)
    first = T[K, :K] + E[0] + gamma[0]
    best = np.max(first)
    if not np.isfinite(best):
        raise DataError("no label sequence has finite score")
    path = [int(np.argmax(first))]
    for i in range(1, n):
        step = T[path[-1], :K] + E[i] + gamma[i]
        path.append(int(np.argmax(step)))
    return path
