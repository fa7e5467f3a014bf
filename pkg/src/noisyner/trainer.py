"""Joint two-view training with representation (L2) or distribution (KL)
consistency, plus the finite-difference gradient checking harness.

The total objective sums the noisy-view NLL, the retrieval-view NLL, and
one consistency term. The retrieval view already sees strictly more
information, so the consistency term treats it as a fixed teacher: its
branch is detached and only the noisy view is pulled toward it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .crf import CrfScores, crf_nll, marginals, marginals_values, viterbi
from .encoder import ModelParams, ViewBatch, emissions_for, encode, first_pool
from .errors import ConfigError, DataError
from .evaluation import entity_f1
from .optim import MomentumSgd

MV_MODES = ("none", "l2", "kl", "full")


@dataclass(frozen=True)
class TrainConfig:
    """Settings for one training run.

    mv_mode "none" trains the noisy view alone (the no-context baseline),
    "full" trains the retrieval view alone, and "l2"/"kl" train both
    views plus the consistency term. The CRF group steps at
    encoder_lr * crf_lr_ratio.
    """

    mv_mode: str = "kl"
    encoder_lr: float = 1e-5
    crf_lr_ratio: float = 3000.0
    epochs: int = 5
    batch_size: int = 8
    seeds: tuple[int, ...] = (0, 1, 2, 3)
    backend: str = "gold"
    context_mode: str = "sent"
    top_m: int = 10
    mv_weight: float = 1.0
    stop_grad_rv: bool = True
    momentum: float = 0.9
    log_floor: float = 1e-12

    def __post_init__(self):
        if self.mv_mode not in MV_MODES:
            raise ConfigError(f"mv_mode must be one of {MV_MODES}")
        if self.encoder_lr <= 0 or self.crf_lr_ratio <= 0:
            raise ConfigError("learning rates must be positive")
        if self.top_m < 1:
            raise ConfigError("top_m must be >= 1")

    @property
    def deployed_view(self) -> str:
        return "rv" if self.mv_mode == "full" else "ov"


# ---------------------------------------------------------------------------
# Consistency terms


def consistency_l2(ov_reps: Tensor, rv_reps: Tensor,
                   stop_grad_rv: bool = True) -> Tensor:
    """Sum of squared distances between the two views' word reps."""
    if ov_reps.data.shape != rv_reps.data.shape:
        raise DataError("view representation shapes differ")
    if stop_grad_rv:
        rv_reps = rv_reps.detach()
    diff = rv_reps - ov_reps
    return (diff * diff).sum()


def consistency_kl(rv_marginals: Tensor, ov_marginals: Tensor,
                   stop_grad_rv: bool = True, floor: float = 1e-12) -> Tensor:
    """Position-wise cross-entropy CE(q_rv, q_ov).

    Dropping the (constant) teacher entropy makes this equal to the KL
    term up to a constant; `floor` guards log(0) where hard constraints
    zero out a label.
    """
    if rv_marginals.data.shape != ov_marginals.data.shape:
        raise DataError("marginal table shapes differ")
    q_teacher = rv_marginals.detach() if stop_grad_rv else rv_marginals
    return -(q_teacher * ov_marginals.clip_min(floor).log()).sum()


def kl_report_value(rv_marginals: np.ndarray, ov_marginals: np.ndarray,
                    floor: float = 1e-12) -> float:
    """CE minus teacher entropy: the actual position-wise KL, for logs."""
    q = np.asarray(rv_marginals)
    ce = -(q * np.log(np.maximum(ov_marginals, floor))).sum()
    ent = -(q * np.log(np.maximum(q, floor))).sum()
    return float(ce - ent)


# ---------------------------------------------------------------------------
# Joint objective


def teacher_values(batch: ViewBatch, params: ModelParams,
                   config: TrainConfig) -> np.ndarray | None:
    """The consistency term's teacher side, as plain values.

    Feeding these back through `joint_loss(..., frozen_teacher=...)`
    reproduces the stop-gradient objective as an ordinary function of
    the parameters, which is what finite differences can check.
    """
    if config.mv_mode not in ("l2", "kl"):
        return None
    pooled_rv = first_pool(encode(params, batch, "rv"), batch)
    if config.mv_mode == "l2":
        return pooled_rv.data.copy()
    e_rv = emissions_for(params, pooled_rv)
    return marginals(CrfScores(e_rv, params.masked_transitions())).data.copy()


def joint_loss(batch: ViewBatch, params: ModelParams, config: TrainConfig,
               frozen_teacher: np.ndarray | None = None):
    """Eq.-style sum L_text + L_retrieval + L_MV for one instance.

    Returns (total loss tensor, float components). Modes "none"/"full"
    reduce to the corresponding single-view NLL. `frozen_teacher`
    replaces the consistency term's detached teacher branch with fixed
    values (only meaningful when stop_grad_rv is on).
    """
    label_set = params.label_set
    all_labels = label_set.labels
    y = [all_labels.index(lab) for lab in batch.labels]
    T = params.masked_transitions()
    parts: dict[str, float] = {}
    total: Tensor | None = None
    pooled_ov = e_ov = pooled_rv = e_rv = None

    if config.mv_mode != "full":
        pooled_ov = first_pool(encode(params, batch, "ov"), batch)
        e_ov = emissions_for(params, pooled_ov)
        l_text = crf_nll(CrfScores(e_ov, T), y)
        parts["L_text"] = float(l_text.data)
        total = l_text
    if config.mv_mode != "none":
        pooled_rv = first_pool(encode(params, batch, "rv"), batch)
        e_rv = emissions_for(params, pooled_rv)
        l_ret = crf_nll(CrfScores(e_rv, T), y)
        parts["L_retrieval"] = float(l_ret.data)
        total = l_ret if total is None else total + l_ret

    if config.mv_mode == "l2":
        teacher = Tensor(frozen_teacher) if frozen_teacher is not None else pooled_rv
        l_mv = consistency_l2(pooled_ov, teacher, config.stop_grad_rv)
    elif config.mv_mode == "kl":
        q_ov = marginals(CrfScores(e_ov, T))
        if frozen_teacher is not None:
            q_rv = Tensor(frozen_teacher)
        elif config.stop_grad_rv:
            # teacher is a constant anyway; skip the taped recursion
            q_rv = Tensor(marginals_values(e_rv.data, T.data))
        else:
            q_rv = marginals(CrfScores(e_rv, T))
        l_mv = consistency_kl(q_rv, q_ov, config.stop_grad_rv, config.log_floor)
        parts["KL"] = kl_report_value(q_rv.data, q_ov.data, config.log_floor)
    else:
        l_mv = None
    if l_mv is not None:
        parts["L_MV"] = float(l_mv.data)
        total = total + config.mv_weight * l_mv
    parts["total"] = float(total.data)
    return total, parts


def _param_norm_diagnostics(params: ModelParams) -> str:
    norms = []
    for group in ("enc", "crf"):
        vals = [np.linalg.norm(t.data) for t in params.group(group).values()]
        norms.append(f"{group}: |w|={sum(vals):.3g}")
    return "; ".join(norms)


def joint_step(batch: ViewBatch, params: ModelParams, config: TrainConfig,
               opt: MomentumSgd) -> dict[str, float]:
    """One loss evaluation and one optimizer step on a single instance."""
    total, parts = joint_loss(batch, params, config)
    if not np.isfinite(total.data):
        raise RuntimeError(
            f"non-finite loss {total.data} ({_param_norm_diagnostics(params)})"
        )
    opt.zero_grad()
    total.backward()
    opt.step()
    opt.zero_grad()
    return parts


# ---------------------------------------------------------------------------
# Decoding and the training loop


def decode_labels(params: ModelParams, batch: ViewBatch, view: str) -> list[str]:
    pooled = first_pool(encode(params, batch, view), batch)
    e = emissions_for(params, pooled)
    path = viterbi(CrfScores(e, params.masked_transitions()))
    labels = params.label_set.labels
    return [labels[i] for i in path]


def evaluate_view(params: ModelParams, batches, view: str) -> float:
    preds = [decode_labels(params, b, view) for b in batches]
    golds = [list(b.labels) for b in batches]
    return entity_f1(preds, golds)[2]


def train(train_batches, dev_batches, params: ModelParams,
          config: TrainConfig, seed: int = 0):
    """Epoch loop with dev-F1 model selection on the deployed view.

    Gradients are summed over each shuffled minibatch in fixed sentence
    order before the step. Returns (params, history); `params` holds the
    best-epoch values.
    """
    if not train_batches:
        raise DataError("empty training set")
    opt = MomentumSgd(params, config.encoder_lr, config.crf_lr_ratio,
                      config.momentum)
    rng = np.random.default_rng(seed)
    history: list[dict] = []
    best_f1, best_values = -1.0, params.copy_values()
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_batches))
        sums: dict[str, float] = {}
        count = 0
        for lo in range(0, len(order), config.batch_size):
            group = [train_batches[i] for i in order[lo: lo + config.batch_size]]
            total = None
            for b in group:
                t, parts = joint_loss(b, params, config)
                total = t if total is None else total + t
                for key, val in parts.items():
                    sums[key] = sums.get(key, 0.0) + val
                count += 1
            total = total * (1.0 / len(group))
            if not np.isfinite(total.data):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} "
                    f"({_param_norm_diagnostics(params)})"
                )
            opt.zero_grad()
            total.backward()
            opt.step()
            opt.zero_grad()
        record = {"epoch": epoch}
        for key in ("L_text", "L_retrieval", "L_MV"):
            record[key] = sums.get(key, 0.0) / max(count, 1)
        record["dev_f1_ov"] = evaluate_view(params, dev_batches, "ov") \
            if config.mv_mode != "full" else 0.0
        record["dev_f1_rv"] = evaluate_view(params, dev_batches, "rv") \
            if config.mv_mode != "none" else 0.0
        history.append(record)
        current = record[f"dev_f1_{config.deployed_view}"]
        if current > best_f1:
            best_f1, best_values = current, params.copy_values()
    params.load_values(best_values)
    return params, history


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(loss_thunk, params: ModelParams, eps: float = 1e-5,
               samples_per_group: int = 200, seed: int = 0) -> float:
    """Max relative error between tape gradients and central differences.

    Coordinates are sampled from every parameter group (all of them when
    a group is small). `loss_thunk` must recompute the loss from the
    current parameter values on each call. The comparison floor scales
    with the loss magnitude: cancellation in (f+ - f-) makes gradients
    below ~1e-6 * |f| unverifiable by finite differences, so they are
    compared at that floor rather than amplified.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    params.zero_grad()
    loss = loss_thunk()
    loss.backward()
    floor = 1e-6 * max(1.0, abs(float(loss.data)))
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.tensors.items()
    }
    params.zero_grad()
    rng = np.random.default_rng(seed)
    max_err = 0.0
    for group in ("enc", "crf"):
        tensors = params.group(group)
        if not tensors:
            continue
        names = sorted(tensors)
        sizes = np.array([tensors[n].data.size for n in names])
        bounds = np.cumsum(sizes)
        total = int(bounds[-1])
        picks = rng.choice(total, size=min(samples_per_group, total), replace=False)
        for flat in np.sort(picks):
            slot = int(np.searchsorted(bounds, flat, side="right"))
            offset = int(flat - (bounds[slot - 1] if slot else 0))
            data = tensors[names[slot]].data
            orig = data.flat[offset]
            data.flat[offset] = orig + eps
            f_plus = float(loss_thunk().data)
            data.flat[offset] = orig - eps
            f_minus = float(loss_thunk().data)
            data.flat[offset] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[names[slot]].flat[offset]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            max_err = max(max_err, err)
    return max_err
