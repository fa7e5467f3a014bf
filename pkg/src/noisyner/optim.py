"""Gradient descent with momentum and per-group learning rates."""

from __future__ import annotations

import numpy as np

from .encoder import ModelParams


class MomentumSgd:
    """The CRF group steps at encoder_lr * crf_lr_ratio; everything else
    at encoder_lr. Velocities persist across steps."""

    def __init__(self, params: ModelParams, encoder_lr: float,
                 crf_lr_ratio: float = 1.0, momentum: float = 0.9):
        if encoder_lr < 0 or crf_lr_ratio < 0:
            raise ValueError("learning rates must be non-negative")
        self.params = params
        self.encoder_lr = encoder_lr
        self.crf_lr_ratio = crf_lr_ratio
        self.momentum = momentum
        self._velocity = {k: np.zeros_like(t.data) for k, t in params.tensors.items()}

    def lr_for(self, name: str) -> float:
        if name.startswith("crf."):
            return self.encoder_lr * self.crf_lr_ratio
        return self.encoder_lr

    def step(self) -> None:
        for name, tensor in self.params.tensors.items():
            if tensor.grad is None:
                continue
            v = self._velocity[name]
            v *= self.momentum
            v += tensor.grad
            tensor.data = tensor.data - self.lr_for(name) * v

    def zero_grad(self) -> None:
        self.params.zero_grad()
