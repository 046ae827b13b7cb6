"""Adam with bias correction, plus global gradient-norm clipping.

Hyperparameter defaults: lr 3e-4, beta1 0.9, beta2 0.999, eps 1e-8,
clip at global norm 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def clone(self) -> "AdamState":
        return AdamState(
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            step=self.step,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update. Pure: returns fresh params/state.

    A non-finite gradient aborts before touching anything, naming the
    offending parameter.
    """
    if state.lr <= 0:
        raise ValueError(f"adam_step: lr must be positive, got {state.lr}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(
                f"adam_step: grad shape {g.shape} != param shape "
                f"{params[name].shape} for {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"adam_step: non-finite gradient for {name!r}")
    out = state.clone()
    out.step = state.step + 1
    bc1 = 1.0 - state.beta1 ** out.step
    bc2 = 1.0 - state.beta2 ** out.step
    new_params = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = p.copy()
            continue
        m = out.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        else:
            v = out.v[name]
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        out.m[name] = m
        out.v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, out


def clip_grad_norm(named_params: list[tuple[str, Tensor]], max_norm: float = 1.0) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    sq = 0.0
    for _, p in named_params:
        if p.grad is not None:
            sq += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(sq))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for _, p in named_params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """Stateful wrapper driving adam_step over a module's parameters."""

    def __init__(self, named_params: list[tuple[str, Tensor]], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.named_params = list(named_params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float):
        self.state.lr = value

    def step(self):
        params = {n: p.data for n, p in self.named_params}
        grads = {n: p.grad for n, p in self.named_params if p.grad is not None}
        new_params, self.state = adam_step(params, grads, self.state)
        for n, p in self.named_params:
            p.data = new_params[n]

    def zero_grad(self):
        for _, p in self.named_params:
            p.zero_grad()
