"""Transformer building blocks on top of the autodiff tensors.

Pre-LN blocks, plain scaled dot-product attention (optional causal and
additive padding masks), GELU feed-forward. No dropout anywhere; the
only stochastic regularizers in this project live elsewhere (input
substitution noise and conditional dropout).
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, embedding, gelu, layer_norm, softmax

NEG_INF = -1e30


class Module:
    """Minimal container: walks attributes to collect named parameters."""

    def named_parameters(self, prefix: str = ""):
        for key, val in self.__dict__.items():
            name = f"{prefix}{key}" if prefix else key
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix=name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValueError(f"state dict mismatch: missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def num_params(self) -> int:
        return sum(p.data.size for p in self.parameters())


def param(rng: np.random.Generator, *shape, scale: float = 0.02) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def zeros_param(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, zero_init: bool = False):
        if zero_init:
            self.w = zeros_param(d_in, d_out)
        else:
            # fan-in scaling; these nets are too small for a flat 0.02
            self.w = param(rng, d_in, d_out, scale=1.0 / np.sqrt(d_in))
        self.b = zeros_param(d_out)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim == 3:
            # one big GEMM instead of a batched loop
            b, s, d = x.shape
            return (x.reshape(b * s, d) @ self.w + self.b).reshape(b, s, -1)
        return x @ self.w + self.b


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = zeros_param(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class Embedding(Module):
    def __init__(self, rng, num: int, dim: int):
        self.weight = param(rng, num, dim)

    def __call__(self, ids: np.ndarray) -> Tensor:
        return embedding(self.weight, ids)


def causal_mask(n: int) -> np.ndarray:
    """(1, 1, n, n) additive mask hiding future positions."""
    m = np.zeros((n, n))
    m[np.triu_indices(n, k=1)] = NEG_INF
    return m[None, None]


def key_padding_mask(valid: np.ndarray) -> np.ndarray:
    """(B, 1, 1, S) additive mask from a boolean keep-matrix (B, S)."""
    return np.where(np.asarray(valid, dtype=bool), 0.0, NEG_INF)[:, None, None, :]


class MultiHeadAttention(Module):
    def __init__(self, rng, dim: int, heads: int):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.d_head = dim // heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)

    def _split(self, x: Tensor, b: int, s: int) -> Tensor:
        return x.reshape(b, s, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, kv: Tensor | None = None,
                 mask: np.ndarray | None = None) -> Tensor:
        b, sq = x.shape[0], x.shape[1]
        src = x if kv is None else kv
        sk = src.shape[1]
        q = self._split(self.wq(x), b, sq)
        k = self._split(self.wk(src), b, sk)
        v = self._split(self.wv(src), b, sk)
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(self.d_head))
        if mask is not None:
            scores = scores + Tensor(mask)
        att = softmax(scores, axis=-1)
        ctx = (att @ v).transpose(0, 2, 1, 3).reshape(b, sq, self.heads * self.d_head)
        return self.wo(ctx)


class FeedForward(Module):
    def __init__(self, rng, dim: int, ratio: int = 4):
        self.fc1 = Linear(rng, dim, ratio * dim)
        self.fc2 = Linear(rng, ratio * dim, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class TransformerBlock(Module):
    """Pre-LN self-attention block used by the embedder, the condition
    encoder and the small scoring LM."""

    def __init__(self, rng, dim: int, heads: int):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.ln2 = LayerNorm(dim)
        self.mlp = FeedForward(rng, dim)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.ln1(x), mask=mask)
        return x + self.mlp(self.ln2(x))
