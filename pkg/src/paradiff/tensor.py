"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: just the operations the transformer stacks in this
package need, each with a hand-written backward rule that is validated
against central differences (see grad_check). Forward math is plain
numpy, so results are bitwise reproducible for identical inputs on a
single thread.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(np.float64, copy=False)
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph holding a float64 ndarray.

    Leaf tensors created with requires_grad=True are parameters; every
    op result records its parents and a closure that routes the output
    gradient to them. Gradients accumulate additively across fan-out.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple = ()
        self._backward = None

    # -- construction ------------------------------------------------------

    @staticmethod
    def _op(data: np.ndarray, parents, backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- basic info --------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data + other.data

        def backward(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape))

        return Tensor._op(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data - other.data

        def backward(g):
            return (_unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape))

        return Tensor._op(data, (self, other), backward)

    def __rsub__(self, other):
        return Tensor(other) - self

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data * other.data

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            )

        return Tensor._op(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data / other.data

        def backward(g):
            return (
                _unbroadcast(g / other.data, self.data.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
            )

        return Tensor._op(data, (self, other), backward)

    def __rtruediv__(self, other):
        return Tensor(other) / self

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        data = self.data @ other.data

        def backward(g):
            a, b = self.data, other.data
            if b.ndim == 1:
                ga = np.outer(g, b) if a.ndim > 1 else g * b
                gb = a.T @ g if a.ndim > 1 else g * a
            elif a.ndim == 1:
                ga = g @ b.swapaxes(-1, -2)
                gb = np.outer(a, g)
            else:
                ga = g @ b.swapaxes(-1, -2)
                gb = a.swapaxes(-1, -2) @ g
            return (_unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape))

        return Tensor._op(data, (self, other), backward)

    # -- shape ops ---------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return Tensor._op(self.data.reshape(shape), (self,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        return Tensor._op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def swapaxes(self, a, b):
        return Tensor._op(
            self.data.swapaxes(a, b), (self,), lambda g: (g.swapaxes(a, b),)
        )

    def __getitem__(self, idx):
        data = self.data[idx]
        shape = self.data.shape

        def backward(g):
            full = np.zeros(shape, dtype=np.float64)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._op(data, (self,), backward)

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)
        shape = self.data.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, shape).astype(np.float64, copy=True),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, shape).astype(np.float64, copy=True),)

        return Tensor._op(data, (self,), backward)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.data.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise -------------------------------------------------------

    def exp(self):
        data = np.exp(self.data)
        return Tensor._op(data, (self,), lambda g: (g * data,))

    def log(self):
        return Tensor._op(np.log(self.data), (self,), lambda g: (g / self.data,))

    def tanh(self):
        data = np.tanh(self.data)
        return Tensor._op(data, (self,), lambda g: (g * (1.0 - data * data),))

    def sqrt(self):
        data = np.sqrt(self.data)
        return Tensor._op(data, (self,), lambda g: (g * 0.5 / data,))

    # -- autodiff ----------------------------------------------------------

    def backward(self):
        backward(self)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU with the tanh approximation (the only activation used here).

    Written with in-place numpy ops: this sits on the hot path of every
    feed-forward layer.
    """
    xd = x.data
    sq = xd * xd
    th = sq * (_GELU_A * _GELU_C)
    th *= xd
    th += _GELU_C * xd
    np.tanh(th, out=th)
    data = th + 1.0
    data *= xd
    data *= 0.5

    def backward(g):
        du = sq
        du *= 3.0 * _GELU_A * _GELU_C
        du += _GELU_C
        tt = th * th
        np.subtract(1.0, tt, out=tt)
        tt *= du
        tt *= xd
        dx = th + 1.0
        dx += tt
        dx *= 0.5
        dx *= g
        return (dx,)

    return Tensor._op(data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax: positive outputs summing to 1 along `axis`."""
    data = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(data, out=data)
    data /= data.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        dx = g - dot
        dx *= data
        return (dx,)

    return Tensor._op(data, (x,), backward)


from .kernels import LN_EPS, ln_backward, ln_forward  # noqa: E402


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit population variance,
    then scale by gain and shift by bias."""
    h = x.data.shape[-1]
    if gain.data.shape != (h,) or bias.data.shape != (h,):
        raise ValueError(
            f"layer_norm expects gain/bias of shape ({h},), "
            f"got {gain.data.shape} and {bias.data.shape}"
        )
    data, xhat, inv = ln_forward(x.data, gain.data, bias.data, eps)

    def backward(g):
        return ln_backward(g, xhat, inv, gain.data)

    return Tensor._op(data, (x, gain, bias), backward)


def cross_entropy(logits: Tensor, targets: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean token-level negative log-likelihood.

    logits: (..., V); targets: integer array matching the leading shape.
    mask, when given, weights positions (0 excludes); the mean is taken
    over the total mask weight.
    """
    targets = np.asarray(targets)
    flat_logits = logits.data.reshape(-1, logits.data.shape[-1])
    flat_t = targets.reshape(-1)
    if mask is None:
        w = np.ones(flat_t.shape[0], dtype=np.float64)
    else:
        w = np.asarray(mask, dtype=np.float64).reshape(-1)
    total = w.sum()
    if total <= 0:
        raise ValueError("cross_entropy: mask selects no positions")
    shifted = flat_logits - flat_logits.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    nll = -logp[np.arange(flat_t.shape[0]), flat_t]
    data = (nll * w).sum() / total

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(flat_t.shape[0]), flat_t] -= 1.0
        probs *= (w / total)[:, None]
        return (g * probs.reshape(logits.data.shape),)

    return Tensor._op(np.float64(data), (logits,), backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather: out[..., :] = weight[ids[...], :]."""
    ids = np.asarray(ids)
    data = weight.data[ids]

    def backward(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.data.shape[-1]))
        return (full,)

    return Tensor._op(data, (weight,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._op(data, tuple(tensors), backward)


class Graph:
    """Topologically ordered view of the graph below a root tensor."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes  # parents before children

    @staticmethod
    def trace(root: Tensor) -> "Graph":
        order: list[Tensor] = []
        visited: set[int] = set()
        on_stack: set[int] = set()
        stack: list[tuple[Tensor, int]] = [(root, 0)]
        while stack:
            node, pi = stack.pop()
            nid = id(node)
            if pi == 0:
                if nid in visited:
                    continue
                if nid in on_stack:
                    raise ValueError("cycle detected in computation graph")
                on_stack.add(nid)
            if pi < len(node._parents):
                stack.append((node, pi + 1))
                stack.append((node._parents[pi], 0))
            else:
                on_stack.discard(nid)
                visited.add(nid)
                order.append(node)
        return Graph(order)


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into .grad for every reachable leaf.

    Each node's backward closure runs exactly once, in reverse
    topological order; fan-out gradients add.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    graph = Graph.trace(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg


def grad_check(f, params, eps: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    f is a zero-argument callable returning a scalar Tensor; it must be
    deterministic across calls. params is an iterable of leaf Tensors.
    Returns max over checked coordinates of
    |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
    """
    if not (1e-6 <= eps <= 1e-3):
        raise ValueError(f"grad_check eps must lie in [1e-6, 1e-3], got {eps}")
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    coords = []
    for pi, p in enumerate(params):
        for flat in range(p.data.size):
            coords.append((pi, flat))
    if max_coords is not None and len(coords) > max_coords:
        if rng is None:
            rng = np.random.default_rng(0)
        keep = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in keep]

    worst = 0.0
    for pi, flat in coords:
        p = params[pi]
        orig = p.data.flat[flat]
        p.data.flat[flat] = orig + eps
        hi = float(f().data)
        p.data.flat[flat] = orig - eps
        lo = float(f().data)
        p.data.flat[flat] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise FloatingPointError(
                f"grad_check: non-finite loss at perturbed coordinate {flat} of param {pi}"
            )
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic[pi].flat[flat]
        err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
        worst = max(worst, err)
    return worst
