"""Minimal tape-based reverse-mode engine over dense float64 numpy arrays.

Only the primitives the agents need are provided: affine layers, tanh/sigmoid,
embedding lookup, GRU cell, row-wise softmax / cross-entropy, straight-through
Gumbel-Softmax, and a handful of shape utilities. All arrays are 2-D
(batch, features) except scalar reductions.
"""
from __future__ import annotations

import numpy as np

from .rng import RngStream


class Tensor:
    """A node in the computation tape."""

    __slots__ = ("data", "grad", "parents", "bw", "requires_grad")

    def __init__(self, data, parents=(), bw=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bw = bw  # out_grad -> tuple of grads aligned with parents
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def backward(self) -> None:
        """Accumulate gradients into every reachable requires-grad leaf."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.bw is None:
                continue
            grads = node.bw(node.grad)
            for parent, g in zip(node.parents, grads):
                if not parent.requires_grad or g is None:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += g


def constant(x) -> Tensor:
    return Tensor(x)


def leaf(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                          _unbroadcast(g * a.data, b.data.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return Tensor(a.data + c, (a,), lambda g: (g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data
    return Tensor(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),))


def recip(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return Tensor(out, (a,), lambda g: (-g * out * out,))


def mean_cols(a: Tensor) -> Tensor:
    """(B, n) -> (B, 1) row means."""
    n = a.data.shape[1]
    out = a.data.mean(axis=1, keepdims=True)
    return Tensor(out, (a,), lambda g: (np.repeat(g, n, axis=1) / n,))


def sum_all(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), (a,), lambda g: (np.full_like(a.data, float(g)),))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return Tensor(a.data.sum() / n, (a,), lambda g: (np.full_like(a.data, float(g) / n),))


def concat_cols(parts: list[Tensor]) -> Tensor:
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]
    offs = np.cumsum([0] + widths)

    def bw(g):
        return tuple(g[:, offs[i]:offs[i + 1]] for i in range(len(parts)))

    return Tensor(out, tuple(parts), bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    out = a.data[:, start:stop]

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor(out, (a,), bw)


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Row lookup: table (V, d), idx (B,) -> (B, d)."""
    idx = np.asarray(idx, dtype=np.int64)
    out = table.data[idx]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor(out, (table,), bw)


def softmax_rows(a: Tensor) -> Tensor:
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax input must be finite")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return Tensor(out, (a,), bw)


def log_softmax_rows(a: Tensor) -> Tensor:
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax input must be finite")
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def bw(g):
        return (g - sm * g.sum(axis=1, keepdims=True),)

    return Tensor(out, (a,), bw)


def pick_cols(a: Tensor, idx: np.ndarray) -> Tensor:
    """Per-row gather: (B, n), idx (B,) -> (B, 1)."""
    idx = np.asarray(idx, dtype=np.int64)
    n = a.data.shape[1]
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError(f"class index out of range [0, {n})")
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx][:, None]

    def bw(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g[:, 0]
        return (full,)

    return Tensor(out, (a,), bw)


def cross_entropy_rows(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over rows of -log softmax(logits)[target]."""
    return scale(sum_all(pick_cols(log_softmax_rows(logits), targets)), -1.0 / logits.data.shape[0])


def onehot(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((idx.shape[0], n))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def gumbel_softmax_st(logits: Tensor, temperature: float, rng: RngStream | None,
                      noise: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Straight-through Gumbel-Softmax over rows.

    Returns (hard, soft): hard is one-hot per row and routes its gradient
    straight through to soft. Pass an explicit `noise` array to freeze the
    perturbation (gradient checks, deterministic tests).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if noise is None:
        noise = rng.gumbel(logits.data.shape)
    perturbed = scale(add(logits, constant(noise)), 1.0 / temperature)
    soft = softmax_rows(perturbed)
    hard_data = onehot(soft.data.argmax(axis=1), soft.data.shape[1])
    hard = Tensor(hard_data, (soft,), lambda g: (g,))
    return hard, soft


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def gru_step(h: Tensor, x: Tensor, w: dict[str, Tensor]) -> Tensor:
    """Standard GRU cell: keys wxz/whz/bz, wxr/whr/br, wxh/whh/bh."""
    if h.data.shape[1] != w["whz"].data.shape[0] or x.data.shape[1] != w["wxz"].data.shape[0]:
        raise ValueError("gru_step: state/input width does not match parameters")
    z = sigmoid(add(add(matmul(x, w["wxz"]), matmul(h, w["whz"])), w["bz"]))
    r = sigmoid(add(add(matmul(x, w["wxr"]), matmul(h, w["whr"])), w["br"]))
    cand = tanh(add(add(matmul(x, w["wxh"]), matmul(mul(r, h), w["whh"])), w["bh"]))
    one_minus_z = add_scalar(scale(z, -1.0), 1.0)
    return add(mul(z, h), mul(one_minus_z, cand))


def softmax(vec: np.ndarray) -> np.ndarray:
    """Plain (non-tape) stable softmax of a 1-D vector."""
    vec = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise ValueError("softmax input must be finite")
    z = vec - vec.max()
    e = np.exp(z)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, target: int) -> tuple[float, np.ndarray]:
    """Loss and gradient of -log softmax(logits)[target] for a 1-D vector."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= target < logits.shape[0]:
        raise IndexError("target class out of range")
    z = logits - logits.max()
    lse = np.log(np.exp(z).sum())
    loss = lse - z[target]
    grad = softmax(logits)
    grad[target] -= 1.0
    return float(loss), grad
