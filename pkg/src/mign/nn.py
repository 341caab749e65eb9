"""Dense layers, activations and neighbor aggregation with explicit backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import expit


class ShapeError(ValueError):
    pass


def _sigmoid(x):
    return expit(x)


def silu(x):
    return x * _sigmoid(x)


def silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


ACTIVATIONS = {
    "silu": (silu, silu_grad),
    "tanh": (np.tanh, lambda x: 1.0 - np.tanh(x) ** 2),
    "identity": (lambda x: x, np.ones_like),
}


@dataclass
class Mlp:
    """Affine layers with an activation between them; the last layer is linear."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "silu"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: bias {b.shape} does not match weight {w.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i}: input width {w.shape[0]} does not chain")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[1]

    def forward(self, x: np.ndarray):
        if x.shape[-1] != self.in_width:
            raise ShapeError(f"input width {x.shape[-1]} != expected {self.in_width}")
        act = ACTIVATIONS[self.activation][0]
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = x @ w + b
            cache.append((x, z))
            x = z if i == last else act(z)
        return x, cache

    def backward(self, cache, gy: np.ndarray):
        """Return (grad wrt input, [grad W], [grad b])."""
        dact = ACTIVATIONS[self.activation][1]
        gws, gbs = [None] * len(self.weights), [None] * len(self.weights)
        last = len(self.weights) - 1
        g = gy
        for i in range(last, -1, -1):
            x, z = cache[i]
            if i != last:
                g = g * dact(z)
            gws[i] = x.T @ g
            gbs[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return g, gws, gbs


def mlp_apply(p: Mlp, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    y, _ = p.forward(v.reshape(1, -1) if v.ndim == 1 else v)
    return y[0] if v.ndim == 1 else y


def scatter_add(index: np.ndarray, values: np.ndarray, n_rows: int) -> np.ndarray:
    """out[index[i]] += values[i], accumulated in a fixed order."""
    index = index.reshape(-1)
    values = values.reshape(index.size, -1)
    mat = sparse.csr_matrix((np.ones(index.size), (index, np.arange(index.size))),
                            shape=(n_rows, index.size))
    return np.asarray(mat @ values)


def aggregate(edges: np.ndarray, mode: str):
    """Reduce (targets, k, width) edge values over the neighbor axis."""
    if mode == "mean":
        return edges.sum(axis=1) / edges.shape[1], None
    if mode == "sum":
        return edges.sum(axis=1), None
    if mode == "max":
        arg = edges.argmax(axis=1)
        return np.take_along_axis(edges, arg[:, None, :], axis=1)[:, 0, :], arg
    raise ShapeError(f"unknown aggregation {mode!r}")


def aggregate_backward(g: np.ndarray, k: int, mode: str, arg) -> np.ndarray:
    """Gradient wrt the (targets, k, width) edge values."""
    if mode == "mean":
        return np.repeat(g[:, None, :] / k, k, axis=1)
    if mode == "sum":
        return np.repeat(g[:, None, :], k, axis=1)
    out = np.zeros((g.shape[0], k, g.shape[1]))
    np.put_along_axis(out, arg[:, None, :], g[:, None, :], axis=1)
    return out
