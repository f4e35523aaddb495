"""Dense / batch-norm / activation layers with hand-derived backward passes.

Every layer keeps its parameters as plain numpy arrays and returns an
explicit cache from ``forward`` that ``backward`` consumes.  No autodiff
graph: the architecture is fixed, so the gradients are written out by hand
and validated against finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def dropout_rate(layer_index: int) -> float:
    """Depth-adjusted dropout probability: min(0.1 + 0.05 * l, 0.3)."""
    if layer_index < 0:
        raise ValueError("layer index must be >= 0")
    return min(0.1 + 0.05 * layer_index, 0.3)


class Dense:
    """Affine layer y = x @ W.T + b with W of shape [out, in]."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        # He initialization; the hidden activations are ReLU.
        self.W = rng.standard_normal((out_dim, in_dim)) * np.sqrt(2.0 / in_dim)
        self.b = np.zeros(out_dim)

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense layer expects input width {self.in_dim}, got {x.shape}"
            )
        y = x @ self.W.T + self.b
        return y, x

    def backward(self, gy: np.ndarray, cache):
        x = cache
        gW = gy.T @ x
        gb = gy.sum(axis=0)
        gx = gy @ self.W
        return gx, {"W": gW, "b": gb}


class BatchNorm:
    """Per-feature batch normalization with running statistics.

    Training mode normalizes by batch statistics (population variance) and
    updates the running buffers; inference mode is a frozen affine map.
    """

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = np.ones(dim)
        self.shift = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: np.ndarray, train: bool):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        y = self.gamma * xhat + self.shift
        return y, (xhat, inv_std, train)

    def backward(self, gy: np.ndarray, cache):
        xhat, inv_std, train = cache
        ggamma = (gy * xhat).sum(axis=0)
        gshift = gy.sum(axis=0)
        gxhat = gy * self.gamma
        if train:
            n = gy.shape[0]
            gx = (inv_std / n) * (
                n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0)
            )
        else:
            gx = gxhat * inv_std
        return gx, {"gamma": ggamma, "shift": gshift}


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x > 0


def relu_backward(gy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return gy * mask


def dropout_forward(x: np.ndarray, p: float, train: bool, rng):
    """Inverted dropout.  Identity when inferring or when no rng is supplied."""
    if not train or rng is None or p <= 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = 1.0 / (1.0 - p)
    return x * keep * scale, (keep, scale)


def dropout_backward(gy: np.ndarray, cache) -> np.ndarray:
    if cache is None:
        return gy
    keep, scale = cache
    return gy * keep * scale
