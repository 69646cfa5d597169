"""Small fully connected networks with hand-written backpropagation."""

from __future__ import annotations

import numpy as np


class Mlp:
    """``tanh`` hidden layers and a ``tanh`` or ``linear`` output layer.

    Parameters are stored as a flat list ``[W0, b0, W1, b1, ...]`` with
    ``W_i`` of shape (fan_out, fan_in). Inputs are batched row-wise.
    """

    def __init__(self, sizes, output: str = "linear", rng: np.random.Generator | None = None, init_scale: float = 1.0):
        if output not in ("linear", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        rng = rng or np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.output = output
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = init_scale / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            self.params.append(np.zeros(fan_out))

    @property
    def num_layers(self) -> int:
        return len(self.params) // 2

    def copy(self) -> "Mlp":
        new = Mlp.__new__(Mlp)
        new.sizes = self.sizes
        new.output = self.output
        new.params = [p.copy() for p in self.params]
        return new

    def forward(self, x, cache: bool = False):
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        n = self.num_layers
        for i in range(n):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            z = h @ W.T + b
            h = z if (i == n - 1 and self.output == "linear") else np.tanh(z)
            acts.append(h)
        return (h, acts) if cache else h

    def backward(self, acts, grad_out):
        """Gradients of ``sum(grad_out * output)`` w.r.t. parameters and input."""
        n = self.num_layers
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        delta = np.asarray(grad_out, dtype=float)
        for i in reversed(range(n)):
            out = acts[i + 1]
            if not (i == n - 1 and self.output == "linear"):
                delta = delta * (1.0 - out**2)
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            delta = delta @ self.params[2 * i]
        return grads, delta

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=float)
        i = 0
        for p in self.params:
            p[...] = flat[i : i + p.size].reshape(p.shape)
            i += p.size
        if i != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def num_params(self) -> int:
        return sum(p.size for p in self.params)


class Adam:
    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        """In-place descent step on ``params`` given loss gradients."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def soft_update(online: Mlp, target: Mlp, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target``, in place."""
    if online.sizes != target.sizes or online.output != target.output:
        raise ValueError("online and target architectures differ")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for p, q in zip(online.params, target.params):
        q *= 1.0 - tau
        q += tau * p
