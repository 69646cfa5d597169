"""Local objectives, analytic gradients and clipping.

Two tasks are provided. ``LogisticTask`` is multinomial logistic regression
(cross-entropy) used for end-to-end runs. ``QuadraticTask`` gives every
device an explicit quadratic ``0.5 (w - b_k)^T A_k (w - b_k)`` so the
strong-convexity and smoothness constants are known exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .datagen import LabeledDataset
from .errors import DomainError


@dataclass(frozen=True)
class LogisticTask:
    feature_dim: int
    num_classes: int
    l2_reg: float = 0.0
    kind: str = "logistic"

    @property
    def num_params(self) -> int:
        return self.num_classes * (self.feature_dim + 1)

    def _unpack(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.num_params,):
            raise DomainError(f"expected {self.num_params} parameters, got shape {w.shape}")
        W = w.reshape(self.num_classes, self.feature_dim + 1)
        return W[:, :-1], W[:, -1]

    def _check(self, data: LabeledDataset):
        if data.features.shape[1] != self.feature_dim:
            raise DomainError(
                f"features have dimension {data.features.shape[1]}, task expects {self.feature_dim}"
            )

    def loss(self, w, data: LabeledDataset, k: int = 0) -> float:
        self._check(data)
        W, c = self._unpack(w)
        logits = data.features @ W.T + c
        ce = logsumexp(logits, axis=1) - logits[np.arange(data.size), data.labels]
        return float(np.mean(ce) + 0.5 * self.l2_reg * np.dot(w, w))

    def gradient(self, w, data: LabeledDataset, k: int = 0) -> np.ndarray:
        self._check(data)
        W, c = self._unpack(w)
        logits = data.features @ W.T + c
        probs = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
        probs[np.arange(data.size), data.labels] -= 1.0
        probs /= data.size
        gW = probs.T @ data.features
        gc = probs.sum(axis=0)
        return np.column_stack([gW, gc]).ravel() + self.l2_reg * np.asarray(w, dtype=float)

    def constants(self, datasets: list[LabeledDataset], weights=None) -> tuple[float, float]:
        """(mu, L) from the regulariser and a Hessian bound.

        The softmax Jacobian ``diag(p) - p p^T`` has spectral norm at most 1/2,
        so ``L <= l2 + 0.5 * max ||[x, 1]||^2`` over every sample.
        """
        if self.l2_reg <= 0:
            raise DomainError("logistic loss is only strongly convex with l2_reg > 0")
        max_sq = max(float(np.max(np.sum(d.features**2, axis=1))) + 1.0 for d in datasets)
        return self.l2_reg, self.l2_reg + 0.5 * max_sq


@dataclass(frozen=True)
class QuadraticTask:
    """Per-device quadratics; ``A`` has shape (K, q, q) and ``b`` shape (K, q)."""

    A: np.ndarray
    b: np.ndarray
    l2_reg: float = 0.0
    kind: str = "quadratic"

    def __post_init__(self):
        if self.A.ndim != 3 or self.A.shape[1] != self.A.shape[2]:
            raise DomainError("A must have shape (K, q, q)")
        if self.b.shape != self.A.shape[:2]:
            raise DomainError("b must have shape (K, q)")
        if not np.allclose(self.A, np.transpose(self.A, (0, 2, 1))):
            raise DomainError("every A_k must be symmetric")

    @property
    def num_devices(self) -> int:
        return int(self.A.shape[0])

    @property
    def num_params(self) -> int:
        return int(self.A.shape[1])

    def _vec(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.num_params,):
            raise DomainError(f"expected {self.num_params} parameters, got shape {w.shape}")
        return w

    def loss(self, w, data: LabeledDataset | None = None, k: int = 0) -> float:
        w = self._vec(w)
        r = w - self.b[k]
        return float(0.5 * r @ self.A[k] @ r + 0.5 * self.l2_reg * w @ w)

    def gradient(self, w, data: LabeledDataset | None = None, k: int = 0) -> np.ndarray:
        w = self._vec(w)
        return self.A[k] @ (w - self.b[k]) + self.l2_reg * w

    def hessian(self, weights) -> np.ndarray:
        g = np.asarray(weights, dtype=float)
        return np.einsum("k,kij->ij", g, self.A) + self.l2_reg * np.eye(self.num_params)

    def constants(self, datasets=None, weights=None) -> tuple[float, float]:
        if weights is None:
            weights = np.full(self.num_devices, 1.0 / self.num_devices)
        ev = np.linalg.eigvalsh(self.hessian(weights))
        return float(ev[0]), float(ev[-1])

    def device_constants(self) -> tuple[float, float]:
        """(mu, L) valid for every device objective at once."""
        ev = np.linalg.eigvalsh(self.A)
        return float(ev[:, 0].min()) + self.l2_reg, float(ev[:, -1].max()) + self.l2_reg

    def dissimilarity(self, weights) -> float:
        """Smallest uniform local-dissimilarity constant, or inf.

        Finite only when all devices share one minimiser; it is then the
        square root of the top generalised eigenvalue of
        ``sum_k G_k A_k^2`` against ``H^2``.
        """
        g = np.asarray(weights, dtype=float)
        ws = self.minimizer(g)
        for k in np.flatnonzero(g):
            if np.linalg.norm(self.gradient(ws, None, k)) > 1e-9 * (1.0 + np.linalg.norm(ws)):
                return math.inf
        Ar = self.A + self.l2_reg * np.eye(self.num_params)[None]
        M = np.einsum("k,kij,kjl->il", g, Ar, Ar)
        H = self.hessian(g)
        Hinv = np.linalg.inv(H)
        ev = np.linalg.eigvalsh(Hinv @ M @ Hinv)
        return max(1.0, math.sqrt(float(ev[-1])))

    def weighted_loss(self, w, weights) -> float:
        return float(sum(gk * self.loss(w, None, k) for k, gk in enumerate(weights) if gk != 0))

    def minimizer(self, weights) -> np.ndarray:
        g = np.asarray(weights, dtype=float)
        rhs = np.einsum("k,kij,kj->i", g, self.A, self.b)
        return np.linalg.solve(self.hessian(g), rhs)

    def to_json(self) -> str:
        return json.dumps({"kind": "quadratic", "l2_reg": self.l2_reg, "A": self.A.tolist(), "b": self.b.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "QuadraticTask":
        obj = json.loads(text)
        return cls(np.array(obj["A"], dtype=float), np.array(obj["b"], dtype=float), float(obj["l2_reg"]))


def random_spd(q: int, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Random symmetric matrix with eigenvalues spanning exactly [lo, hi]."""
    if q == 1:
        return np.array([[lo]])
    ev = np.concatenate([[lo, hi], rng.uniform(lo, hi, q - 2)])
    Q, _ = np.linalg.qr(rng.standard_normal((q, q)))
    A = (Q * ev) @ Q.T
    return 0.5 * (A + A.T)


def make_quadratic_task(
    pmfs: np.ndarray,
    dim: int,
    mu: float,
    L: float,
    target_scale: float = 1.0,
    seed=0,
    l2_reg: float = 0.0,
) -> QuadraticTask:
    """Quadratic task whose device objectives are label mixtures of class losses.

    Class z has loss ``0.5 (w - c_z)^T A_z (w - c_z)`` with spectrum of ``A_z``
    in ``[mu, L]``. A device with label pmf ``pi`` gets ``sum_z pi_z`` times
    those losses, stored (up to a constant) as one quadratic with
    ``A = sum_z pi_z A_z`` and ``b = A^-1 sum_z pi_z A_z c_z``. Convex
    combinations keep every spectrum inside ``[mu, L]``. Class components
    depend only on ``seed``, so any pmf (e.g. a balanced population) can be
    added later with ``mixture_quadratic``.
    """
    class_A, centers = quadratic_classes(np.asarray(pmfs).shape[1], dim, mu, L, target_scale, seed)
    return mixture_quadratic(class_A, centers, pmfs, l2_reg)


def quadratic_classes(num_classes: int, dim: int, mu: float, L: float, target_scale: float = 1.0, seed=0):
    """Per-class curvatures (Z, q, q) and targets (Z, q)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, target_scale, size=(num_classes, dim))
    class_A = np.stack([random_spd(dim, mu, L, rng) for _ in range(num_classes)])
    return class_A, centers


def mixture_quadratic(class_A, centers, pmfs, l2_reg: float = 0.0) -> QuadraticTask:
    pmfs = np.atleast_2d(np.asarray(pmfs, dtype=float))
    A = np.einsum("kz,zij->kij", pmfs, class_A)
    A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
    rhs = np.einsum("kz,zij,zj->ki", pmfs, class_A, centers)
    b = np.linalg.solve(A, rhs[..., None])[..., 0]
    return QuadraticTask(A, b, l2_reg)


def make_specialist_task(num_devices: int, dim: int, mu: float, L: float, optimum) -> QuadraticTask:
    """Devices sharing one minimiser, each sharply curved along its own axis.

    ``A_k = mu I + (L - mu) e_j e_j^T`` with ``j = k mod dim``. Every device has
    spectrum exactly ``[mu, L]`` and the local dissimilarity is finite.
    """
    optimum = np.asarray(optimum, dtype=float)
    if optimum.shape != (dim,):
        raise DomainError("optimum must have length dim")
    eye = np.eye(dim)
    A = np.stack([mu * eye + (L - mu) * np.outer(eye[k % dim], eye[k % dim]) for k in range(num_devices)])
    return QuadraticTask(A, np.tile(optimum, (num_devices, 1)))


def local_loss(w, data: LabeledDataset | None, task, k: int = 0) -> float:
    return task.loss(w, data, k)


def local_gradient(w, data: LabeledDataset | None, task, k: int = 0) -> np.ndarray:
    return task.gradient(w, data, k)


def task_constants(task, datasets=None, weights=None) -> tuple[float, float]:
    return task.constants(datasets, weights)


def clip_gradient(g, C: float) -> np.ndarray:
    if C <= 0:
        raise DomainError("clipping bound must be positive")
    g = np.asarray(g, dtype=float)
    return g / max(1.0, float(np.linalg.norm(g)) / C)
