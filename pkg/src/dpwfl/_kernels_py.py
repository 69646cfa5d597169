"""Pure-Python/numpy versions of the compiled kernels (same signatures and results)."""

from __future__ import annotations

import numpy as np


def first_crossing(artificial, channel: float) -> int:
    artificial = np.asarray(artificial, dtype=float)
    hits = np.flatnonzero(artificial <= channel)
    return int(hits[0]) + 1 if hits.size else int(artificial.size)


def wasserstein_rows(pmfs, target) -> np.ndarray:
    diff = np.cumsum(np.asarray(pmfs, dtype=float) - np.asarray(target, dtype=float), axis=1)
    return np.sum(np.abs(diff[:, :-1]), axis=1)


def quadratic_trajectory(A, b, l2_reg, weights, lr, w0, noise_std, z, ref_hessian, ref_minimizer):
    S, T, K, q = z.shape
    w = np.tile(np.asarray(w0, dtype=float), (S, 1))
    gaps = np.empty((S, T + 1))
    ratio = np.empty((S, T))
    for t in range(T + 1):
        d = w - ref_minimizer
        gaps[:, t] = 0.5 * np.einsum("si,ij,sj->s", d, ref_hessian, d)
        if t == T:
            break
        clean = np.zeros_like(w)
        noise = np.zeros_like(w)
        energy = np.zeros(S)
        for k in range(K):
            if weights[k] == 0.0:
                continue
            local = (w - b[k]) @ A[k].T + l2_reg * w
            clean += weights[k] * local
            energy += weights[k] * np.sum(local * local, axis=1)
            noise += weights[k] * noise_std[t, k] * z[:, t, k, :]
        gnorm2 = np.sum(clean * clean, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio[:, t] = np.where(gnorm2 > 0, energy / gnorm2, np.nan)
        w = w - lr * (clean + noise)
    return gaps, ratio
