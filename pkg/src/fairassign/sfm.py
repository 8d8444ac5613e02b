"""Submodular function minimization.

Two backends behind one call, :func:`maximal_minimizer`:

* ``exhaustive`` -- bitmask enumeration of all ``2^m`` sets, exact for
  exact inputs.  Used up to 20 items.
* ``fw`` -- Fujishige-Wolfe minimum-norm-point over the base polytope,
  followed by exact re-evaluation of the candidate chain and per-element
  saturation probing to recover the maximal minimizer.

``f`` must be normalized (``f(0) == 0``) and take a bitmask.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .model import Number, items_of

EXHAUSTIVE_LIMIT = 20

SetFunction = Callable[[int], Number]


def greedy_vertex(w: np.ndarray, f: SetFunction, ground: list[int]) -> np.ndarray:
    """Vertex of the base polytope of ``f`` minimizing ``<w, .>`` (Edmonds' greedy)."""
    order = sorted(range(len(ground)), key=lambda k: (w[k], k))
    q = np.empty(len(ground))
    prev_mask = 0
    prev = 0.0
    for k in order:
        mask = prev_mask | (1 << ground[k])
        val = float(f(mask))
        q[k] = val - prev
        prev, prev_mask = val, mask
    return q


def _affine_minimizer(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-norm point in the affine hull of the rows of ``S`` and its coefficients."""
    k = S.shape[0]
    M = np.zeros((k + 1, k + 1))
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = S @ S.T
    rhs = np.zeros(k + 1)
    rhs[0] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    mu = sol[1:]
    return mu, mu @ S


def min_norm_point(
    f: SetFunction, ground: list[int], max_iter: int = 10_000, eps: float = 1e-12
) -> np.ndarray:
    """Wolfe's algorithm on the base polytope of ``f`` restricted to ``ground``."""
    k = len(ground)
    if k == 0:
        return np.zeros(0)
    x = greedy_vertex(np.zeros(k), f, ground)
    S = x.reshape(1, k)
    lam = np.array([1.0])
    for _ in range(max_iter):
        q = greedy_vertex(x, f, ground)
        scale = max(float(q @ q), float(np.max(np.einsum("ij,ij->i", S, S))), 1.0)
        if float(x @ x) - float(x @ q) <= eps * scale:
            break
        if np.any(np.all(np.abs(S - q) < 1e-12 * scale, axis=1)):
            break
        S = np.vstack([S, q])
        lam = np.append(lam, 0.0)
        while True:
            mu, y = _affine_minimizer(S)
            if np.all(mu > 1e-14):
                lam, x = mu, y
                break
            dec = lam - mu
            idx = (mu <= 1e-14) & (dec > 1e-16)
            if not np.any(idx):
                lam, x = np.clip(mu, 0, None), np.clip(mu, 0, None) @ S
                keep = lam > 1e-14
                S, lam = S[keep], lam[keep] / lam[keep].sum()
                x = lam @ S
                break
            theta = float(np.min(lam[idx] / dec[idx]))
            lam = (1 - theta) * lam + theta * mu
            keep = lam > 1e-14
            S, lam = S[keep], lam[keep]
            lam = lam / lam.sum()
            x = lam @ S
    return x


def _fw_minimum(f: SetFunction, ground: list[int], tol: float) -> tuple[Number, int]:
    """Minimum value and a minimizer read off the min-norm point's sorted chain."""
    x = min_norm_point(f, ground)
    order = sorted(range(len(ground)), key=lambda k: (x[k], k))
    best_val: Number = 0
    best_mask = 0
    mask = 0
    for k in order:
        mask |= 1 << ground[k]
        val = f(mask)
        if val < best_val - tol:
            best_val, best_mask = val, mask
        elif val <= best_val + tol:
            best_mask = mask
    return best_val, best_mask


def maximal_minimizer(
    m: int, f: SetFunction, tol: float = 0.0, backend: str = "auto"
) -> tuple[Number, int]:
    """Return ``(min value, maximal minimizer bitmask)`` of a normalized submodular ``f``.

    Values within ``tol`` of the minimum count as minimizers.
    """
    if backend == "auto":
        backend = "exhaustive" if m <= EXHAUSTIVE_LIMIT else "fw"
    if backend == "exhaustive":
        vals = [f(mask) for mask in range(1 << m)]
        best = min(vals)
        union = 0
        for mask, v in enumerate(vals):
            if v <= best + tol:
                union |= mask
        return best, union
    if backend != "fw":
        raise ValueError(f"unknown SFM backend {backend!r}")

    ground = list(range(m))
    best, mask = _fw_minimum(f, ground, tol)
    # probe every element outside the candidate: j is in the maximal
    # minimizer iff the minimum over sets containing j equals the minimum
    restart = True
    while restart:
        restart = False
        for j in ground:
            if mask >> j & 1:
                continue
            bj = 1 << j
            fj = f(bj)

            def g(s: int, bj: int = bj, fj: Number = fj) -> Number:
                return f(s | bj) - fj

            val, sub = _fw_minimum(g, [a for a in ground if a != j], tol)
            if fj + val < best - tol:
                best, mask = fj + val, sub | bj
                restart = True
                break
            if fj + val <= best + tol:
                mask |= sub | bj
    return best, mask


def minimize(m: int, f: SetFunction, backend: str = "auto") -> tuple[Number, list[int]]:
    """Convenience wrapper returning the maximal minimizer as an item list."""
    val, mask = maximal_minimizer(m, f, backend=backend)
    return val, items_of(mask)
