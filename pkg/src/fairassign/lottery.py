"""Lottery decomposition of fractional assignments under integer capacities.

Item j with capacity s_j is split into s_j unit copies, the resulting
subprobability matrix is padded to a doubly stochastic one, and perfect
matchings on its support are peeled off (Birkhoff).  A final Caratheodory
pass trims the mixture to at most ``n*m + 1`` assignments.
"""

from __future__ import annotations

from collections import OrderedDict
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .model import Allocation, Lottery, SubmodularOracle, is_exact_value


class UnsupportedOracle(ValueError):
    """Decomposition is only implemented for integer capacity oracles."""


def _capacities(rho: SubmodularOracle | None, supplies, m: int) -> list[int]:
    if supplies is None:
        if rho is None:
            return [1] * m
        if not rho.is_modular:
            raise UnsupportedOracle(f"{rho.kind} oracle is not a capacity oracle")
        supplies = rho.supplies()
    caps = []
    for s in supplies:
        if Fraction(s).denominator != 1 or s < 0:
            raise UnsupportedOracle(f"capacity {s} is not a nonnegative integer")
        caps.append(int(s))
    if len(caps) != m:
        raise ValueError("one capacity per item required")
    return caps


def _split_copies(x, caps, zero, tol):
    """Columns of unit copies: (n x M matrix as lists, owner item of each copy)."""
    n, m = len(x), len(caps)
    cols: list[list] = []
    owner: list[int] = []
    for j in range(m):
        copies = [[zero] * n for _ in range(caps[j])]
        c, room = 0, zero + 1
        for i in range(n):
            v = x[i][j]
            while v > tol:
                if c >= caps[j]:
                    raise ValueError(f"item {j} is allocated beyond its capacity {caps[j]}")
                take = min(v, room)
                copies[c][i] += take
                v -= take
                room -= take
                if room <= tol:
                    c, room = c + 1, zero + 1
        cols.extend(copies)
        owner.extend([j] * caps[j])
    return cols, owner


def bvn_decompose(
    x: Allocation | Sequence[Sequence],
    supplies: Sequence[int] | None = None,
    rho: SubmodularOracle | None = None,
    tol: float | None = None,
) -> Lottery:
    """Lottery over integral assignments whose marginals equal ``x``.

    Exact when ``x`` holds exact numbers.  Each assignment gives every agent
    at most one item and item j to at most ``s_j`` agents.
    """
    mat = x.x if isinstance(x, Allocation) else np.asarray(x, dtype=object)
    rows = [list(r) for r in mat]
    n = len(rows)
    m = len(rows[0]) if n else 0
    caps = _capacities(rho, supplies, m)
    exact_mode = all(is_exact_value(v) for r in rows for v in r)
    if exact_mode:
        rows = [[Fraction(v) for v in r] for r in rows]
        zero, tol = Fraction(0), 0
    else:
        rows = [[float(v) for v in r] for r in rows]
        zero, tol = 0.0, 1e-12 if tol is None else tol
    one = zero + 1
    if any(v < -tol for r in rows for v in r):
        raise ValueError("allocation has negative entries")
    if any(sum(r) > one + tol for r in rows):
        raise ValueError("an agent receives more than one unit")

    cols, owner = _split_copies(rows, caps, zero, tol)
    M = len(cols)
    size = n + M
    D = [[zero] * size for _ in range(size)]
    for i in range(n):
        for k in range(M):
            D[i][k] = cols[k][i]
            D[n + k][M + i] = cols[k][i]
        D[i][M + i] = one - sum(rows[i])
    for k in range(M):
        D[n + k][k] = one - sum(cols[k])

    mixture: "OrderedDict[tuple, object]" = OrderedDict()
    remaining = one
    while remaining > tol:
        support = np.array([[D[r][c] > tol for c in range(size)] for r in range(size)])
        match = maximum_bipartite_matching(csr_matrix(support.astype(np.int8)), perm_type="column")
        if np.any(match < 0):
            raise ArithmeticError("no perfect matching on the residual support")
        p = min(D[r][int(match[r])] for r in range(size))
        for r in range(size):
            D[r][int(match[r])] -= p
        remaining -= p
        assignment = tuple(
            owner[int(match[i])] if int(match[i]) < M else None for i in range(n)
        )
        mixture[assignment] = mixture.get(assignment, zero) + p

    entries = _caratheodory(list(mixture.items()), n, m, exact_mode, tol)
    return Lottery(tuple(entries), m)


def _vector(assignment, n, m, exact_mode):
    zero = Fraction(0) if exact_mode else 0.0
    v = [zero] * (n * m)
    for i, j in enumerate(assignment):
        if j is not None:
            v[i * m + j] = zero + 1
    return v + [zero + 1]


def _null_vector(vectors: list[list], exact_mode: bool):
    """Nonzero lambda with sum_k lambda_k * vectors[k] == 0, or None."""
    k = len(vectors)
    d = len(vectors[0])
    if exact_mode:
        # Gaussian elimination over the rationals on the d x k matrix
        A = [[vectors[c][r] for c in range(k)] for r in range(d)]
        pivots = []
        row = 0
        for col in range(k):
            piv = next((r for r in range(row, d) if A[r][col] != 0), None)
            if piv is None:
                continue
            A[row], A[piv] = A[piv], A[row]
            inv = 1 / A[row][col]
            A[row] = [v * inv for v in A[row]]
            for r in range(d):
                if r != row and A[r][col] != 0:
                    f = A[r][col]
                    A[r] = [a - f * b for a, b in zip(A[r], A[row])]
            pivots.append(col)
            row += 1
            if row == d:
                break
        free = next((c for c in range(k) if c not in pivots), None)
        if free is None:
            return None
        lam = [Fraction(0)] * k
        lam[free] = Fraction(1)
        for r, pc in enumerate(pivots):
            lam[pc] = -A[r][free]
        return lam
    A = np.array(vectors, dtype=float).T
    _, sv, vt = np.linalg.svd(A)
    if len(sv) == k and sv[-1] > 1e-9:
        return None
    return list(vt[-1])


def _caratheodory(items, n, m, exact_mode, tol):
    """Drop assignments until at most n*m + 1 remain, preserving marginals."""
    limit = n * m + 1
    while len(items) > limit:
        sub = items[: limit + 1]
        lam = _null_vector([_vector(a, n, m, exact_mode) for a, _ in sub], exact_mode)
        if lam is None:
            raise ArithmeticError("no affine dependence among more than n*m+1 assignments")
        if all(v <= tol for v in lam):
            lam = [-v for v in lam]
        t = min(p / l for (_, p), l in zip(sub, lam) if l > tol)
        new = []
        for (a, p), l in zip(sub, lam):
            q = p - t * l
            if q > tol:
                new.append((a, q))
        items = new + items[limit + 1:]
    return items
