"""Instance generators: the named constructions and seeded random batteries."""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import numpy as np

from .fisher import ConcaveUtility, FisherInstance
from .model import (
    CHORES,
    GOODS,
    CardinalInstance,
    InstanceError,
    SubmodularOracle,
    exact,
    items_of,
)

GRID = 1000
TABLE_LIMIT = 12
DEFAULT_EPS_STEP = Fraction(1, 10**4)


def default_eps(n: int) -> list[Fraction]:
    """eps_j = j * 1e-4 for j = 1..n."""
    return [j * DEFAULT_EPS_STEP for j in range(1, n + 1)]


def gen_chores_lower_bound(
    n: int, eps: Sequence | None = None
) -> tuple[CardinalInstance, list[list[Fraction]]]:
    """Two-block chores instance where eating is about n/4 times worse than an alternative.

    Chores are numbered 1..n in the formulas (0-based in the matrix).  Agents
    of the first half have d_j = eps_j for j < n and 1 + eps_n on chore n;
    agents of the second half have eps_j for j < n/2 and 1 + eps_j from chore
    n/2 on.  Returns the instance and the alternative allocation in which the
    first half shares chores n/2..n-1 and the second half shares the rest.
    """
    if n < 4 or n % 2:
        raise InstanceError("the lower-bound family needs an even n >= 4")
    eps = default_eps(n) if eps is None else [exact(v) for v in eps]
    if len(eps) != n:
        raise InstanceError(f"need {n} eps values, got {len(eps)}")
    if eps[0] <= 0 or any(a >= b for a, b in zip(eps, eps[1:])):
        raise InstanceError("eps must be positive and strictly increasing")
    half = n // 2
    first = [eps[j - 1] if j < n else 1 + eps[n - 1] for j in range(1, n + 1)]
    second = [eps[j - 1] if j < half else 1 + eps[j - 1] for j in range(1, n + 1)]
    d = [list(first) for _ in range(half)] + [list(second) for _ in range(half)]
    share = Fraction(1, half)
    first_chores = set(range(half, n))  # 1-based n/2..n-1
    alt = []
    for i in range(n):
        if i < half:
            alt.append([share if j in first_chores else Fraction(0) for j in range(1, n + 1)])
        else:
            alt.append([Fraction(0) if j in first_chores else share for j in range(1, n + 1)])
    return CardinalInstance(d, mode=CHORES), alt


def gen_zero_chore() -> CardinalInstance:
    """Two agents, two chores, only agent 0 dislikes chore 1."""
    return CardinalInstance([[0, 1], [0, 0]], mode=CHORES)


def kink_beta(alpha) -> Fraction:
    a = exact(alpha)
    return (1 - 1 / a) / (1 - 2 / a)


def gen_fisher_kink(alpha=10) -> FisherInstance:
    """One item, two agents: u_1(t) = t and u_2 kinked at t = 1/alpha with slopes alpha, beta."""
    a = exact(alpha)
    if a <= 2:
        raise InstanceError("alpha must exceed 2")
    u1 = ConcaveUtility.linear([1])
    u2 = ConcaveUtility.pwl([([1 / a], [a, kink_beta(a)])])
    return FisherInstance((u1, u2))


# ---------------------------------------------------------------------------
# random batteries


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def _grid_values(rng, shape, dist: str) -> list[list[Fraction]]:
    if dist == "uniform":
        raw = rng.integers(1, GRID + 1, size=shape)
    elif dist == "lognormal":
        raw = np.maximum(1, np.rint(GRID * rng.lognormal(0.0, 1.0, size=shape)).astype(int))
    else:
        raise ValueError(f"unknown distribution {dist!r}")
    return [[Fraction(int(v), GRID) for v in row] for row in raw]


def random_oracle(kind: str, m: int, rng: np.random.Generator) -> SubmodularOracle:
    """Random oracle of the given kind with rho({j}) >= 1 for every item."""
    if kind == "cardinality":
        return SubmodularOracle.cardinality(m)
    if kind == "capacities":
        return SubmodularOracle.capacities([int(v) for v in rng.integers(1, 4, size=m)])
    if kind == "coverage":
        universe = m + 2
        cover = []
        for _ in range(m):
            size = int(rng.integers(1, min(3, universe) + 1))
            cover.append(sorted(int(v) for v in rng.choice(universe, size=size, replace=False)))
        return SubmodularOracle.coverage(cover)
    if kind == "table":
        if m > TABLE_LIMIT:
            raise InstanceError(f"table oracles are limited to {TABLE_LIMIT} items")
        # sum of budget-additive terms plus a truncated cardinality term
        terms = []
        for _ in range(int(rng.integers(1, 3))):
            w = [int(v) for v in rng.integers(0, 4, size=m)]
            terms.append((w, int(rng.integers(1, 6))))
        cap = int(rng.integers(1, m + 1))
        values = {}
        for mask in range(1 << m):
            items = items_of(mask)
            v = min(cap, len(items))
            for w, b in terms:
                v += min(b, sum(w[j] for j in items))
            values[mask] = v
        return SubmodularOracle.table(m, values)
    raise InstanceError(f"unknown oracle kind {kind!r}")


ORACLE_KINDS = ("cardinality", "capacities", "coverage", "table")


def gen_random(
    family: str = GOODS,
    n: int = 3,
    m: int = 3,
    oracle: str = "cardinality",
    seed: int = 0,
    dist: str = "uniform",
    index: int = 0,
) -> CardinalInstance:
    """Seeded random instance; values lie on a 1/1000 grid and are strictly positive.

    ``index`` selects an independent stream so batteries can draw many
    instances from one seed.
    """
    if family not in (GOODS, CHORES):
        raise InstanceError(f"unknown family {family!r}")
    if n < 1 or m < 1:
        raise InstanceError("need at least one agent and one item")
    rng = _rng(seed, index)
    values = _grid_values(rng, (n, m), dist)
    rho = random_oracle(oracle, m, rng) if family == GOODS else SubmodularOracle.cardinality(m)
    return CardinalInstance(values, mode=family, rho=rho)


def gen_random_fisher(n: int, m: int, seed: int = 0, index: int = 0, pwl: float = 0.5) -> FisherInstance:
    """Random Fisher market mixing linear and separable piecewise-linear agents."""
    rng = _rng(seed, index, 1)
    utils = []
    for _ in range(n):
        if rng.random() >= pwl:
            w = [Fraction(int(v), 100) for v in rng.integers(1, 101, size=m)]
            utils.append(ConcaveUtility.linear(w))
            continue
        items = []
        for _ in range(m):
            k = int(rng.integers(0, 3))
            breaks = sorted({Fraction(int(v), 10) for v in rng.integers(1, 10, size=k)})
            slopes = sorted(
                (Fraction(int(v), 10) for v in rng.integers(1, 31, size=len(breaks) + 1)),
                reverse=True,
            )
            items.append((breaks, slopes))
        utils.append(ConcaveUtility.pwl(items))
    return FisherInstance(tuple(utils))
