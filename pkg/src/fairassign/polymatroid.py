"""Submodular polyhedron computations.

P(rho) = {z : z(S) <= rho(S) for all S}.  Everything here reduces to
minimizing the submodular slack ``S -> rho(S) - z(S)`` (optionally minus
``alpha * gamma(S)``).  Modular oracles get closed forms; otherwise up to
20 items are enumerated with bitmask tables and larger ground sets go
through Fujishige-Wolfe.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import FLOAT_TOL, Number, SubmodularOracle, is_exact_value, items_of
from .sfm import EXHAUSTIVE_LIMIT, maximal_minimizer


class NotInPolytope(ValueError):
    def __init__(self, violated: frozenset[int], slack: Number):
        super().__init__(f"z is not in P(rho): set {sorted(violated)} has slack {slack}")
        self.violated = violated
        self.slack = slack


class DirectionBlocked(ValueError):
    pass


@dataclass(frozen=True)
class Membership:
    member: bool
    slack_min: Number
    violated: frozenset[int] | None

    def __bool__(self) -> bool:
        return self.member


@dataclass(frozen=True)
class TightSetResult:
    set: frozenset[int]
    slack_min: Number
    certificate: frozenset[int]

    @property
    def mask(self) -> int:
        m = 0
        for j in self.set:
            m |= 1 << j
        return m


@dataclass(frozen=True)
class StepResult:
    alpha: Number
    bottleneck: frozenset[int]


# ---------------------------------------------------------------------------
# numeric plumbing


def _prepare(z: Sequence[Number], rho: SubmodularOracle, tol: float | None):
    """Coerce ``z`` and pick a matching rho evaluation (exact or float)."""
    z = list(z)
    if len(z) != rho.m:
        raise ValueError(f"vector has {len(z)} entries, oracle has {rho.m} items")
    use_exact = all(is_exact_value(v) for v in z) and rho.exact
    if use_exact:
        z = [Fraction(v) for v in z]
        f = rho.value
    else:
        z = [float(v) for v in z]
        f = _float_eval(rho)
    if tol is None or (use_exact and tol == 0):
        # an int zero keeps exact arithmetic exact (Fraction + 0.0 is a float)
        tol = 0 if use_exact else FLOAT_TOL
    return z, f, tol


def _float_eval(rho: SubmodularOracle):
    f = getattr(rho, "_float_eval", None)
    if f is None:
        def f(mask: int) -> float:
            return float(rho.value(mask))
        rho._float_eval = f
    return f


def _rho_table(rho: SubmodularOracle, f) -> list[Number]:
    key = "_table" if f == rho.value else "_table_float"
    tab = getattr(rho, key, None)
    if tab is None:
        tab = [f(mask) for mask in range(1 << rho.m)]
        setattr(rho, key, tab)
    return tab


def _subset_sums(v: Sequence[Number], zero: Number) -> list[Number]:
    out = [zero] * (1 << len(v))
    for mask in range(1, 1 << len(v)):
        low = mask & -mask
        out[mask] = out[mask ^ low] + v[low.bit_length() - 1]
    return out


def _backend(rho: SubmodularOracle, backend: str) -> str:
    if backend != "auto":
        return backend
    if rho.is_modular:
        return "modular"
    return "exhaustive" if rho.m <= EXHAUSTIVE_LIMIT else "fw"


def _slack_minimizer(z, rho, f, tol, backend):
    """(minimum over nonempty S of rho(S) - z(S), maximal minimizer) -- may be a violation."""
    m = rho.m
    if backend == "modular":
        slacks = [f(1 << j) - z[j] for j in range(m)]
        best = min(slacks)
        if best > tol:
            # strictly positive slack everywhere: the least slack set is a singleton
            j = slacks.index(best)
            return best, 1 << j
        if best < -tol:
            mask = 0
            for j, s in enumerate(slacks):
                if s < -tol:
                    mask |= 1 << j
            return sum(slacks[j] for j in items_of(mask)), mask
        mask = 0
        for j, s in enumerate(slacks):
            if s <= tol:
                mask |= 1 << j
        return best, mask
    if backend == "exhaustive":
        tab = _rho_table(rho, f)
        zs = _subset_sums(z, z[0] * 0 if z else 0)
        best = None
        union = 0
        for mask in range(1, 1 << m):
            v = tab[mask] - zs[mask]
            if best is None or v < best - tol:
                best, union = v, mask
            elif v <= best + tol:
                union |= mask
                if v < best:
                    best = v
        return best, union
    if backend == "fw":
        val, mask = maximal_minimizer(
            m, lambda s: f(s) - sum(z[j] for j in items_of(s)), tol=tol, backend="fw"
        )
        if mask == 0:
            # every nonempty set has positive slack; report the smallest singleton
            slacks = [f(1 << j) - z[j] for j in range(m)]
            best = min(slacks)
            return best, 1 << slacks.index(best)
        return val, mask
    raise ValueError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# public operations


def is_member(
    z: Sequence[Number], rho: SubmodularOracle, tol: float | None = None, backend: str = "auto"
) -> Membership:
    """Membership in P(rho); on violation reports the most violated set."""
    z, f, tol = _prepare(z, rho, tol)
    if any(v < -tol for v in z):
        raise ValueError("is_member expects a nonnegative vector")
    best, mask = _slack_minimizer(z, rho, f, tol, _backend(rho, backend))
    member = best >= -tol
    return Membership(member, best, None if member else frozenset(items_of(mask)))


def max_tight_set(
    z: Sequence[Number], rho: SubmodularOracle, tol: float | None = None, backend: str = "auto"
) -> TightSetResult:
    """Unique maximal minimizer of rho(S) - z(S); empty when no nonempty set is tight."""
    z, f, tol = _prepare(z, rho, tol)
    best, mask = _slack_minimizer(z, rho, f, tol, _backend(rho, backend))
    if best < -tol:
        raise NotInPolytope(frozenset(items_of(mask)), best)
    cert = frozenset(items_of(mask))
    if best > tol:
        return TightSetResult(frozenset(), best, cert)
    return TightSetResult(cert, best, cert)


def active_items(
    x, rho: SubmodularOracle, tol: float | None = None, backend: str = "auto"
) -> frozenset[int]:
    """Items whose consumption can still grow: E minus the maximal tight set.

    ``x`` may be an Allocation, an agent-by-item matrix or an aggregate vector.
    """
    if hasattr(x, "aggregate"):
        z = list(x.aggregate())
    else:
        try:
            rows = [list(r) for r in x]
            z = [sum(col) for col in zip(*rows)]
        except TypeError:
            z = list(x)
    tight = max_tight_set(z, rho, tol=tol, backend=backend)
    return frozenset(range(rho.m)) - tight.set


def max_step(
    z: Sequence[Number],
    gamma: Sequence[Number],
    rho: SubmodularOracle,
    tol: float | None = None,
    backend: str = "auto",
) -> StepResult:
    """Largest alpha with z + alpha * gamma in P(rho), and the sets that become tight.

    The bottleneck is the union of all ratio-minimizing sets, i.e. the new
    maximal tight set restricted to what the step saturates.
    """
    z, f, tol = _prepare(z, rho, tol)
    g = list(gamma)
    if len(g) != rho.m:
        raise ValueError("direction has wrong length")
    if not all(is_exact_value(v) for v in g) or not all(is_exact_value(v) for v in z):
        g = [float(v) for v in g]
        z = [float(v) for v in z]
        f = _float_eval(rho)
        if tol == 0:
            tol = FLOAT_TOL
    else:
        g = [Fraction(v) for v in g]
    if any(v < 0 for v in g) or all(v == 0 for v in g):
        raise ValueError("direction must be nonnegative and nonzero")
    m = rho.m
    backend = _backend(rho, backend)

    if backend == "modular":
        best = None
        mask = 0
        for j in range(m):
            if g[j] > 0:
                r = (f(1 << j) - z[j]) / g[j]
                if best is None or r < best - tol:
                    best, mask = r, 1 << j
                elif r <= best + tol:
                    mask |= 1 << j
                    best = min(best, r)
        # already-tight items join every attaining set at no cost
        for j in range(m):
            if g[j] == 0 and f(1 << j) - z[j] <= tol:
                mask |= 1 << j
    elif backend == "exhaustive":
        tab = _rho_table(rho, f)
        zero = z[0] * 0
        zs = _subset_sums(z, zero)
        gs = _subset_sums(g, g[0] * 0)
        best = None
        for s in range(1, 1 << m):
            if gs[s] > 0:
                r = (tab[s] - zs[s]) / gs[s]
                if best is None or r < best:
                    best = r
        # union of every set attaining the ratio (within tol)
        mask = 0
        for s in range(1, 1 << m):
            if gs[s] > 0 and tab[s] - zs[s] - best * gs[s] <= tol * max(1, abs(gs[s])):
                mask |= s
    elif backend == "fw":
        best, mask = _dinkelbach(z, g, f, m, tol)
    else:
        raise ValueError(f"unknown backend {backend!r}")

    if best < -tol:
        raise NotInPolytope(frozenset(items_of(mask)), best)
    if best <= tol:
        raise DirectionBlocked(
            f"direction uses tight items {sorted(items_of(mask))}; no positive step exists"
        )
    return StepResult(best, frozenset(items_of(mask)))


def _dinkelbach(z, g, f, m, tol, max_iter: int = 1000):
    """Discrete Newton on alpha: minimize rho - z - alpha*gamma until the minimum is 0."""

    def ratio(s: int):
        gs = sum(g[j] for j in items_of(s))
        return (f(s) - sum(z[j] for j in items_of(s))) / gs

    full = (1 << m) - 1
    alpha = ratio(full)
    mask = full
    for _ in range(max_iter):
        def h(s: int, a=alpha):
            return f(s) - sum(z[j] + a * g[j] for j in items_of(s))

        val, s = maximal_minimizer(m, h, tol=tol, backend="fw")
        if val >= -tol or s == 0:
            # alpha is optimal; the maximal minimizer of h collects the bottleneck sets
            if s:
                mask = s
            break
        if sum(g[j] for j in items_of(s)) <= 0:
            break
        new_alpha = ratio(s)
        if new_alpha >= alpha - tol:
            mask = s
            alpha = min(alpha, new_alpha)
            break
        alpha, mask = new_alpha, s
    return alpha, mask
