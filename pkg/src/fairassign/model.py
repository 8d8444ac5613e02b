"""Core data types: instances, submodular oracles, allocations and lotteries.

Items are indexed ``0..m-1`` and item subsets are passed around as integer
bitmasks (bit ``j`` set means item ``j`` is in the set).  Numbers are either
exact (``int``/``Fraction``) or binary floats; an instance carries one kind
throughout and :func:`as_mode` converts between them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Iterable, Sequence, Union

import numpy as np

Number = Union[int, Fraction, float]

GOODS = "goods"
CHORES = "chores"
ORDINAL = "ordinal"

FLOAT_TOL = 1e-9


class InstanceError(ValueError):
    """Raised when an instance or oracle violates its invariants."""


# ---------------------------------------------------------------------------
# numeric helpers


def exact(v: Any) -> Fraction:
    """Convert to an exact rational.  Floats are read through their decimal repr."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        raise TypeError("boolean is not a number")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(repr(v))
    if isinstance(v, str):
        return Fraction(v.strip())
    return Fraction(v)


def convert(v: Any, mode: str) -> Number:
    if mode == "rational":
        return exact(v)
    if mode == "float":
        return float(exact(v)) if isinstance(v, str) else float(v)
    raise ValueError(f"unknown numeric mode {mode!r}")


def is_exact_value(v: Any) -> bool:
    return isinstance(v, (int, Fraction)) and not isinstance(v, bool)


def tolerance(*values: Any) -> float:
    """0 when every value is exact, FLOAT_TOL otherwise."""
    for v in values:
        if isinstance(v, np.ndarray):
            if v.dtype != object or not all(is_exact_value(a) for a in v.flat):
                return FLOAT_TOL
        elif isinstance(v, (list, tuple)):
            if tolerance(*v):
                return FLOAT_TOL
        elif not is_exact_value(v):
            return FLOAT_TOL
    return 0


def number_array(rows: Any, mode: str | None = None) -> np.ndarray:
    """Build a numeric ndarray; object dtype holding Fractions in rational mode."""
    arr = np.array(rows, dtype=object)
    if mode is None:
        mode = "rational" if all(is_exact_value(a) for a in arr.flat) else "float"
    if mode == "float":
        return np.array([float(a) for a in arr.flat], dtype=float).reshape(arr.shape)
    out = np.empty(arr.shape, dtype=object)
    for idx, a in np.ndenumerate(arr):
        out[idx] = exact(a)
    return out


def mask_of(items: Iterable[int]) -> int:
    mask = 0
    for j in items:
        mask |= 1 << int(j)
    return mask


def items_of(mask: int) -> list[int]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


# ---------------------------------------------------------------------------
# submodular oracles

ORACLE_KINDS = ("cardinality", "capacities", "coverage", "table", "laminar")


class SubmodularOracle:
    """Monotone submodular set function on items ``0..m-1``, queried by bitmask.

    Use the ``cardinality``/``capacities``/``coverage``/``table``/``laminar``
    constructors; ``params`` keeps the JSON payload needed to rebuild it.
    """

    def __init__(self, m: int, kind: str, fn: Callable[[int], Number], params: dict):
        if kind not in ORACLE_KINDS:
            raise InstanceError(f"unknown oracle kind {kind!r}")
        self.m = int(m)
        self.kind = kind
        self.params = params
        self.full = (1 << self.m) - 1
        self._fn = lru_cache(maxsize=1 << 16)(fn)

    def value(self, mask: int) -> Number:
        if mask == 0:
            return 0
        return self._fn(mask)

    def __call__(self, items: Iterable[int] | int) -> Number:
        if isinstance(items, int):
            return self.value(items)
        return self.value(mask_of(items))

    def __repr__(self) -> str:
        return f"SubmodularOracle(kind={self.kind!r}, m={self.m})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, SubmodularOracle)
            and self.kind == other.kind
            and self.m == other.m
            and self.params == other.params
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.m))

    @property
    def is_modular(self) -> bool:
        return self.kind in ("cardinality", "capacities")

    @property
    def exact(self) -> bool:
        return all(is_exact_value(self.value(1 << j)) for j in range(self.m)) and is_exact_value(
            self.value(self.full)
        )

    def singleton_values(self) -> list[Number]:
        return [self.value(1 << j) for j in range(self.m)]

    def supplies(self) -> list[Number]:
        """Per-item capacities for modular oracles."""
        if not self.is_modular:
            raise InstanceError(f"{self.kind} oracle has no per-item supply vector")
        return self.singleton_values()

    def as_mode(self, mode: str) -> "SubmodularOracle":
        conv = lambda v: convert(v, mode)  # noqa: E731
        return from_payload(self.m, self.params, conv)

    # -- constructors -----------------------------------------------------

    @classmethod
    def cardinality(cls, m: int) -> "SubmodularOracle":
        return cls(m, "cardinality", popcount, {"kind": "cardinality"})

    @classmethod
    def capacities(cls, s: Sequence[Number]) -> "SubmodularOracle":
        s = tuple(s)
        if any(v < 0 for v in s):
            raise InstanceError("capacities must be nonnegative")
        zero = 0 if all(is_exact_value(v) for v in s) else 0.0

        def fn(mask: int) -> Number:
            return sum((s[j] for j in items_of(mask)), zero)

        return cls(len(s), "capacities", fn, {"kind": "capacities", "s": list(s)})

    @classmethod
    def coverage(
        cls, cover: Sequence[Iterable[int]], weights: Sequence[Number] | None = None
    ) -> "SubmodularOracle":
        """rho(S) = total weight of the union of the element sets ``cover[j]``, j in S."""
        cover = tuple(frozenset(c) for c in cover)
        universe = sorted(set().union(*cover)) if cover else []
        if weights is None:
            weights = {u: 1 for u in universe}
        elif isinstance(weights, dict):
            weights = dict(weights)
        else:
            weights = {u: w for u, w in enumerate(weights)}
        if any(weights.get(u, 1) < 0 for u in universe):
            raise InstanceError("coverage weights must be nonnegative")
        zero = 0 if all(is_exact_value(w) for w in weights.values()) else 0.0

        def fn(mask: int) -> Number:
            covered: set[int] = set()
            for j in items_of(mask):
                covered |= cover[j]
            return sum((weights.get(u, 1) for u in covered), zero)

        payload = {"kind": "coverage", "cover": [sorted(c) for c in cover]}
        if any(weights.get(u, 1) != 1 for u in universe):
            payload["weights"] = {str(u): weights[u] for u in sorted(weights)}
        return cls(len(cover), "coverage", fn, payload)

    @classmethod
    def table(
        cls, m: int, values: dict[int, Number], check: bool = True
    ) -> "SubmodularOracle":
        """Explicit table over all ``2^m`` bitmasks.  Validated exhaustively for m <= 12."""
        full = (1 << m) - 1
        tab = {int(k): v for k, v in values.items()}
        missing = [k for k in range(1, full + 1) if k not in tab]
        if missing:
            raise InstanceError(f"table oracle missing {len(missing)} sets (first: {missing[0]})")
        if tab.get(0, 0) != 0:
            raise InstanceError("table oracle must have rho(empty) = 0")
        tab[0] = tab.get(0, 0)

        oracle = cls(m, "table", tab.__getitem__, {
            "kind": "table", "sets": {str(k): tab[k] for k in range(1, full + 1)}
        })
        if check and m <= 12:
            problems = check_submodular(oracle)
            if problems:
                raise InstanceError(f"table oracle rejected: {problems[0]}")
        return oracle

    @classmethod
    def laminar(
        cls,
        m: int,
        family: Sequence[tuple[Iterable[int], Number]],
        s: Sequence[Number] | None = None,
    ) -> "SubmodularOracle":
        """Rank function of {z : z_j <= s_j, z(L) <= c_L for each L in a laminar family}."""
        sets = [(mask_of(items), cap) for items, cap in family]
        for a, _ in sets:
            for b, _ in sets:
                if a & b and (a | b) not in (a, b):
                    raise InstanceError("laminar family has crossing sets")
        s = tuple(s) if s is not None else (1,) * m
        # children of each set: maximal proper subsets in the family
        order = sorted(range(len(sets)), key=lambda k: popcount(sets[k][0]))
        parent: dict[int, int | None] = {}
        for pos, k in enumerate(order):
            mk = sets[k][0]
            parent[k] = None
            for k2 in order[pos + 1:]:
                mk2 = sets[k2][0]
                if mk2 != mk and (mk & mk2) == mk:
                    parent[k] = k2
                    break
                if mk2 == mk and k2 != k:
                    parent[k] = k2
                    break
        children = {k: [c for c in parent if parent[c] == k] for k in range(len(sets))}
        roots = [k for k in parent if parent[k] is None]
        roots_mask = 0
        for k in roots:
            roots_mask |= sets[k][0]

        def rank(k: int, mask: int) -> Number:
            mk, cap = sets[k]
            inner = mask & mk
            covered = 0
            total = 0
            for c in children[k]:
                covered |= sets[c][0]
                total = total + rank(c, inner)
            for j in items_of(inner & ~covered):
                total = total + s[j]
            return min(cap, total)

        def fn(mask: int) -> Number:
            total = sum(rank(k, mask) for k in roots)
            for j in items_of(mask & ~roots_mask):
                total = total + s[j]
            return total

        payload = {
            "kind": "laminar",
            "family": [{"items": items_of(mk), "cap": cap} for mk, cap in sets],
            "s": list(s),
        }
        return cls(m, "laminar", fn, payload)


def from_payload(m: int, payload: dict | None, conv: Callable[[Any], Number] = exact) -> SubmodularOracle:
    """Rebuild an oracle from its JSON payload (``rho`` field of an instance file)."""
    payload = payload or {"kind": "cardinality"}
    kind = payload.get("kind", "cardinality")
    if kind == "cardinality":
        return SubmodularOracle.cardinality(m)
    if kind == "capacities":
        s = [conv(v) for v in payload["s"]]
        if len(s) != m:
            raise InstanceError(f"capacities has {len(s)} entries for {m} items")
        return SubmodularOracle.capacities(s)
    if kind == "coverage":
        cover = payload["cover"]
        if len(cover) != m:
            raise InstanceError(f"coverage has {len(cover)} sets for {m} items")
        weights = payload.get("weights")
        if weights is not None:
            weights = {int(k): conv(v) for k, v in weights.items()}
        return SubmodularOracle.coverage(cover, weights)
    if kind == "table":
        values = {int(k): conv(v) for k, v in payload["sets"].items()}
        return SubmodularOracle.table(m, values)
    if kind == "laminar":
        family = [(f["items"], conv(f["cap"])) for f in payload["family"]]
        s = payload.get("s")
        return SubmodularOracle.laminar(m, family, [conv(v) for v in s] if s is not None else None)
    raise InstanceError(f"unknown oracle kind {kind!r}")


def check_submodular(oracle: SubmodularOracle) -> list[str]:
    """Exhaustive normalization, monotonicity and submodularity check.

    Uses the local form f(S+a) + f(S+b) >= f(S+a+b) + f(S), which is
    equivalent to submodularity.
    """
    m = oracle.m
    f = oracle.value
    tol = tolerance(*(f(k) for k in range(1 << m)))
    problems = []
    if f(0) != 0:
        problems.append("rho(empty) != 0")
    for mask in range(1 << m):
        fs = f(mask)
        if fs < -tol:
            problems.append(f"negative value at {items_of(mask)}")
        for a in range(m):
            ba = 1 << a
            if mask & ba:
                continue
            fa = f(mask | ba)
            if fa < fs - tol:
                problems.append(f"not monotone: rho({items_of(mask | ba)}) < rho({items_of(mask)})")
            for b in range(a + 1, m):
                bb = 1 << b
                if mask & bb:
                    continue
                if fa + f(mask | bb) < f(mask | ba | bb) + fs - tol:
                    problems.append(
                        f"not submodular at S={items_of(mask)}, a={a}, b={b}"
                    )
    return problems


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class CardinalInstance:
    """Utility (goods) or disutility (chores) matrix plus a feasibility oracle."""

    values: tuple[tuple[Number, ...], ...]
    mode: str = GOODS
    rho: SubmodularOracle | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(tuple(r) for r in self.values))
        if self.rho is None:
            object.__setattr__(self, "rho", SubmodularOracle.cardinality(self.n_items))

    @property
    def n_agents(self) -> int:
        return len(self.values)

    @property
    def n_items(self) -> int:
        return len(self.values[0]) if self.values else 0

    def matrix(self) -> np.ndarray:
        return number_array(self.values)

    def orders(self) -> tuple[tuple[int, ...], ...]:
        return tuple(induced_order(row, self.mode) for row in self.values)

    def ordinal(self) -> "OrdinalInstance":
        return OrdinalInstance(self.orders(), self.n_items, self.rho)

    def as_mode(self, mode: str) -> "CardinalInstance":
        vals = tuple(tuple(convert(v, mode) for v in row) for row in self.values)
        return CardinalInstance(vals, self.mode, self.rho.as_mode(mode))


@dataclass(frozen=True)
class OrdinalInstance:
    """Strict preference orders, most preferred item first."""

    orders: tuple[tuple[int, ...], ...]
    n_items: int
    rho: SubmodularOracle | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "orders", tuple(tuple(int(j) for j in o) for o in self.orders))
        if self.rho is None:
            object.__setattr__(self, "rho", SubmodularOracle.cardinality(self.n_items))

    @property
    def n_agents(self) -> int:
        return len(self.orders)


def induced_order(row: Sequence[Number], mode: str = GOODS) -> tuple[int, ...]:
    """Strict order consistent with a value row; ties go to the lower item index.

    Goods are ranked by descending utility, chores by ascending disutility.
    """
    if mode == CHORES:
        return tuple(sorted(range(len(row)), key=lambda j: (row[j], j)))
    return tuple(sorted(range(len(row)), key=lambda j: (-row[j], j)))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


def validate(
    instance: CardinalInstance | OrdinalInstance,
    *,
    positive_chores: bool = False,
    unit_singletons: bool = False,
) -> ValidationReport:
    """Report every violated invariant.  Never raises.

    ``positive_chores`` flags zero disutilities (needed for the n-approximate
    efficiency guarantee of chores eating); ``unit_singletons`` flags items
    with rho({j}) < 1 (needed for the Nash welfare bound of eating).
    """
    rep = ValidationReport()
    n = instance.n_agents
    m = instance.n_items
    if n < 1:
        rep.errors.append("instance needs at least one agent")
    if m < 1:
        rep.errors.append("instance needs at least one item")
    if isinstance(instance, CardinalInstance):
        if instance.mode not in (GOODS, CHORES):
            rep.errors.append(f"unknown mode {instance.mode!r}")
        for i, row in enumerate(instance.values):
            if len(row) != m:
                rep.errors.append(f"agent {i} has {len(row)} values, expected {m}")
            for j, v in enumerate(row):
                try:
                    neg = v < 0
                except TypeError:
                    rep.errors.append(f"value ({i},{j}) is not a number")
                    continue
                if neg:
                    rep.errors.append(f"value ({i},{j}) = {v} is negative")
                elif v == 0 and instance.mode == CHORES and positive_chores:
                    rep.warnings.append(
                        f"positive disutility assumption violated at ({i},{j})"
                    )
    else:
        for i, order in enumerate(instance.orders):
            if sorted(order) != list(range(m)):
                rep.errors.append(f"order of agent {i} is not a permutation of the {m} items")
    rho = instance.rho
    if rho is not None and m >= 1:
        if rho.m != m:
            rep.errors.append(f"oracle ground set has {rho.m} items, instance has {m}")
        elif unit_singletons:
            for j, v in enumerate(rho.singleton_values()):
                if v < 1:
                    rep.warnings.append(f"rho({{{j}}}) = {v} < 1")
    return rep


def ensure_valid(instance: CardinalInstance | OrdinalInstance) -> None:
    rep = validate(instance)
    if not rep.ok:
        raise InstanceError("; ".join(rep.errors))


# ---------------------------------------------------------------------------
# allocations and lotteries


@dataclass(frozen=True)
class Allocation:
    """Fractional assignment ``x[i, j]`` with a free-form provenance record."""

    x: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        x = self.x if isinstance(self.x, np.ndarray) else number_array(self.x)
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n_agents(self) -> int:
        return self.x.shape[0]

    @property
    def n_items(self) -> int:
        return self.x.shape[1]

    def aggregate(self) -> np.ndarray:
        return self.x.sum(axis=0)

    def total(self) -> Number:
        return self.x.sum()

    def feasibility(self, rho: SubmodularOracle, tol: float | None = None) -> dict:
        """Row-sum and polymatroid flags, checked via polymatroid membership."""
        from .polymatroid import is_member

        if tol is None:
            tol = tolerance(self.x)
        rows_ok = bool(all(r <= 1 + tol for r in self.x.sum(axis=1)))
        nonneg = bool(all(v >= -tol for v in self.x.flat))
        member = is_member(self.aggregate(), rho, tol=tol)
        return {"nonnegative": nonneg, "rows": rows_ok, "polymatroid": member.member}

    def is_feasible(self, rho: SubmodularOracle, tol: float | None = None) -> bool:
        return all(self.feasibility(rho, tol).values())


@dataclass(frozen=True)
class Lottery:
    """Probability mixture of independent assignments.

    Each entry is ``(assignment, p)`` where ``assignment[i]`` is an item
    index or ``None``.
    """

    entries: tuple[tuple[tuple[int | None, ...], Number], ...]
    n_items: int

    def marginals(self) -> np.ndarray:
        n = len(self.entries[0][0]) if self.entries else 0
        exact_mode = all(is_exact_value(p) for _, p in self.entries)
        zero = Fraction(0) if exact_mode else 0.0
        out = np.full((n, self.n_items), zero, dtype=object if exact_mode else float)
        for pi, p in self.entries:
            for i, j in enumerate(pi):
                if j is not None:
                    out[i, j] = out[i, j] + p
        return out

    def total_probability(self) -> Number:
        return sum(p for _, p in self.entries)

    def is_independent(self, rho: SubmodularOracle) -> bool:
        """Every assignment's item multiset respects rho (modular oracles)."""
        s = rho.supplies()
        for pi, _ in self.entries:
            counts = [0] * self.n_items
            for j in pi:
                if j is not None:
                    counts[j] += 1
            if any(c > sj for c, sj in zip(counts, s)):
                return False
        return True
