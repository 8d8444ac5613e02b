"""Simultaneous eating algorithms.

``submodular_eat`` runs the eating process over an arbitrary monotone
submodular feasibility oracle, driven entirely by polymatroid tight-set and
step computations.  ``ps`` is the classic supply-based probabilistic serial
engine, written independently of the polymatroid code; with a capacity
oracle the two must agree exactly.  ``chores_eat`` reuses ``ps`` with
orders ranked by ascending disutility.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .model import (
    CHORES,
    FLOAT_TOL,
    Allocation,
    CardinalInstance,
    InstanceError,
    Number,
    OrdinalInstance,
    SubmodularOracle,
    convert,
    ensure_valid,
    induced_order,
    mask_of,
    number_array,
)
from .polymatroid import DirectionBlocked, NotInPolytope, max_step, max_tight_set


class EatingError(RuntimeError):
    """The oracle answered inconsistently with monotone submodularity."""


@dataclass(frozen=True)
class Breakpoint:
    alpha: Number
    choices: tuple[int | None, ...]
    gamma: tuple[int, ...]
    tight: frozenset[int]
    rho_tight: Number
    totals: tuple[Number, ...]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "choices": list(self.choices),
            "gamma": list(self.gamma),
            "tight": sorted(self.tight),
            "rho_tight": self.rho_tight,
            "totals": list(self.totals),
        }


@dataclass(frozen=True)
class EatingTrace:
    breakpoints: tuple[Breakpoint, ...]
    z: tuple[Number, ...]
    reason: str
    n_agents: int
    rho_ground: Number

    def tight_chain(self) -> list[frozenset[int]]:
        return [bp.tight for bp in self.breakpoints]

    def is_chain(self) -> bool:
        sets = self.tight_chain()
        values = [bp.rho_tight for bp in self.breakpoints]
        return all(a <= b for a, b in zip(sets, sets[1:])) and all(
            a <= b for a, b in zip(values, values[1:])
        )

    def equal_rate(self, tol: float = 0) -> bool:
        """At every breakpoint all agents still eating have equal totals."""
        for bp in self.breakpoints:
            eating = [bp.totals[i] for i, c in enumerate(bp.choices) if c is not None]
            if eating and max(eating) - min(eating) > tol:
                return False
        return True

    def theta(self) -> list[Number]:
        """Per item: rho of the first tight set containing it, or n if never tight."""
        m = len(self.z)
        theta: list[Number] = [self.n_agents] * m
        seen: frozenset[int] = frozenset()
        for bp in self.breakpoints:
            for j in bp.tight - seen:
                theta[j] = bp.rho_tight
            seen = seen | bp.tight
        return theta

    def rho_chain(self) -> list[Number]:
        """Distinct rho(T_t) values of the nonempty tight sets, in order."""
        out: list[Number] = []
        for bp in self.breakpoints:
            if bp.tight and (not out or bp.rho_tight != out[-1]):
                out.append(bp.rho_tight)
        return out

    def to_dict(self) -> dict:
        return {
            "breakpoints": [bp.to_dict() for bp in self.breakpoints],
            "z": list(self.z),
            "reason": self.reason,
            "n_agents": self.n_agents,
            "rho_ground": self.rho_ground,
        }


def _zero(mode: str) -> Number:
    if mode == "rational":
        return Fraction(0)
    if mode == "float":
        return 0.0
    raise ValueError(f"unknown numeric mode {mode!r}")


def submodular_eat(
    instance: OrdinalInstance,
    rho: SubmodularOracle | None = None,
    mode: str = "rational",
    backend: str = "auto",
) -> tuple[Allocation, EatingTrace]:
    """Eat under a submodular feasibility constraint until everyone is fed or E is tight."""
    ensure_valid(instance)
    rho = rho if rho is not None else instance.rho
    n, m = instance.n_agents, instance.n_items
    if rho.m != m:
        raise InstanceError("oracle ground set does not match the instance")
    zero = _zero(mode)
    one = zero + 1
    tol = 0 if mode == "rational" else FLOAT_TOL
    full = frozenset(range(m))

    x = [[zero] * m for _ in range(n)]
    z = [zero] * m
    t = zero
    tight = max_tight_set(z, rho, backend=backend).set
    breakpoints = []
    while sum(z) < n - tol and tight != full:
        choices = []
        gamma = [0] * m
        for order in instance.orders:
            j = next(j for j in order if j not in tight) if t < one - tol else None
            choices.append(j)
            if j is not None:
                gamma[j] += 1
        if not any(gamma):
            break
        try:
            step = max_step(z, gamma, rho, backend=backend)
        except (DirectionBlocked, NotInPolytope) as exc:
            raise EatingError(f"oracle inconsistent during step: {exc}") from exc
        alpha = min(convert(step.alpha, mode), one - t)
        for i, j in enumerate(choices):
            if j is not None:
                x[i][j] += alpha
        for j in range(m):
            if gamma[j]:
                z[j] += alpha * gamma[j]
        t += alpha
        try:
            new_tight = max_tight_set(z, rho, backend=backend).set
        except NotInPolytope as exc:
            raise EatingError(f"step left the polytope: {exc}") from exc
        if not tight <= new_tight:
            raise EatingError(
                f"tight set shrank from {sorted(tight)} to {sorted(new_tight)}"
            )
        tight = new_tight
        breakpoints.append(Breakpoint(
            alpha=alpha,
            choices=tuple(choices),
            gamma=tuple(gamma),
            tight=tight,
            rho_tight=convert(rho.value(mask_of(tight)), mode),
            totals=tuple(sum(r) for r in x),
        ))

    reason = "all-fed" if t >= one - tol else "ground-set-tight"
    trace = EatingTrace(
        tuple(breakpoints), tuple(z), reason, n, convert(rho.value(rho.full), mode)
    )
    alloc = Allocation(
        number_array(x, mode),
        {"mechanism": "submodular-eat", "mode": mode, "oracle": rho.params},
    )
    return alloc, trace


def ps(
    instance: OrdinalInstance,
    supplies: Sequence[Number] | None = None,
    mode: str = "rational",
    mechanism: str = "ps",
) -> tuple[Allocation, EatingTrace]:
    """Classic probabilistic serial with per-item supplies (default: instance rho's, or 1)."""
    ensure_valid(instance)
    n, m = instance.n_agents, instance.n_items
    if supplies is None:
        supplies = instance.rho.supplies() if instance.rho.is_modular else [1] * m
    if len(supplies) != m:
        raise InstanceError(f"{len(supplies)} supplies for {m} items")
    zero = _zero(mode)
    one = zero + 1
    tol = 0 if mode == "rational" else FLOAT_TOL
    s = [convert(v, mode) for v in supplies]
    left = list(s)
    x = [[zero] * m for _ in range(n)]
    t = zero
    exhausted = frozenset(j for j in range(m) if left[j] <= tol)
    breakpoints = []
    while t < one - tol and len(exhausted) < m:
        choices = [next(j for j in order if j not in exhausted) for order in instance.orders]
        gamma = [0] * m
        for j in choices:
            gamma[j] += 1
        alpha = one - t
        for j in range(m):
            if gamma[j]:
                alpha = min(alpha, left[j] / gamma[j])
        for i, j in enumerate(choices):
            x[i][j] += alpha
        for j in range(m):
            if gamma[j]:
                left[j] -= alpha * gamma[j]
                if left[j] <= tol:
                    left[j] = zero
        t += alpha
        exhausted = frozenset(j for j in range(m) if left[j] <= tol)
        breakpoints.append(Breakpoint(
            alpha=alpha,
            choices=tuple(choices),
            gamma=tuple(gamma),
            tight=exhausted,
            rho_tight=sum((s[j] for j in exhausted), zero),
            totals=tuple(sum(r) for r in x),
        ))

    full = frozenset(range(m))
    reason = "all-fed" if t >= one - tol else "ground-set-tight"
    z = tuple(s[j] - left[j] for j in range(m))
    trace = EatingTrace(tuple(breakpoints), z, reason, n, sum(s, zero))
    alloc = Allocation(
        number_array(x, mode),
        {"mechanism": mechanism, "mode": mode, "supplies": list(s)},
    )
    return alloc, trace


def chores_eat(
    instance: CardinalInstance | OrdinalInstance,
    supplies: Sequence[Number] | None = None,
    mode: str = "rational",
) -> tuple[Allocation, EatingTrace]:
    """Eating for chores: each agent takes its least-disliked remaining chore first."""
    if isinstance(instance, CardinalInstance):
        if instance.mode != CHORES:
            raise InstanceError("chores_eat needs a chores instance")
        ordinal = OrdinalInstance(
            tuple(induced_order(row, CHORES) for row in instance.values),
            instance.n_items,
            instance.rho,
        )
    else:
        ordinal = instance
    return ps(ordinal, supplies, mode, mechanism="chores-eat")


def eat(
    instance: CardinalInstance | OrdinalInstance,
    mode: str = "rational",
    backend: str = "auto",
) -> tuple[Allocation, EatingTrace]:
    """Dispatch: chores instances go to ``chores_eat``, everything else to ``submodular_eat``."""
    if isinstance(instance, CardinalInstance):
        if instance.mode == CHORES:
            return chores_eat(instance, mode=mode)
        instance = instance.ordinal()
    return submodular_eat(instance, mode=mode, backend=backend)
