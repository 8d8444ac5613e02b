"""Nash social welfare convex programs over the feasible assignment polytope.

Three programs share one constraint builder:

* ``max_nsw``            -- maximize sum_i log u_i(x_i) over rows <= 1 (or == 1)
                            and aggregate in P(rho);
* ``max_nsw_ef``         -- the same with an envy-freeness inequality for every
                            ordered pair of agents;
* ``max_nsw_restricted`` -- rho replaced by explicit per-item supply caps.

Agents with no positive utility on any item of positive rank are dropped
from the objective and receive the zero bundle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ipm import SolverError, solve_log_program
from .model import (
    GOODS,
    Allocation,
    CardinalInstance,
    InstanceError,
    SubmodularOracle,
    items_of,
)
from .polymatroid import is_member

FULL_MATERIALIZE_LIMIT = 16
FEAS_TOL = 1e-9


@dataclass
class PolytopeDescription:
    n: int
    m: int
    agents: list[int]
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    labels: list[str]
    eq_labels: list[str] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.agents) * self.m

    def var(self, pos: int, j: int) -> int:
        return pos * self.m + j


@dataclass
class SolveResult:
    x: Allocation
    objective: float
    gap: float
    kkt_residual: float
    iterations: int
    status: str
    excluded: list[int] = field(default_factory=list)
    active: list[str] = field(default_factory=list)

    @property
    def nsw(self) -> float:
        """Geometric mean utility over the agents kept in the objective."""
        k = self.x.n_agents - len(self.excluded)
        if k == 0 or not math.isfinite(self.objective):
            return 0.0
        return math.exp(self.objective / k)

    def to_dict(self) -> dict:
        return {
            "x": self.x.x,
            "objective": self.objective,
            "gap": self.gap,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "status": self.status,
            "excluded": self.excluded,
            "active": self.active,
            "provenance": self.x.provenance,
        }


def _as_float(values) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in values], dtype=float)


def reachable_agents(u: np.ndarray, caps: Sequence[float]) -> tuple[list[int], list[int]]:
    keep, drop = [], []
    for i, row in enumerate(u):
        if any(row[j] > 0 and caps[j] > 0 for j in range(len(row))):
            keep.append(i)
        else:
            drop.append(i)
    return keep, drop


def build_polytope(
    u: np.ndarray,
    rho: SubmodularOracle | None = None,
    *,
    row_mode: str = "leq",
    envy: bool = False,
    supply_cap: Sequence[float] | None = None,
    cuts: Sequence[int] | None = None,
) -> PolytopeDescription:
    """Linear description of the feasible region as G v <= h, A v = b.

    Variables are x[i, j] for the agents kept in the objective, row-major.
    With ``supply_cap`` only per-item caps are used; otherwise modular
    oracles contribute singleton caps and other oracles every nonempty set
    (or the explicit ``cuts`` masks for large ground sets).
    """
    n, m = u.shape
    if supply_cap is not None:
        caps = [float(c) for c in supply_cap]
    else:
        caps = [float(rho.value(1 << j)) for j in range(m)]
    agents, excluded = reachable_agents(u, caps)
    k = len(agents)
    N = k * m
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    labels: list[str] = []

    def add(row, val, label):
        rows.append(row)
        rhs.append(val)
        labels.append(label)

    for pos, i in enumerate(agents):
        for j in range(m):
            r = np.zeros(N)
            r[pos * m + j] = -1.0
            add(r, 0.0, f"x[{i},{j}]>=0")

    eq_rows, eq_rhs, eq_labels = [], [], []
    if row_mode not in ("leq", "eq", "none"):
        raise ValueError(f"unknown row mode {row_mode!r}")
    for pos, i in enumerate(agents):
        r = np.zeros(N)
        r[pos * m:(pos + 1) * m] = 1.0
        if row_mode == "leq":
            add(r, 1.0, f"row[{i}]<=1")
        elif row_mode == "eq":
            eq_rows.append(r)
            eq_rhs.append(1.0)
            eq_labels.append(f"row[{i}]==1")

    def set_row(mask: int) -> np.ndarray:
        r = np.zeros(N)
        for j in items_of(mask):
            r[j::m] = 1.0
        return r

    if supply_cap is not None:
        for j in range(m):
            add(set_row(1 << j), caps[j], f"supply[{j}]")
    elif rho.is_modular:
        for j in range(m):
            add(set_row(1 << j), caps[j], f"rho[{j}]")
    else:
        masks = cuts if cuts is not None else range(1, 1 << m)
        for mask in masks:
            add(set_row(mask), float(rho.value(mask)), f"rho{items_of(mask)}")

    if envy:
        for pi, i in enumerate(agents):
            ui = u[i]
            for pk, kk in enumerate(agents):
                if pi == pk:
                    continue
                r = np.zeros(N)
                r[pk * m:(pk + 1) * m] += ui
                r[pi * m:(pi + 1) * m] -= ui
                add(r, 0.0, f"envy[{i}->{kk}]")
            # a dropped agent's bundle is empty, so envy toward it is vacuous

    G = np.array(rows) if rows else np.zeros((0, N))
    A = np.array(eq_rows) if eq_rows else np.zeros((0, N))
    return PolytopeDescription(
        n=n, m=m, agents=agents, G=G, h=np.array(rhs), A=A, b=np.array(eq_rhs),
        labels=labels, eq_labels=eq_labels, excluded=excluded,
    )


def _solve(
    u: np.ndarray,
    poly: PolytopeDescription,
    provenance: dict,
) -> SolveResult:
    n, m = u.shape
    k = len(poly.agents)
    x = np.zeros((n, m))
    if k == 0:
        return SolveResult(Allocation(x, provenance), 0.0, 0.0, 0.0, 0, "optimal", poly.excluded)
    # per-agent normalization leaves the argmax unchanged
    scale = np.array([u[i].max() for i in poly.agents])
    C = np.zeros((k, poly.n_vars))
    for pos, i in enumerate(poly.agents):
        C[pos, pos * m:(pos + 1) * m] = u[i] / scale[pos]
    res = solve_log_program(C, poly.G, poly.h, poly.A, poly.b)
    v = np.clip(res.v, 0.0, None)
    for pos, i in enumerate(poly.agents):
        x[i] = v[pos * m:(pos + 1) * m]
    util = np.array([u[i] @ x[i] for i in poly.agents])
    objective = float(np.sum(np.log(util))) if np.all(util > 0) else -math.inf
    slack = poly.h - poly.G @ v
    active = [lab for lab, sl in zip(poly.labels, slack) if sl <= 1e-7] + list(poly.eq_labels)
    status = res.status
    if status == "optimal" and res.primal_residual > 1e-7:
        status = "infeasible"
    return SolveResult(
        x=Allocation(x, provenance),
        objective=objective,
        gap=res.gap,
        kkt_residual=max(res.dual_residual, res.primal_residual),
        iterations=res.iterations,
        status=status,
        excluded=poly.excluded,
        active=active,
    )


def _prepare(instance: CardinalInstance, rho: SubmodularOracle | None):
    if instance.mode != GOODS:
        raise InstanceError("Nash welfare programs need a goods instance")
    u = _as_float(instance.values)
    if np.any(u < 0):
        raise InstanceError("utilities must be nonnegative")
    return u, rho if rho is not None else instance.rho


def _solve_with_cuts(u, rho, provenance, **kw) -> SolveResult:
    """Materialize rho fully when small; otherwise grow cuts by separation."""
    m = u.shape[1]
    if rho.is_modular or m <= FULL_MATERIALIZE_LIMIT:
        return _solve(u, build_polytope(u, rho, **kw), provenance)
    cuts = [1 << j for j in range(m)] + [(1 << m) - 1]
    for _ in range(200):
        res = _solve(u, build_polytope(u, rho, cuts=cuts, **kw), provenance)
        mem = is_member(list(res.x.aggregate()), rho, tol=FEAS_TOL)
        if mem.member:
            return res
        mask = sum(1 << j for j in mem.violated)
        if mask in cuts:
            return res
        cuts.append(mask)
    res.status = "cut_limit"
    return res


def max_nsw(
    instance: CardinalInstance,
    rho: SubmodularOracle | None = None,
    row_mode: str = "leq",
) -> SolveResult:
    """Maximum Nash welfare over the feasible assignment polytope."""
    u, rho = _prepare(instance, rho)
    prov = {"mechanism": "max-nsw", "row_mode": row_mode, "oracle": rho.params}
    if row_mode == "eq" and float(rho.value(rho.full)) < instance.n_agents - 1e-12:
        return _infeasible(u, prov)
    try:
        return _solve_with_cuts(u, rho, prov, row_mode=row_mode)
    except SolverError:
        return _infeasible(u, prov, status="solver_error")


def max_nsw_ef(
    instance: CardinalInstance,
    rho: SubmodularOracle | None = None,
    row_mode: str = "leq",
) -> SolveResult:
    """Maximum Nash welfare among envy-free feasible assignments."""
    u, rho = _prepare(instance, rho)
    prov = {"mechanism": "max-nsw-ef", "row_mode": row_mode, "oracle": rho.params}
    if row_mode == "eq" and float(rho.value(rho.full)) < instance.n_agents - 1e-12:
        return _infeasible(u, prov)
    try:
        return _solve_with_cuts(u, rho, prov, row_mode=row_mode, envy=True)
    except SolverError:
        return _infeasible(u, prov, status="solver_error")


def max_nsw_restricted(
    instance: CardinalInstance,
    supply_cap: Sequence[float],
    row_mode: str = "leq",
) -> SolveResult:
    """Maximum Nash welfare with per-item supply caps in place of rho."""
    if instance.mode != GOODS:
        raise InstanceError("Nash welfare programs need a goods instance")
    u = _as_float(instance.values)
    caps = [float(c) for c in supply_cap]
    if len(caps) != u.shape[1] or any(c < 0 for c in caps):
        raise InstanceError("supply caps must be a nonnegative per-item vector")
    prov = {"mechanism": "max-nsw-restricted", "row_mode": row_mode, "caps": caps}
    return _solve(u, build_polytope(u, row_mode=row_mode, supply_cap=caps), prov)


def _infeasible(u: np.ndarray, prov: dict, status: str = "infeasible") -> SolveResult:
    return SolveResult(
        Allocation(np.zeros(u.shape), prov), -math.inf, math.inf, math.inf, 0, status
    )


def nsw_value(u, x, agents: Sequence[int] | None = None) -> float:
    """Geometric mean of u_i(x_i) over ``agents`` (default: all)."""
    u = _as_float(u) if not isinstance(u, np.ndarray) or u.dtype == object else u
    x = np.array([[float(v) for v in row] for row in np.asarray(x)])
    agents = range(u.shape[0]) if agents is None else agents
    util = [float(u[i] @ x[i]) for i in agents]
    if not util:
        return 0.0
    if any(w <= 0 for w in util):
        return 0.0
    return math.exp(sum(math.log(w) for w in util) / len(util))
