"""Certificates for fractional assignments.

Envy factors and stochastic-dominance envy are evaluated exactly when the
inputs are exact.  Pareto questions are linear programs over the feasible
assignment polytope, solved with HiGHS through :func:`scipy.optimize.linprog`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .model import (
    CHORES,
    GOODS,
    Allocation,
    InstanceError,
    CardinalInstance,
    SubmodularOracle,
    induced_order,
    is_exact_value,
    items_of,
)
from .nswopt import SolveResult
from .polymatroid import is_member

WITNESS_THRESHOLD = 1e-8
SCHEMA = 1


def _matrix(x) -> list[list]:
    mat = x.x if isinstance(x, Allocation) else x
    return [list(r) for r in mat]


def _values(values) -> list[list]:
    if isinstance(values, CardinalInstance):
        return [list(r) for r in values.values]
    return [list(r) for r in values]


def bundle_values(values, x) -> list[list]:
    """V[i][k] = value of agent i for agent k's bundle."""
    u = _values(values)
    x = _matrix(x)
    return [[sum((a * b for a, b in zip(ui, xk)), 0 * ui[0]) for xk in x] for ui in u]


# ---------------------------------------------------------------------------
# envy


@dataclass(frozen=True)
class EnvyResult:
    passed: bool
    factor: float
    worst_pair: tuple[int, int] | None


def ef_factor(x, values, mode: str = GOODS) -> tuple[float, tuple[int, int] | None]:
    """Smallest alpha for which ``x`` is alpha-envy-free, with the pair attaining it.

    Goods: max of u_i(x_k)/u_i(x_i); chores: max of d_i(x_i)/d_i(x_k).  A zero
    denominator with a positive numerator gives infinity.
    """
    V = bundle_values(values, x)
    n = len(V)
    worst, pair = 1.0, None
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            num, den = (V[i][k], V[i][i]) if mode != CHORES else (V[i][i], V[i][k])
            if den <= 0:
                if num > 0:
                    return math.inf, (i, k)
                continue
            r = float(Fraction(num) / Fraction(den)) if is_exact_value(num) and is_exact_value(den) else float(num) / float(den)
            if r > worst:
                worst, pair = r, (i, k)
    return worst, pair


def check_envy(x, values, alpha, mode: str = GOODS) -> EnvyResult:
    """alpha-EF test on every ordered pair; exact for exact inputs."""
    V = bundle_values(values, x)
    n = len(V)
    exact_in = is_exact_value(alpha) and all(is_exact_value(v) for r in V for v in r)
    a = Fraction(alpha) if exact_in else float(alpha)
    passed = True
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            if mode == CHORES:
                ok = V[i][i] <= a * V[i][k]
            else:
                ok = a * V[i][i] >= V[i][k]
            if not ok:
                passed = False
    factor, pair = ef_factor(x, values, mode)
    return EnvyResult(passed, factor, pair)


def check_sd_envy(x, orders: Sequence[Sequence[int]], tol: float | None = None) -> list[tuple[int, int]]:
    """Pairs (i, k) where x_k stochastically dominates x_i under agent i's order."""
    x = _matrix(x)
    exact_in = all(is_exact_value(v) for r in x for v in r)
    if tol is None:
        tol = 0 if exact_in else 1e-12
    n = len(x)
    out = []
    for i in range(n):
        order = orders[i]
        for k in range(n):
            if k == i:
                continue
            pi = pk = 0
            dominated, strict = True, False
            for j in order:
                pi += x[i][j]
                pk += x[k][j]
                if pk < pi - tol:
                    dominated = False
                    break
                if pk > pi + tol:
                    strict = True
            if dominated and strict:
                out.append((i, k))
    return out


# ---------------------------------------------------------------------------
# feasible region as LP rows


def feasible_region(
    n: int,
    m: int,
    rho: SubmodularOracle,
    mode: str = GOODS,
    cuts: Sequence[int] | None = None,
):
    """(A_ub, b_ub, A_eq, b_eq) over y[i, j] flattened row-major.

    Goods: rows <= 1 and aggregate in P(rho).  Chores: every agent takes a
    full unit and each chore respects its singleton capacity.
    """
    N = n * m
    if mode == CHORES and sum(float(rho.value(1 << j)) for j in range(m)) < n:
        raise InstanceError("a chores instance needs total capacity of at least one unit per agent")
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for i in range(n):
        r = np.zeros(N)
        r[i * m:(i + 1) * m] = 1.0
        (A_eq if mode == CHORES else A_ub).append(r)
        (b_eq if mode == CHORES else b_ub).append(1.0)

    def set_row(mask):
        r = np.zeros(N)
        for j in items_of(mask):
            r[j::m] = 1.0
        return r

    if mode == CHORES or rho.is_modular:
        masks = [1 << j for j in range(m)]
    elif cuts is not None:
        masks = list(cuts)
    else:
        masks = range(1, 1 << m)
    for mask in masks:
        A_ub.append(set_row(mask))
        b_ub.append(float(rho.value(mask)))
    return (
        np.array(A_ub) if A_ub else None,
        np.array(b_ub) if b_ub else None,
        np.array(A_eq) if A_eq else None,
        np.array(b_eq) if b_eq else None,
    )


def _solve_lp(c, A_ub, b_ub, A_eq, b_eq, n, m, rho, mode, extra_ub=None, extra_b=None):
    """linprog wrapper that grows polymatroid cuts for large non-modular oracles."""
    N = len(c)
    lazy = mode != CHORES and not rho.is_modular and m > 16
    cuts = [1 << j for j in range(m)] + [(1 << m) - 1] if lazy else None
    bounds = [(0, None)] * N
    for _ in range(200):
        if lazy:
            A_ub, b_ub, A_eq, b_eq = feasible_region(n, m, rho, mode, cuts)
        blocks = [A_ub] if A_ub is not None else []
        rhs = [b_ub] if b_ub is not None else []
        pad = N - n * m
        if blocks:
            blocks = [np.hstack([blocks[0], np.zeros((blocks[0].shape[0], pad))])]
        if extra_ub is not None:
            blocks.append(extra_ub)
            rhs.append(extra_b)
        Aeq = np.hstack([A_eq, np.zeros((A_eq.shape[0], pad))]) if A_eq is not None else None
        res = linprog(
            c,
            A_ub=np.vstack(blocks) if blocks else None,
            b_ub=np.concatenate(rhs) if rhs else None,
            A_eq=Aeq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
        )
        if not lazy or res.status != 0:
            return res
        y = res.x[: n * m].reshape(n, m)
        mem = is_member(list(np.clip(y.sum(axis=0), 0, None)), rho, tol=1e-9)
        if mem.member:
            return res
        cuts.append(sum(1 << j for j in mem.violated))
    return res


@dataclass
class ParetoResult:
    """``gamma_star``: supremum of factors by which some feasible y dominates x.

    With a fixed ``gamma`` the witness LP optimum and its witness are also
    reported; ``dominated`` is True when the optimum exceeds the threshold.
    """

    gamma_star: float
    unbounded: bool
    gamma: float | None = None
    optimum: float | None = None
    dominated: bool | None = None
    witness: np.ndarray | None = None
    status: str = "ok"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["witness"] = None if self.witness is None else self.witness.tolist()
        return d


def pareto_gap(
    x,
    instance: CardinalInstance,
    rho: SubmodularOracle | None = None,
    gamma: float | None = None,
) -> ParetoResult:
    """Largest improvement factor over ``x`` and, for a fixed gamma, a witness search.

    Goods: maximize t with u_i(y_i) >= t u_i(x_i).  Chores: minimize lam with
    d_i(y_i) <= lam d_i(x_i), so the factor is 1/lam.  The fixed-gamma LP is
    max sum_i s_i with the improvement inequalities shifted by s_i >= 0.
    """
    rho = rho if rho is not None else instance.rho
    mode = instance.mode
    u = np.array([[float(v) for v in r] for r in instance.values])
    xm = np.array([[float(v) for v in r] for r in _matrix(x)])
    n, m = u.shape
    own = np.einsum("ij,ij->i", u, xm)
    A_ub, b_ub, A_eq, b_eq = feasible_region(n, m, rho, mode)
    N = n * m

    def agent_row(i, extra):
        r = np.zeros(N + extra)
        r[i * m:(i + 1) * m] = u[i]
        return r

    # supremum factor
    if mode == CHORES:
        # minimize lam:  d_i . y_i - lam * d_i(x_i) <= 0
        rows = [agent_row(i, 1) for i in range(n)]
        for i in range(n):
            rows[i][N] = -own[i]
        c = np.zeros(N + 1)
        c[N] = 1.0
        res = _solve_lp(c, A_ub, b_ub, A_eq, b_eq, n, m, rho, mode, np.array(rows), np.zeros(n))
        lam = res.fun if res.status == 0 else math.nan
        unbounded = res.status == 0 and lam <= 1e-12
        gstar = math.inf if unbounded else (1.0 / lam if res.status == 0 else math.nan)
    else:
        pos = [i for i in range(n) if own[i] > 0]
        if not pos:
            reach = any(u[i, j] > 0 and float(rho.value(1 << j)) > 0 for i in range(n) for j in range(m))
            gstar, unbounded = (math.inf, True) if reach else (1.0, False)
        else:
            rows = []
            for i in pos:
                r = -agent_row(i, 1)
                r[N] = own[i]
                rows.append(r)
            c = np.zeros(N + 1)
            c[N] = -1.0
            res = _solve_lp(c, A_ub, b_ub, A_eq, b_eq, n, m, rho, mode, np.array(rows), np.zeros(len(pos)))
            gstar = -res.fun if res.status == 0 else math.nan
            unbounded = False
    out = ParetoResult(gamma_star=gstar, unbounded=unbounded)
    if gamma is None:
        return out

    g = float(gamma)
    # witness LP: max sum s
    rows, rhs = [], []
    for i in range(n):
        r = np.zeros(N + n)
        if mode == CHORES:
            r[i * m:(i + 1) * m] = g * u[i]
            r[N + i] = 1.0
            rhs.append(own[i])
        else:
            r[i * m:(i + 1) * m] = -u[i]
            r[N + i] = 1.0
            rhs.append(-g * own[i])
        rows.append(r)
    c = np.zeros(N + n)
    c[N:] = -1.0
    # slack variables are bounded so the LP stays compact
    bound_rows = []
    for i in range(n):
        r = np.zeros(N + n)
        r[N + i] = 1.0
        bound_rows.append(r)
    cap = 1.0 + float(np.max(np.abs(u), initial=0.0)) * max(1.0, float(rho.value(rho.full)))
    res = _solve_lp(
        c, A_ub, b_ub, A_eq, b_eq, n, m, rho, mode,
        np.array(rows + bound_rows), np.array(rhs + [cap] * n),
    )
    out.gamma = g
    if res.status == 2:
        out.optimum, out.dominated, out.status = 0.0, False, "infeasible"
    elif res.status != 0:
        out.status = f"lp-status-{res.status}"
    else:
        out.optimum = float(-res.fun)
        out.dominated = out.optimum > WITNESS_THRESHOLD
        out.witness = res.x[:N].reshape(n, m)
    return out


@dataclass
class ChoresCertificate:
    passed: bool | None
    skipped: bool
    notice: str
    pareto: ParetoResult | None = None


def chores_pareto_certificate(
    x, instance: CardinalInstance, gamma: float | None = None
) -> ChoresCertificate:
    """No feasible assignment improves every agent's disutility by a factor above n."""
    if instance.mode != CHORES:
        raise ValueError("chores certificate needs a chores instance")
    if any(v <= 0 for r in instance.values for v in r):
        return ChoresCertificate(None, True, "zero disutilities present; guarantee not claimed")
    g = instance.n_agents if gamma is None else gamma
    res = pareto_gap(x, instance, gamma=g)
    return ChoresCertificate(res.dominated is False, False, f"witness search at gamma={g}", res)


# ---------------------------------------------------------------------------
# welfare


def utilities(values, x) -> list:
    V = bundle_values(values, x)
    return [V[i][i] for i in range(len(V))]


def nsw(x, values, agents: Sequence[int] | None = None) -> float:
    """Geometric mean of u_i(x_i) over ``agents`` (default all); 0 if any is 0."""
    ut = [float(v) for v in utilities(values, x)]
    agents = range(len(ut)) if agents is None else agents
    vals = [ut[i] for i in agents]
    if not vals:
        return 0.0
    if any(v <= 0 for v in vals):
        return 0.0
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def nsw_ratio(x, reference: SolveResult, values) -> float:
    """NSW(x) / NSW(reference) over the agents the reference kept."""
    n = len(_values(values))
    agents = [i for i in range(n) if i not in set(reference.excluded)]
    ref = nsw(reference.x, values, agents)
    if ref <= 0:
        return 1.0
    return nsw(x, values, agents) / ref


def utilitarian_welfare(x, values) -> float:
    return float(sum(float(v) for v in utilities(values, x)))


# ---------------------------------------------------------------------------
# trace-level properties


def log_chain_slack(p: Sequence) -> float:
    """ln(p_k/p_1) - sum_{t>=2} (p_t - p_{t-1})/p_t; nonnegative for increasing positive p."""
    p = [float(v) for v in p]
    if len(p) < 2:
        return 0.0
    s = sum((b - a) / b for a, b in zip(p, p[1:]))
    return math.log(p[-1] / p[0]) - s


def theta_violations(trace, values, y) -> list[tuple[int, int]]:
    """Pairs (i, j) breaking u_i(y_i) >= u_ij * theta_j / n (exact for exact data)."""
    u = _values(values)
    ut = utilities(u, y)
    theta = trace.theta()
    n = trace.n_agents
    bad = []
    for i in range(len(u)):
        for j in range(len(theta)):
            lhs = ut[i] * n
            rhs = u[i][j] * theta[j]
            if lhs < rhs:
                bad.append((i, j))
    return bad


def welfare_bound_terms(trace, values, y, x) -> tuple[float, float, float]:
    """(mean ratio, sum_j z_j/theta_j, ln(min(n, rho(E))) + 2) for a comparison x.

    Agents with u_i(y_i) = 0 are skipped.
    """
    u = _values(values)
    uy = [float(v) for v in utilities(u, y)]
    ux = [float(v) for v in utilities(u, x)]
    n = trace.n_agents
    mean = sum(ux[i] / uy[i] for i in range(n) if uy[i] > 0) / n
    theta = [float(t) for t in trace.theta()]
    xm = _matrix(x)
    z = [sum(float(r[j]) for r in xm) for j in range(len(theta))]
    mid = sum(zj / tj for zj, tj in zip(z, theta) if tj > 0)
    bound = math.log(min(n, float(trace.rho_ground))) + 2
    return mean, mid, bound


# ---------------------------------------------------------------------------
# report


@dataclass
class AuditReport:
    ef_factor: float
    ef_pair: tuple[int, int] | None
    sd_envy_pairs: list[tuple[int, int]]
    pareto: dict | None
    nsw: float | None
    nsw_ratio: float | None
    utilitarian_welfare: float
    checks: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    schema: int = SCHEMA

    @property
    def passed(self) -> bool:
        return all(v for v in self.checks.values() if v is not None)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def assumption_flags(instance: CardinalInstance) -> dict:
    rho = instance.rho
    flags = {"unit_singletons": all(rho.value(1 << j) >= 1 for j in range(rho.m))}
    if instance.mode == CHORES:
        flags["positive_disutilities"] = all(v > 0 for r in instance.values for v in r)
    return flags


def audit_allocation(
    x,
    instance: CardinalInstance,
    reference: SolveResult | None = None,
    alpha=None,
    gamma=None,
) -> AuditReport:
    """Collect every metric; ``alpha`` / ``gamma`` turn the matching checks on."""
    mode = instance.mode
    orders = [induced_order(r, mode) for r in instance.values]
    factor, pair = ef_factor(x, instance, mode)
    sd = check_sd_envy(x, orders)
    flags = assumption_flags(instance)
    checks = {}
    if alpha is not None:
        checks["envy"] = check_envy(x, instance, alpha, mode).passed
    pareto = None
    if gamma is not None:
        if mode == CHORES:
            cert = chores_pareto_certificate(x, instance, gamma)
            checks["pareto"] = cert.passed
            pareto = cert.pareto.to_dict() if cert.pareto else {"skipped": cert.notice}
        else:
            res = pareto_gap(x, instance, gamma=gamma)
            checks["pareto"] = res.dominated is False
            pareto = res.to_dict()
    ratio = nsw_ratio(x, reference, instance) if reference is not None and mode == GOODS else None
    return AuditReport(
        ef_factor=factor,
        ef_pair=pair,
        sd_envy_pairs=sd,
        pareto=pareto,
        nsw=nsw(x, instance) if mode == GOODS else None,
        nsw_ratio=ratio,
        utilitarian_welfare=utilitarian_welfare(x, instance),
        checks=checks,
        flags=flags,
    )
