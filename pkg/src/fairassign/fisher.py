"""Fisher-market allocation with concave separable utilities.

Pipeline: a Nash-welfare reference ``x*`` (:func:`fisher_nsw`), then
:func:`partial_allocation` which hands every agent a piece of some optimal
bundle while keeping (1+eps)-envy-freeness, then :func:`complete_allocation`
which gives away the leftovers through the envy graph.

Utilities are either linear or separable piecewise-linear concave.  For
both forms :func:`oracle_alpha` is exact: it walks the segments of
``alpha -> u(base + alpha * direction)`` instead of bisecting.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .ipm import solve_log_program
from .model import Allocation, InstanceError, Number, convert, exact, is_exact_value
from .nswopt import SolveResult

Bundle = list  # per-item quantities


class FisherError(RuntimeError):
    """An invariant of the allocation procedure was violated."""


@dataclass(frozen=True)
class ConcaveUtility:
    """``linear``: u(b) = w.b.  ``pwl``: u(b) = sum_j f_j(b_j) with concave f_j.

    For item j, ``breaks[j]`` are increasing positive breakpoints and
    ``slopes[j]`` the slopes on the ``len(breaks[j]) + 1`` pieces.
    """

    form: str
    breaks: tuple[tuple[Number, ...], ...]
    slopes: tuple[tuple[Number, ...], ...]

    def __post_init__(self) -> None:
        if self.form not in ("linear", "pwl"):
            raise InstanceError(f"unknown utility form {self.form!r}")
        if len(self.breaks) != len(self.slopes):
            raise InstanceError("breaks and slopes disagree on the item count")
        for j, (b, s) in enumerate(zip(self.breaks, self.slopes)):
            if len(s) != len(b) + 1:
                raise InstanceError(f"item {j}: need len(slopes) == len(breaks) + 1")
            if any(v <= 0 for v in b[:1]) or any(a >= c for a, c in zip(b, b[1:])):
                raise InstanceError(f"item {j}: breaks must be positive and increasing")
            if any(v < 0 for v in s):
                raise InstanceError(f"item {j}: slopes must be nonnegative")
            if any(a < c for a, c in zip(s, s[1:])):
                raise InstanceError(f"item {j}: slopes must be nonincreasing (concavity)")

    @classmethod
    def linear(cls, w: Sequence, conv=exact) -> "ConcaveUtility":
        return cls("linear", tuple(() for _ in w), tuple((conv(v),) for v in w))

    @classmethod
    def pwl(cls, items: Sequence[tuple[Sequence, Sequence]], conv=exact) -> "ConcaveUtility":
        return cls(
            "pwl",
            tuple(tuple(conv(v) for v in b) for b, _ in items),
            tuple(tuple(conv(v) for v in s) for _, s in items),
        )

    @property
    def m(self) -> int:
        return len(self.slopes)

    def item_value(self, j: int, t: Number) -> Number:
        b, s = self.breaks[j], self.slopes[j]
        total = t * 0
        prev = t * 0
        for k, bk in enumerate(b):
            if t <= bk:
                return total + s[k] * (t - prev)
            total += s[k] * (bk - prev)
            prev = bk
        return total + s[-1] * (t - prev)

    def right_slope(self, j: int, t: Number) -> Number:
        return self.slopes[j][bisect_right(self.breaks[j], t)]

    def __call__(self, bundle: Sequence[Number]) -> Number:
        return sum((self.item_value(j, t) for j, t in enumerate(bundle)), bundle[0] * 0)

    def as_mode(self, mode: str) -> "ConcaveUtility":
        return ConcaveUtility(
            self.form,
            tuple(tuple(convert(v, mode) for v in b) for b in self.breaks),
            tuple(tuple(convert(v, mode) for v in s) for s in self.slopes),
        )

    def to_dict(self) -> dict:
        if self.form == "linear":
            return {"form": "linear", "w": [s[0] for s in self.slopes]}
        return {
            "form": "pwl",
            "items": [{"breaks": list(b), "slopes": list(s)} for b, s in zip(self.breaks, self.slopes)],
        }

    @classmethod
    def from_dict(cls, d: dict, conv=exact) -> "ConcaveUtility":
        if d.get("form") == "linear":
            return cls.linear(d["w"], conv)
        if d.get("form") == "pwl":
            return cls.pwl([(it.get("breaks", []), it["slopes"]) for it in d["items"]], conv)
        raise InstanceError(f"unknown utility form {d.get('form')!r}")


@dataclass(frozen=True)
class FisherInstance:
    utilities: tuple[ConcaveUtility, ...]
    supplies: tuple[Number, ...] | None = None

    def __post_init__(self) -> None:
        m = self.n_items
        if any(u.m != m for u in self.utilities):
            raise InstanceError("utilities disagree on the number of items")
        if self.supplies is not None and (
            len(self.supplies) != m or any(s <= 0 for s in self.supplies)
        ):
            raise InstanceError("supplies must be positive, one per item")

    @property
    def n_agents(self) -> int:
        return len(self.utilities)

    @property
    def n_items(self) -> int:
        return self.utilities[0].m if self.utilities else 0

    def supply(self) -> list[Number]:
        return list(self.supplies) if self.supplies is not None else [1] * self.n_items

    def as_mode(self, mode: str) -> "FisherInstance":
        return FisherInstance(
            tuple(u.as_mode(mode) for u in self.utilities),
            tuple(convert(s, mode) for s in self.supply()),
        )

    def to_dict(self) -> dict:
        d = {
            "mode": "fisher",
            "agents": self.n_agents,
            "items": self.n_items,
            "utilities": [u.to_dict() for u in self.utilities],
        }
        if self.supplies is not None:
            d["supplies"] = list(self.supplies)
        return d

    @classmethod
    def from_dict(cls, d: dict, conv=exact) -> "FisherInstance":
        if d.get("mode") != "fisher":
            raise InstanceError("not a Fisher instance")
        utils = tuple(ConcaveUtility.from_dict(u, conv) for u in d["utilities"])
        if "agents" in d and d["agents"] != len(utils):
            raise InstanceError("agent count does not match the utility list")
        if "items" in d and utils and d["items"] != utils[0].m:
            raise InstanceError("item count does not match the utilities")
        sup = d.get("supplies")
        return cls(utils, tuple(conv(v) for v in sup) if sup is not None else None)


# ---------------------------------------------------------------------------
# oracle


def oracle_alpha(
    u: ConcaveUtility, base: Sequence[Number], direction: Sequence[Number], target: Number
) -> Number | None:
    """Smallest alpha >= 0 with u(base + alpha * direction) >= target; None if unreachable."""
    a = base[0] * 0
    v = u(base)
    if v >= target:
        return a
    m = u.m
    events = set()
    for j in range(m):
        if direction[j] > 0:
            for b in u.breaks[j]:
                if b > base[j]:
                    events.add((b - base[j]) / direction[j])
    for e in sorted(events) + [None]:
        # slope of the piece is read at its midpoint so float rounding at a
        # breakpoint cannot pick the neighbouring piece
        t = (a + e) / 2 if e is not None else a + 1
        point = [base[j] + t * direction[j] for j in range(m)]
        slope = sum(
            (direction[j] * u.right_slope(j, point[j]) for j in range(m) if direction[j] > 0),
            a * 0,
        )
        if e is not None:
            reach = v + slope * (e - a)
            if reach >= target:
                return a + (target - v) / slope
            v, a = reach, e
        elif slope > 0:
            return a + (target - v) / slope
    return None


# ---------------------------------------------------------------------------
# Nash-welfare reference


def fisher_nsw(fisher: FisherInstance) -> SolveResult:
    """Maximum Nash welfare allocation of the supplies (no per-agent row limit).

    Each utility piece becomes its own variable capped by the piece length;
    concavity makes the optimum fill pieces in order.
    """
    n, m = fisher.n_agents, fisher.n_items
    supply = [float(s) for s in fisher.supply()]
    pieces = []  # (agent, item, slope, cap)
    for i, u in enumerate(fisher.utilities):
        for j in range(m):
            prev = 0.0
            for k, s in enumerate(u.slopes[j]):
                end = float(u.breaks[j][k]) if k < len(u.breaks[j]) else supply[j]
                end = min(end, supply[j])
                if end > prev:
                    pieces.append((i, j, float(s), end - prev))
                prev = max(prev, end)
    agents = sorted({i for i, _, s, _ in pieces if s > 0})
    excluded = [i for i in range(n) if i not in agents]
    N = len(pieces)
    pos = {i: p for p, i in enumerate(agents)}
    C = np.zeros((len(agents), N))
    for v, (i, j, s, _) in enumerate(pieces):
        if i in pos:
            C[pos[i], v] = s
    for p in range(len(agents)):
        C[p] /= C[p].max()
    rows, rhs = [], []
    for v, (_, _, _, cap) in enumerate(pieces):
        r = np.zeros(N)
        r[v] = -1.0
        rows.append(r)
        rhs.append(0.0)
        r = np.zeros(N)
        r[v] = 1.0
        rows.append(r)
        rhs.append(cap)
    for j in range(m):
        r = np.zeros(N)
        for v, (_, jj, _, _) in enumerate(pieces):
            if jj == j:
                r[v] = 1.0
        rows.append(r)
        rhs.append(supply[j])
    x = np.zeros((n, m))
    res = None
    if agents:
        res = solve_log_program(C, np.array(rows), np.array(rhs))
        w = np.clip(res.v, 0.0, None)
        for v, (i, j, _, _) in enumerate(pieces):
            x[i, j] += w[v]
    util = [float(fisher.utilities[i](list(x[i]))) for i in agents]
    objective = sum(math.log(t) for t in util) if all(t > 0 for t in util) else -math.inf
    return SolveResult(
        x=Allocation(x, {"mechanism": "fisher-nsw"}),
        objective=objective,
        gap=res.gap if res else 0.0,
        kkt_residual=max(res.primal_residual, res.dual_residual) if res else 0.0,
        iterations=res.iterations if res else 0,
        status=res.status if res else "optimal",
        excluded=excluded,
    )


def reference_bundles(
    fisher: FisherInstance, x_star, mode: str = "rational", grid: int = 10**9
) -> list[Bundle]:
    """Turn a float reference allocation into bundles in the requested mode.

    Rational mode rounds every entry down to the ``1/grid`` lattice, rescales
    columns that still exceed supply, and hands each column's leftover to its
    largest holder, so the bundles partition the supply exactly.
    """
    supply = [convert(s, mode) for s in fisher.supply()]
    rows = np.asarray(x_star.x if hasattr(x_star, "x") else x_star, dtype=float)
    out = []
    for row in rows:
        if mode == "rational":
            out.append([Fraction(math.floor(max(float(v), 0.0) * grid), grid) for v in row])
        else:
            out.append([max(float(v), 0.0) for v in row])
    for j, s in enumerate(supply):
        col = sum(r[j] for r in out)
        if col > s:
            for r in out:
                r[j] = r[j] * s / col
        elif mode == "rational" and col < s:
            holder = max(range(len(out)), key=lambda i: (rows[i, j], -i))
            out[holder][j] += s - col
    return out


# ---------------------------------------------------------------------------
# stage one


@dataclass
class PartialState:
    x: list[Bundle]
    y: list[Bundle]
    h: list[int]
    epsilon: Number
    iterations: int = 0
    potential: list[Number] = field(default_factory=list)
    log: list[dict] = field(default_factory=list)
    source: list[Bundle] = field(default_factory=list)


def _scaled(a: Number, b: Bundle) -> Bundle:
    return [a * v for v in b]


def _plus(a: Bundle, b: Bundle) -> Bundle:
    return [p + q for p, q in zip(a, b)]


def _totals(fisher: FisherInstance, mode: str) -> list[Number]:
    full = [convert(s, mode) for s in fisher.supply()]
    return [u(full) for u in fisher.utilities]


def _potential(fisher, x, totals) -> Number:
    return sum(u(x[i]) / totals[i] for i, u in enumerate(fisher.utilities))


def partial_allocation(
    fisher: FisherInstance, x_star: Sequence[Bundle], epsilon, mode: str = "rational"
) -> PartialState:
    """(1+eps)-envy-free partial allocation carved out of the reference bundles.

    The violating pair scanned first is the lowest bundle index, then the lowest
    agent; argmin ties go to the lowest agent.  When the chosen agent already
    owns a piece of that bundle, the new piece is cut before the old one is
    returned.
    """
    fisher = fisher.as_mode(mode)
    eps = convert(epsilon, mode)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    n, m = fisher.n_agents, fisher.n_items
    us = fisher.utilities
    totals = _totals(fisher, mode)
    if any(t <= 0 for t in totals):
        raise InstanceError("every agent needs positive utility for the whole supply")
    y = [[convert(v, mode) for v in row] for row in x_star]
    source = [list(r) for r in y]
    h = []
    x = []
    for i, u in enumerate(us):
        vals = [u(_scaled(Fraction(1, n) if mode == "rational" else 1 / n, yk)) for yk in y]
        # ties go to the bundle with the fewest claimants so far, then the lowest index
        k = max(range(n), key=lambda k: (vals[k], -h.count(k), -k))
        if vals[k] <= 0:
            raise FisherError(f"agent {i} values no reference bundle")
        h.append(k)
        x.append(_scaled(Fraction(1, n) if mode == "rational" else 1 / n, y[k]))
    for k in range(n):
        c = h.count(k)
        frac = Fraction(n - c, n) if mode == "rational" else (n - c) / n
        y[k] = _scaled(frac, y[k])
    state = PartialState(x, y, h, eps, source=source)
    state.potential.append(_potential(fisher, x, totals))
    bound = n**3 / float(eps)
    one = eps * 0 + 1

    while True:
        pair = _find_violation(us, state.x, state.y, eps)
        if pair is None:
            break
        _, ell = pair
        yl = state.y[ell]
        alphas = []
        for i, u in enumerate(us):
            a = oracle_alpha(u, [v * 0 for v in yl], yl, (one + eps) * u(state.x[i]))
            alphas.append(a)
        k = min((i for i in range(n) if alphas[i] is not None), key=lambda i: (alphas[i], i))
        a = alphas[k]
        if not (0 < a < 1):
            raise FisherError(f"split fraction {a} outside (0, 1)")
        old = state.x[k]
        state.x[k] = _scaled(a, yl)
        state.y[ell] = _scaled(one - a, yl)
        state.y[state.h[k]] = _plus(state.y[state.h[k]], old)
        state.log.append({"agent": k, "bundle": ell, "alpha": a, "returned_to": state.h[k]})
        state.h[k] = ell
        state.iterations += 1
        pot = _potential(fisher, state.x, totals)
        rise = pot - state.potential[-1]
        need = eps / n**2
        if rise < need - _slack(mode):
            raise FisherError(f"potential rose by {rise}, expected at least {need}")
        state.potential.append(pot)
        if state.iterations > bound:
            raise FisherError(f"partial allocation exceeded {bound} iterations")
    return state


def _slack(mode: str) -> float:
    return 0 if mode == "rational" else 1e-9


def _find_violation(us, x, y, eps):
    one = eps * 0 + 1
    own = [u(x[i]) for i, u in enumerate(us)]
    for ell, yl in enumerate(y):
        for i, u in enumerate(us):
            if u(yl) > (one + eps) * own[i]:
                return i, ell
    return None


# ---------------------------------------------------------------------------
# envy graph and stage two


@dataclass(frozen=True)
class EnvyGraph:
    n: int
    edges: frozenset[tuple[int, int]]

    def successors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def in_degree(self, j: int) -> int:
        return sum(1 for _, b in self.edges if b == j)

    def find_cycle(self) -> list[int] | None:
        color = [0] * self.n
        stack: list[int] = []

        def dfs(v):
            color[v] = 1
            stack.append(v)
            for w in self.successors(v):
                if color[w] == 1:
                    return stack[stack.index(w):]
                if color[w] == 0:
                    c = dfs(w)
                    if c:
                        return c
            stack.pop()
            color[v] = 2
            return None

        for v in range(self.n):
            if color[v] == 0:
                c = dfs(v)
                if c:
                    return c
        return None

    def is_acyclic(self) -> bool:
        return self.find_cycle() is None


def envy_graph(x: Sequence[Bundle], fisher: FisherInstance) -> EnvyGraph:
    """Edge (i, j) iff u_i(x_j) > u_i(x_i)."""
    us = fisher.utilities
    n = len(x)
    edges = set()
    for i in range(n):
        own = us[i](x[i])
        for j in range(n):
            if j != i and us[i](x[j]) > own:
                edges.add((i, j))
    return EnvyGraph(n, frozenset(edges))


def eliminate_cycles(
    x: Sequence[Bundle], fisher: FisherInstance, log: list | None = None
) -> list[Bundle]:
    """Rotate bundles along envy cycles until the envy graph is acyclic."""
    x = [list(b) for b in x]
    g = envy_graph(x, fisher)
    while True:
        cycle = g.find_cycle()
        if cycle is None:
            return x
        before = len(g.edges)
        moved = [x[cycle[(t + 1) % len(cycle)]] for t in range(len(cycle))]
        for agent, bundle in zip(cycle, moved):
            x[agent] = bundle
        g = envy_graph(x, fisher)
        if len(g.edges) >= before:
            raise FisherError("rotation did not reduce the envy edge count")
        if log is not None:
            log.append({"rotation": cycle})


@dataclass
class CompletionResult:
    x: list[Bundle]
    iterations: int
    rotations: int
    log: list[dict]
    potential: list[Number]

    def allocation(self, provenance: dict | None = None) -> Allocation:
        from .model import number_array

        return Allocation(number_array(self.x), provenance or {"mechanism": "fisher"})


def complete_allocation(
    fisher: FisherInstance, partial: PartialState | Sequence[Bundle], epsilon, mode: str = "rational"
) -> CompletionResult:
    """Hand out every leftover unit while keeping (1+eps)-envy-freeness.

    Each round removes envy cycles, picks the lowest-index unenvied agent and
    feeds it unallocated items in index order until either supply runs out or
    some agent k reaches u_k(x_i) = (1+eps) u_k(x_k).
    """
    fisher = fisher.as_mode(mode)
    eps = convert(epsilon, mode)
    one = eps * 0 + 1
    us = fisher.utilities
    n, m = fisher.n_agents, fisher.n_items
    x = [list(b) for b in (partial.x if isinstance(partial, PartialState) else partial)]
    x = [[convert(v, mode) for v in b] for b in x]
    supply = [convert(s, mode) for s in fisher.supply()]
    totals = _totals(fisher, mode)
    tol = _slack(mode)
    if n > 1 and any(u(x[i]) <= 0 for i, u in enumerate(us)):
        raise FisherError("completion needs every agent to start with positive utility")

    def left() -> list[Number]:
        return [supply[j] - sum(b[j] for b in x) for j in range(m)]

    def cross_potential():
        return sum(us[i](x[k]) / totals[i] for i in range(n) for k in range(n))

    log: list[dict] = []
    potential = [cross_potential()]
    rotations = 0
    iterations = 0
    bound = n**4 / float(eps)
    while any(r > tol for r in left()):
        iterations += 1
        if iterations > bound:
            raise FisherError(f"completion exceeded {bound} iterations")
        rot_log: list = []
        x = eliminate_cycles(x, fisher, rot_log)
        rotations += len(rot_log)
        log.extend(rot_log)
        g = envy_graph(x, fisher)
        sources = [i for i in range(n) if g.in_degree(i) == 0]
        if not sources:
            raise FisherError("acyclic envy graph without an unenvied agent")
        i = sources[0]
        targets = [(one + eps) * us[k](x[k]) for k in range(n)]
        stopped_by = None
        rem = left()
        for j in range(m):
            if rem[j] <= tol:
                continue
            e = [supply[0] * 0] * m
            e[j] = one
            amount = rem[j]
            block = None
            for k in range(n):
                if k == i:
                    continue
                a = oracle_alpha(us[k], x[i], e, targets[k])
                if a is not None and (a < amount or (a == amount and block is None)):
                    amount, block = a, k
            x[i][j] += amount
            log.append({"feed": i, "item": j, "amount": amount})
            if block is not None:
                stopped_by = block
                break
        if stopped_by is not None:
            k = stopped_by
            if abs(us[k](x[i]) - targets[k]) > tol * max(1, abs(targets[k])):
                raise FisherError("feeding stopped away from the (1+eps) envy boundary")
            log.append({"stop": i, "envied_by": k})
        pot = cross_potential()
        if stopped_by is not None and pot - potential[-1] < eps / n**3 - tol:
            raise FisherError(
                f"completion potential rose by {pot - potential[-1]}, expected {eps / n**3}"
            )
        potential.append(pot)
    return CompletionResult(x, iterations, rotations, log, potential)


@dataclass
class FisherRun:
    reference: SolveResult
    partial: PartialState
    completion: CompletionResult

    @property
    def x(self) -> list[Bundle]:
        return self.completion.x


def run_fisher(fisher: FisherInstance, epsilon, mode: str = "rational") -> FisherRun:
    """Reference NSW solve followed by both stages."""
    ref = fisher_nsw(fisher)
    xs = reference_bundles(fisher, ref.x, mode)
    part = partial_allocation(fisher, xs, epsilon, mode)
    comp = complete_allocation(fisher, part, epsilon, mode)
    return FisherRun(ref, part, comp)


def fisher_envy_factor(fisher: FisherInstance, x: Sequence[Bundle]) -> float:
    """max over i != k of u_i(x_k) / u_i(x_i); inf when someone with nothing envies.

    Exact (a Fraction) when the bundles and utilities are exact.
    """
    worst = 1
    for i, u in enumerate(fisher.utilities):
        own = u(x[i])
        for k in range(len(x)):
            if k == i:
                continue
            other = u(x[k])
            if own <= 0:
                if other > 0:
                    return math.inf
                continue
            ratio = other / own if is_exact_value(own) and is_exact_value(other) else float(other) / float(own)
            worst = max(worst, ratio)
    return worst


def fisher_nsw_value(fisher: FisherInstance, x: Sequence[Bundle], agents=None) -> float:
    agents = range(fisher.n_agents) if agents is None else agents
    vals = [float(fisher.utilities[i](list(x[i]))) for i in agents]
    if not vals:
        return 0.0
    if any(v <= 0 for v in vals):
        return 0.0
    return math.exp(sum(math.log(v) for v in vals) / len(vals))
