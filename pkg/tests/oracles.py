"""Independent reference computations for the test suite.

Nothing here calls the package's polymatroid, eating, solver or audit code:
every oracle works by brute force enumeration, grid search or bisection on
plain Python values, so it cannot share a bug with the code under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def subsets(m: int):
    for r in range(m + 1):
        for c in itertools.combinations(range(m), r):
            yield frozenset(c)


def naive_slack_min(z, f, m):
    """min over nonempty S of f(S) - z(S) and the union of all minimizers."""
    best, union = None, frozenset()
    for S in subsets(m):
        if not S:
            continue
        v = f(S) - sum(z[j] for j in S)
        if best is None or v < best:
            best, union = v, S
        elif v == best:
            union = union | S
    return best, union


def naive_member(z, f, m) -> bool:
    return all(f(S) - sum(z[j] for j in S) >= 0 for S in subsets(m))


def naive_tight_set(z, f, m):
    best, union = naive_slack_min(z, f, m)
    return union if best == 0 else frozenset()


def naive_step(z, g, f, m):
    """min over S with g(S) > 0 of (f(S) - z(S)) / g(S), and the union of attaining sets."""
    best, union = None, frozenset()
    for S in subsets(m):
        gs = sum(g[j] for j in S)
        if gs <= 0:
            continue
        r = Fraction(f(S) - sum(z[j] for j in S)) / gs
        if best is None or r < best:
            best, union = r, S
        elif r == best:
            union = union | S
    return best, union


def probe_active(z, f, m, eps=Fraction(1, 10**6)):
    """Items j for which a small push z + eps * e_j stays feasible (exact data)."""
    out = set()
    for j in range(m):
        w = list(z)
        w[j] += eps
        if naive_member(w, f, m):
            out.add(j)
    return frozenset(out)


# ---------------------------------------------------------------------------
# probabilistic serial by event simulation over time


def event_ps(orders, supplies):
    """Classic PS: walk time forward from event to event, exact rationals."""
    n, m = len(orders), len(supplies)
    left = [Fraction(s) for s in supplies]
    x = [[Fraction(0)] * m for _ in range(n)]
    eaten = [Fraction(0)] * n
    while True:
        eaters = {}
        for i in range(n):
            if eaten[i] >= 1:
                continue
            for j in orders[i]:
                if left[j] > 0:
                    eaters.setdefault(j, []).append(i)
                    break
        if not eaters:
            return x
        dt = min(1 - eaten[i] for js in eaters.values() for i in js)
        dt = min([dt] + [left[j] / len(js) for j, js in eaters.items()])
        for j, js in eaters.items():
            for i in js:
                x[i][j] += dt
                eaten[i] += dt
            left[j] -= dt * len(js)


# ---------------------------------------------------------------------------
# Nash welfare on 2 x 2 instances by grid search


def grid_nsw_2x2(u, step=1e-3):
    """Max of log u_1(x_1) + log u_2(x_2) over the 2x2 cardinality polytope.

    Grid over (x11, x21); for fixed first-column entries the best split of
    item 1 under x12 <= 1 - x11, x22 <= 1 - x21, x12 + x22 <= 1 has a closed
    form (a one-dimensional concave maximization), so the grid is only 2-D.
    """
    (a1, b1), (a2, b2) = u
    best = -math.inf
    arg = None
    k = int(round(1 / step))
    for p in range(k + 1):
        x11 = p * step
        for q in range(k + 1 - p):
            x21 = q * step
            A, B = a1 * x11, a2 * x21
            cap1, cap2 = 1 - x11, 1 - x21
            total = min(1.0, cap1 + cap2)
            # choose x12 = c in [max(0, total - cap2), min(cap1, total)]
            lo, hi = max(0.0, total - cap2), min(cap1, total)
            if b1 > 0 and b2 > 0:
                c = (b1 * B + b1 * b2 * total - b2 * A) / (2 * b1 * b2)
            elif b1 > 0:
                c = hi
            else:
                c = lo
            c = min(max(c, lo), hi)
            u1 = A + b1 * c
            u2 = B + b2 * (total - c)
            if u1 <= 0 or u2 <= 0:
                continue
            val = math.log(u1) + math.log(u2)
            if val > best:
                best, arg = val, ((x11, c), (x21, total - c))
    return best, arg


# ---------------------------------------------------------------------------
# concave utilities


def pwl_value(breaks, slopes, t):
    total, prev = 0.0, 0.0
    for b, s in zip(breaks, slopes):
        if t <= b:
            return total + s * (t - prev)
        total += s * (b - prev)
        prev = b
    return total + slopes[-1] * (t - prev)


def bisect_alpha(value, target, hi=1e6, iters=200):
    """Smallest alpha with value(alpha) >= target by bisection; None if unreachable."""
    if value(0.0) >= target:
        return 0.0
    if value(hi) < target:
        return None
    lo = 0.0
    for _ in range(iters):
        mid = (lo + hi) / 2
        if value(mid) >= target:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# envy


def pairwise_envy_edges(values_of, bundles):
    """Edges (i, j) with values_of(i, bundle_j) > values_of(i, bundle_i)."""
    n = len(bundles)
    return {
        (i, j)
        for i in range(n)
        for j in range(n)
        if i != j and values_of(i, bundles[j]) > values_of(i, bundles[i])
    }


def prefix_dominates(a, b, order):
    """True iff b's prefix sums are >= a's along ``order`` with one strict."""
    pa = pb = 0
    strict = False
    for j in order:
        pa += a[j]
        pb += b[j]
        if pb < pa:
            return False
        if pb > pa:
            strict = True
    return strict


# ---------------------------------------------------------------------------
# convex programs through cvxpy (an external solver, independent of the IPM);
# the Pareto bisection below probes plain feasibility LPs with no objective


def cvxpy_nsw(u, rho_value, m, envy=False, caps=None):
    """Optimal sum of logs over the agents with a positive row, or None if infeasible.

    ``rho_value(S)`` gives the polymatroid constraint for every nonempty S;
    ``caps`` replaces those constraints with per-item caps.
    """
    import cvxpy as cp
    import numpy as np

    u = np.asarray(u, dtype=float)
    n = u.shape[0]
    keep = [i for i in range(n) if u[i].max() > 0]
    x = cp.Variable((n, m), nonneg=True)
    cons = [cp.sum(x, axis=1) <= 1]
    if caps is not None:
        cons.append(cp.sum(x, axis=0) <= np.asarray(caps, dtype=float))
    else:
        col = cp.sum(x, axis=0)
        for S in subsets(m):
            if S:
                cons.append(sum(col[j] for j in S) <= float(rho_value(S)))
    if envy:
        for i in range(n):
            for k in range(n):
                if i != k:
                    cons.append(u[i] @ x[i] >= u[i] @ x[k])
    scale = [u[i].max() for i in keep]
    obj = cp.sum([cp.log(u[i] @ x[i] / s) for i, s in zip(keep, scale)])
    prob = cp.Problem(cp.Maximize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return None
    return prob.value + sum(math.log(s) for s in scale)


def bisect_gamma(u, x, rho_value, chores=False, hi=64.0, iters=40):
    """Largest gamma with a feasible y improving every agent by gamma, by bisection.

    Goods: u_i(y_i) >= gamma * u_i(x_i) under rows <= 1 and every subset row
    of the polymatroid.  Chores: gamma * d_i(y_i) <= d_i(x_i) under rows = 1
    and unit chore caps.  Each probe is a pure feasibility LP; returns ``hi``
    when every probe up to ``hi`` is feasible.
    """
    import numpy as np
    from scipy.optimize import linprog

    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    n, m = u.shape
    own = (u * x).sum(axis=1)
    # scale each agent row by its own utility so solver tolerances are relative
    keep = own > 0
    u[keep] = u[keep] / own[keep, None]
    own = np.where(keep, 1.0, 0.0)
    col_rows, col_rhs = [], []
    for S in subsets(m):
        if not S or (chores and len(S) > 1):
            continue
        r = np.zeros((n, m))
        r[:, sorted(S)] = 1
        col_rows.append(r.ravel())
        col_rhs.append(1.0 if chores else float(rho_value(S)))
    agent = [np.kron(np.eye(n)[i], u[i]) for i in range(n)]
    ones = [np.kron(np.eye(n)[i], np.ones(m)) for i in range(n)]

    def feasible(g):
        if chores:
            A = col_rows + [g * a for a in agent]
            b = col_rhs + list(own)
            eq = dict(A_eq=np.array(ones), b_eq=np.ones(n))
        else:
            A = col_rows + ones + [-a for a in agent]
            b = col_rhs + [1.0] * n + list(-g * own)
            eq = {}
        res = linprog(np.zeros(n * m), A_ub=np.array(A), b_ub=np.array(b), bounds=(0, None), method="highs", **eq)
        return res.status == 0

    if feasible(hi):
        return hi
    lo = 1.0 if feasible(1.0) else 0.0
    for _ in range(iters):
        mid = (lo + hi) / 2
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo
