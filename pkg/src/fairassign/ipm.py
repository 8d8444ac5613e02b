"""Primal-dual interior point method for log-objective programs.

Solves::

    minimize   -sum_k log(C[k] @ v)
    subject to G @ v <= h,  A @ v == b

with Mehrotra predictor-corrector steps from an infeasible start, so
polytopes without a strict interior (e.g. envy constraints between
identical agents) are fine.  Dense linear algebra; meant for a few hundred
variables at most.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    pass


@dataclass
class IPMResult:
    v: np.ndarray
    z: np.ndarray
    y: np.ndarray
    s: np.ndarray
    objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str


def solve_log_program(*args, **kwargs) -> IPMResult:
    """Minimize -sum_k log(C[k] @ v) subject to G v <= h and A v == b.

    Returns the final (or best) iterate; ``status`` is ``"optimal"`` when the
    scaled primal, dual and complementarity residuals meet the tolerances.
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve(*args, **kwargs)


def _solve(
    C: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    A: np.ndarray | None = None,
    b: np.ndarray | None = None,
    *,
    tol: float = 1e-11,
    dual_tol: float = 1e-9,
    accept: float = 1e-7,
    max_iter: int = 200,
    v0: np.ndarray | None = None,
) -> IPMResult:
    C = np.asarray(C, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    N = C.shape[1]
    if A is None or len(A) == 0:
        A = np.zeros((0, N))
        b = np.zeros(0)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    K, p = G.shape[0], A.shape[0]

    if C.shape[0] and np.any(C.sum(axis=1) <= 0):
        raise SolverError("objective row with no positive coefficient")

    v = np.full(N, 1.0 / max(N, 1)) if v0 is None else np.asarray(v0, dtype=float).copy()
    s = np.maximum(h - G @ v, 1.0)
    z = np.ones(K)
    y = np.zeros(p)

    scale_h = 1.0 + np.max(np.abs(h), initial=0.0)
    scale_b = 1.0 + np.max(np.abs(b), initial=0.0)

    def pieces(v):
        Cv = C @ v
        grad = -C.T @ (1.0 / Cv)
        H = (C.T * (1.0 / Cv**2)) @ C
        return Cv, grad, H

    status = "max_iter"
    it = 0
    best = None  # (merit, it, v, s, z, y)
    stalls = 0
    for it in range(1, max_iter + 1):
        Cv, grad, H = pieces(v)
        r_d = grad + G.T @ z + A.T @ y
        r_p = G @ v + s - h
        r_e = A @ v - b
        mu = float(s @ z) / K if K else 0.0

        pres = max(np.max(np.abs(r_p), initial=0.0) / scale_h, np.max(np.abs(r_e), initial=0.0) / scale_b)
        dres = np.max(np.abs(r_d), initial=0.0) / (1.0 + np.max(np.abs(grad), initial=0.0))
        gap_now = mu * K / max(1.0, C.shape[0])
        merit = max(pres, dres, gap_now)
        if best is None or merit < best[0]:
            best = (merit, it, v.copy(), s.copy(), z.copy(), y.copy())
        if pres <= tol and dres <= dual_tol and gap_now <= tol:
            status = "optimal"
            break

        W = z / s
        M = H + (G.T * W) @ G
        if not np.all(np.isfinite(M)):
            status = "stalled"
            break
        kkt = np.zeros((N + p, N + p))
        kkt[:N, :N] = M
        kkt[:N, N:] = A.T
        kkt[N:, :N] = A
        try:
            lu = np.linalg.cholesky(M + 1e-14 * np.eye(N)) if p == 0 else None
        except (np.linalg.LinAlgError, ValueError):
            lu = None

        def newton(r_c):
            rhs_v = -r_d - G.T @ ((r_c + z * r_p) / s)
            if p == 0 and lu is not None:
                dv = np.linalg.solve(lu.T, np.linalg.solve(lu, rhs_v))
            else:
                rhs = np.concatenate([rhs_v, -r_e])
                try:
                    sol = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    try:
                        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
                    except np.linalg.LinAlgError:
                        sol = np.full(N + p, np.nan)
                dv = sol[:N]
            dy = np.zeros(p) if p == 0 or lu is not None else sol[N:]
            ds = -r_p - G @ dv
            dz = (r_c - z * ds) / s
            return dv, ds, dz, dy

        def max_step(v, dv, ds, dz):
            a = 1.0
            neg = ds < 0
            if np.any(neg):
                a = min(a, float(np.min(-s[neg] / ds[neg])))
            neg = dz < 0
            if np.any(neg):
                a = min(a, float(np.min(-z[neg] / dz[neg])))
            dC = C @ dv
            neg = dC < 0
            if np.any(neg):
                a = min(a, float(np.min(-Cv[neg] / dC[neg])))
            return a

        # predictor
        dv_a, ds_a, dz_a, _ = newton(-s * z)
        a_aff = max_step(v, dv_a, ds_a, dz_a)
        mu_aff = float((s + a_aff * ds_a) @ (z + a_aff * dz_a)) / K if K else 0.0
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        sigma = min(max(sigma, 0.0), 1.0)
        # corrector
        r_c = -s * z + sigma * mu - ds_a * dz_a
        dv, ds, dz, dy = newton(r_c)
        a = min(1.0, 0.99 * max_step(v, dv, ds, dz))
        stalls = stalls + 1 if a < 1e-6 else 0
        if stalls >= 3 or not np.all(np.isfinite(dv)):
            status = "stalled"
            break
        v = v + a * dv
        s = s + a * ds
        z = z + a * dz
        y = y + a * dy
        if not np.all(np.isfinite(v)):
            raise SolverError("non-finite iterate")

    if status != "optimal" and best is not None:
        # numerical trouble near the optimum: fall back to the best iterate seen
        merit, _, v, s, z, y = best
        if merit <= accept:
            status = "optimal"
    Cv = C @ v
    objective = -float(np.sum(np.log(Cv))) if C.shape[0] else 0.0
    r_p = G @ v + s - h
    r_e = A @ v - b
    gap = float(s @ z - z @ r_p - y @ r_e)
    grad = -C.T @ (1.0 / Cv)
    r_d = grad + G.T @ z + A.T @ y
    return IPMResult(
        v=v,
        z=z,
        y=y,
        s=s,
        objective=objective,
        gap=abs(gap),
        primal_residual=float(max(
            np.max(G @ v - h, initial=0.0), np.max(np.abs(r_e), initial=0.0)
        )),
        dual_residual=float(np.max(np.abs(r_d), initial=0.0)),
        iterations=it,
        status=status,
    )
