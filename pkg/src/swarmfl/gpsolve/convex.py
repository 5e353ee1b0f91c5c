"""Log-space convex transform of a GP and a barrier-Newton solver.

With z = log(y), a posynomial g(y) = sum_m d_m prod y^a becomes
log g = logsumexp(A z + b) with b = log d, which is smooth and convex.
The solver follows the central path of

    f0(z) + (1/t) * sum_i -log(-f_i(z))

with damped Newton steps and backtracking line search; monomial equalities
become affine equalities and are eliminated through an orthonormal
nullspace parametrization.  The suboptimality of the returned point is
bounded by m/t (m = number of inequality blocks).  All constraint blocks
are evaluated through one stacked exponent matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import Posynomial
from .program import GpProgram

_Z_LIMIT = 110.0  # |log y| beyond this is treated as divergence to 0/inf


@dataclass
class LseBlock:
    """log-sum-exp(A z + b) for one posynomial."""

    A: np.ndarray  # (terms, nvars)
    b: np.ndarray  # (terms,)

    def value(self, z: np.ndarray) -> float:
        w = self.A @ z + self.b
        m = w.max()
        return float(m + np.log(np.exp(w - m).sum()))

    def value_grad(self, z):
        w = self.A @ z + self.b
        m = w.max()
        e = np.exp(w - m)
        s = e.sum()
        p = e / s
        return float(m + np.log(s)), self.A.T @ p

    def value_grad_hess(self, z):
        w = self.A @ z + self.b
        m = w.max()
        e = np.exp(w - m)
        s = e.sum()
        p = e / s
        g = self.A.T @ p
        H = (self.A.T * p) @ self.A - np.outer(g, g)
        return float(m + np.log(s)), g, H


class _Stacked:
    """All inequality blocks stacked into one matrix for vector evaluation."""

    def __init__(self, blocks: list[LseBlock], nvars: int):
        self.m = len(blocks)
        self.nvars = nvars
        if self.m == 0:
            self.A = np.zeros((0, nvars))
            self.b = np.zeros(0)
            self.block_of_row = np.zeros(0, dtype=int)
            self.starts = np.zeros(0, dtype=int)
            return
        self.A = np.vstack([blk.A for blk in blocks])
        self.b = np.concatenate([blk.b for blk in blocks])
        sizes = [len(blk.b) for blk in blocks]
        self.block_of_row = np.repeat(np.arange(self.m), sizes)
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)

    def values(self, z: np.ndarray) -> np.ndarray:
        """Per-block log-sum-exp values."""
        if self.m == 0:
            return np.zeros(0)
        w = self.A @ z + self.b
        mx = np.maximum.reduceat(w, self.starts)
        e = np.exp(w - mx[self.block_of_row])
        s = np.add.reduceat(e, self.starts)
        return mx + np.log(s)

    def values_probs(self, z: np.ndarray):
        if self.m == 0:
            return np.zeros(0), np.zeros(0)
        w = self.A @ z + self.b
        mx = np.maximum.reduceat(w, self.starts)
        e = np.exp(w - mx[self.block_of_row])
        s = np.add.reduceat(e, self.starts)
        p = e / s[self.block_of_row]
        return mx + np.log(s), p

    def barrier_terms(self, z: np.ndarray):
        """(f_values, sum_i g_i/(-f_i), Hessian of sum_i -log(-f_i)).

        Returns (None, None, None) when some f_i >= 0 (out of domain).
        """
        f, p = self.values_probs(z)
        if self.m == 0:
            return f, np.zeros(self.nvars), np.zeros((self.nvars, self.nvars))
        if (f >= 0).any():
            return None, None, None
        inv = 1.0 / (-f)  # positive
        G = np.zeros((self.m, self.nvars))
        weighted = self.A * p[:, None]
        np.add.reduceat(weighted, self.starts, axis=0, out=G)
        grad = G.T @ inv
        row_w = p * inv[self.block_of_row]
        H = (self.A.T * row_w) @ self.A
        coeff = inv ** 2 - inv  # 1/f^2 - 1/(-f)
        H += (G.T * coeff) @ G
        return f, grad, H


@dataclass
class ConvexGp:
    variables: list[str]
    objective: LseBlock
    constraints: list[LseBlock]
    constraint_names: list[str]
    eq_A: np.ndarray | None = None  # affine equalities eq_A @ z = eq_b
    eq_b: np.ndarray | None = None
    eq_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._stacked = _Stacked(self.constraints, len(self.variables))

    @property
    def nvars(self) -> int:
        return len(self.variables)

    @property
    def stacked(self) -> _Stacked:
        return self._stacked

    def point_to_z(self, point: dict[str, float]) -> np.ndarray:
        return np.log(np.array([point[v] for v in self.variables]))

    def z_to_point(self, z: np.ndarray) -> dict[str, float]:
        return {v: float(np.exp(zi)) for v, zi in zip(self.variables, z)}

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        return self._stacked.values(z)


def _block(posy: Posynomial, index: dict[str, int]) -> LseBlock:
    A = np.zeros((len(posy.terms), len(index)))
    b = np.zeros(len(posy.terms))
    for r, t in enumerate(posy.terms):
        b[r] = np.log(t.coef)
        for v, e in t.exps.items():
            A[r, index[v]] = e
    return LseBlock(A, b)


def to_convex(gp: GpProgram) -> ConvexGp:
    """Lower a standard-form GP to its smooth convex log-space equivalent.

    Raises ValueError listing every malformed constraint when validation
    fails.
    """
    problems = gp.validate()
    if problems:
        raise ValueError("malformed geometric program:\n  " + "\n  ".join(problems))
    variables = gp.variables()
    index = {v: i for i, v in enumerate(variables)}

    constraints = []
    names = []
    for name, g in gp.inequalities:
        constraints.append(_block(g, index))
        names.append(name)
    for v, (lo, hi) in sorted(gp.bounds.items()):
        i = index[v]
        if np.isfinite(hi):
            A = np.zeros((1, len(variables)))
            A[0, i] = 1.0
            constraints.append(LseBlock(A, np.array([-np.log(hi)])))
            names.append(f"{v}<=hi")
        if lo > 0.0:
            A = np.zeros((1, len(variables)))
            A[0, i] = -1.0
            constraints.append(LseBlock(A, np.array([np.log(lo)])))
            names.append(f"{v}>=lo")

    eq_A = eq_b = None
    eq_names = []
    if gp.equalities:
        eq_A = np.zeros((len(gp.equalities), len(variables)))
        eq_b = np.zeros(len(gp.equalities))
        for r, (name, f) in enumerate(gp.equalities):
            for v, e in f.exps.items():
                eq_A[r, index[v]] = e
            eq_b[r] = -np.log(f.coef)
            eq_names.append(name)

    return ConvexGp(variables, _block(gp.objective, index), constraints, names,
                    eq_A, eq_b, eq_names)


@dataclass
class GpSolution:
    z: np.ndarray
    point: dict[str, float]
    objective: float  # original-scale posynomial value exp(f0)
    status: str  # optimal | max_iter | infeasible | unbounded
    stationarity: float  # inf-norm of the projected KKT gradient
    duality_gap: float
    multipliers: np.ndarray  # one per inequality block
    newton_iters: int


class _Reduced:
    """Equality elimination: z = z_part + N @ y with N an orthonormal nullspace."""

    def __init__(self, cvx: ConvexGp):
        n = cvx.nvars
        if cvx.eq_A is None or len(cvx.eq_A) == 0:
            self.z_part = np.zeros(n)
            self.N = np.eye(n)
            self.identity = True
            return
        self.identity = False
        A, b = cvx.eq_A, cvx.eq_b
        z_part, *_ = np.linalg.lstsq(A, b, rcond=None)
        if not np.allclose(A @ z_part, b, atol=1e-9):
            raise ValueError("inconsistent monomial equality constraints")
        _, s, Vt = np.linalg.svd(A)
        rank = int((s > 1e-12 * max(1.0, s[0] if len(s) else 1.0)).sum())
        self.z_part = z_part
        self.N = Vt[rank:].T  # (n, n-rank)

    def z(self, y):
        return y if self.identity else self.z_part + self.N @ y

    def to_y(self, z):
        return z if self.identity else self.N.T @ (z - self.z_part)

    def project_grad(self, g):
        return g if self.identity else self.N.T @ g

    def project_hess(self, H):
        return H if self.identity else self.N.T @ H @ self.N


def _newton_minimize(value_grad_hess, y0, max_iters=200, dec_tol=1e-14,
                     grad_tol=1e-10, in_domain=lambda y: True,
                     stop=lambda y: False):
    """Damped Newton with backtracking; returns (y, converged, iters)."""
    y = y0.copy()
    f, g, H = value_grad_hess(y)
    for it in range(max_iters):
        if stop(y):
            return y, True, it
        if len(g) == 0 or np.abs(g).max() < grad_tol:
            return y, True, it
        reg = 0.0
        n = len(y)
        while True:
            try:
                L = np.linalg.cholesky(H + (reg * np.eye(n) if reg else 0.0))
                break
            except np.linalg.LinAlgError:
                reg = 1e-12 if reg == 0.0 else reg * 100.0
                if reg > 1e8:
                    return y, False, it
        dy = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        decrement = -float(g @ dy)
        if decrement / 2.0 < dec_tol:
            return y, True, it
        step = 1.0
        accepted = False
        for _ in range(60):
            cand = y + step * dy
            if in_domain(cand):
                fc, gc, Hc = value_grad_hess(cand)
                if np.isfinite(fc) and fc <= f - 0.25 * step * decrement:
                    y, f, g, H = cand, fc, gc, Hc
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            return y, np.abs(g).max() < max(grad_tol, 1e-8), it + 1
    return y, False, max_iters


def _strictly_feasible_start(cvx: ConvexGp, red: _Reduced, z_init=None):
    """Phase-I: minimize an infeasibility slack until all constraints < 0.

    Stops as soon as the slack is strictly negative rather than solving the
    auxiliary problem to optimality.
    """
    stacked = cvx.stacked
    ny = red.N.shape[1]
    y0 = np.zeros(ny)
    if z_init is not None:
        y0 = red.to_y(z_init)
    margin = 1e-7

    def worst(y):
        vals = stacked.values(red.z(y))
        return float(vals.max()) if len(vals) else -1.0

    if worst(y0) < -margin:
        return y0, True
    s0 = worst(y0) + 1.0
    w0 = np.concatenate([y0, [s0]])
    target = -10.0 * margin
    w = w0
    for t in (1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6):
        def vgh(wv, t=t):
            y, s = wv[:-1], wv[-1]
            z = red.z(y)
            f_vals, p = stacked.values_probs(z)
            gaps = f_vals - s  # < 0 in domain
            inv = 1.0 / (-gaps)
            G = np.zeros((stacked.m, stacked.nvars))
            np.add.reduceat(stacked.A * p[:, None], stacked.starts, axis=0, out=G)
            Gy = G @ red.N  # (m, ny)
            gy = Gy.T @ inv
            row_w = p * inv[stacked.block_of_row]
            Ay = stacked.A @ red.N
            Hy = (Ay.T * row_w) @ Ay
            coeff = inv ** 2 - inv
            Hy += (Gy.T * coeff) @ Gy
            n_aug = len(wv)
            f = s - np.log(-gaps).sum() / t
            g = np.zeros(n_aug)
            g[:-1] = gy / t
            g[-1] = 1.0 - inv.sum() / t
            H = np.zeros((n_aug, n_aug))
            H[:-1, :-1] = Hy / t
            cross = -(Gy.T @ (inv ** 2)) / t
            H[:-1, -1] = cross
            H[-1, :-1] = cross
            H[-1, -1] = (inv ** 2).sum() / t
            return f, g, H

        def dom(wv):
            y, s = wv[:-1], wv[-1]
            z = red.z(y)
            if np.abs(z).max() > _Z_LIMIT:
                return False
            vals = stacked.values(z)
            return bool((vals - s < 0).all())

        w, _, _ = _newton_minimize(
            vgh, w, max_iters=150, in_domain=dom,
            stop=lambda wv: wv[-1] < target and worst(wv[:-1]) < target)
        if worst(w[:-1]) < target:
            return w[:-1], True
    return w[:-1], worst(w[:-1]) < -margin


def _kkt_certificate(cvx: ConvexGp, red: _Reduced, z, g0):
    """Nonnegative least-squares multipliers witnessing KKT stationarity.

    Returns (lam, residual) where residual is the inf-norm of the projected
    Lagrangian gradient under the best lam >= 0.  Equality multipliers are
    implicit in the nullspace projection.
    """
    from scipy.optimize import nnls

    m = len(cvx.constraints)
    g0p = red.project_grad(g0)
    if m == 0:
        return np.zeros(0), float(np.abs(g0p).max()) if len(g0p) else 0.0
    stacked = cvx.stacked
    fvals, p = stacked.values_probs(z)
    G = np.zeros((m, stacked.nvars))
    np.add.reduceat(stacked.A * p[:, None], stacked.starts, axis=0, out=G)
    Gp = (G @ red.N).T  # (ny, m)
    active = fvals > -1e-5
    lam = np.zeros(m)
    if active.any():
        sol, _ = nnls(Gp[:, active], -g0p)
        lam[active] = sol
    resid = Gp @ lam + g0p
    return lam, float(np.abs(resid).max()) if len(resid) else 0.0


def solve_convex(cvx: ConvexGp, tol: float = 1e-8, max_iter: int = 2000,
                 start: dict[str, float] | None = None,
                 gap_target: float = 1e-9) -> GpSolution:
    """Interior-point solve of the log-space program.

    ``tol`` bounds the projected-gradient (stationarity) norm of the KKT
    system at the returned point and ``gap_target`` the barrier duality gap
    per constraint; ``max_iter`` caps total Newton iterations.  ``start``
    may supply a strictly feasible point in original coordinates.
    """
    red = _Reduced(cvx)
    stacked = cvx.stacked
    z_init = cvx.point_to_z(start) if start is not None else None
    y, ok = _strictly_feasible_start(cvx, red, z_init)
    if not ok:
        z = red.z(y)
        return GpSolution(z, cvx.z_to_point(z), float("nan"), "infeasible",
                          float("inf"), float("inf"), np.array([]), 0)

    m = len(cvx.constraints)
    t_bar = 1.0
    total_newton = 0
    status = "optimal"
    unbounded = False

    def barrier_vgh(yv, t):
        z = red.z(yv)
        f0, g0, H0 = cvx.objective.value_grad_hess(z)
        fvals, bgrad, bhess = stacked.barrier_terms(z)
        if fvals is None:
            return np.inf, np.zeros(len(yv)), np.eye(len(yv))
        f = f0 - np.log(-fvals).sum() / t if m else f0
        g = red.project_grad(g0 + bgrad / t)
        H = red.project_hess(H0 + bhess / t)
        return f, g, H

    def dom(yv):
        z = red.z(yv)
        if np.abs(z).max() > _Z_LIMIT:
            return False
        vals = stacked.values(z)
        return bool((vals < 0).all()) if len(vals) else True

    while True:
        y, conv, iters = _newton_minimize(
            lambda yv: barrier_vgh(yv, t_bar), y,
            max_iters=max(20, max_iter - total_newton),
            grad_tol=min(tol, 1e-9), in_domain=dom)
        total_newton += iters
        if np.abs(red.z(y)).max() > _Z_LIMIT - 10.0:
            unbounded = True
            break
        if m == 0 or 1.0 / t_bar <= gap_target:
            break
        if total_newton >= max_iter:
            status = "max_iter"
            break
        t_bar *= 20.0

    z = red.z(y)
    point = cvx.z_to_point(z)
    f0, g0 = cvx.objective.value_grad(z)
    lam, stationarity = _kkt_certificate(cvx, red, z, g0)
    gap = m / t_bar if m else 0.0
    if unbounded:
        status = "unbounded"
    elif status == "optimal" and stationarity > tol:
        status = "max_iter"
    return GpSolution(z, point, float(np.exp(f0)), status, stationarity, gap,
                      lam, total_newton)


def solve_gp(gp: GpProgram, tol: float = 1e-8, max_iter: int = 2000,
             start: dict[str, float] | None = None,
             gap_target: float = 1e-9) -> GpSolution:
    """Convenience wrapper: lower to convex form and solve."""
    return solve_convex(to_convex(gp), tol=tol, max_iter=max_iter, start=start,
                        gap_target=gap_target)
