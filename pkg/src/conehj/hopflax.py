"""Variational solvers for the convex case.

The finite-dimensional value is

    f_HL(t, x) = sup_{y >= 0} psi^(K)(x + y) - (y . G y) / (2 t),

whose supremum can be restricted to ||y||_1 <= (2t/m) Lip(psi).  Linear
initial data makes the problem an exactly solvable concave QP on the
orthant; otherwise a seeded multistart projected gradient ascent with
Armijo backtracking is used.  The measure-space form maximizes
psi(mu + t nu) - (t/2) int G_nu dnu over discrete nu >= 0 at scale K via
the substitution nu' = t nu, optionally with the total mass of nu pinned
to a by exact sort-based projection onto the scaled simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .initial import InitialCondition, linear_form, raw_functional
from .kernels import Kernel, KernelMatrix, kernel_matrix
from .measures import (
    DiscreteMeasure,
    MeasureSpec,
    dyadic_grid,
    norm_l1,
    project_measure,
)


@dataclass(frozen=True)
class HopfLaxResult:
    """Value and certificate data of one variational solve."""

    value: float
    maximizer: object  # weight vector (finite form) or DiscreteMeasure
    kkt_residual: float
    search_radius_used: float
    n_starts: int
    stagnated: bool = False


def _qp_nonneg_max(A: np.ndarray, p: np.ndarray, maxiter: int | None = None) -> np.ndarray:
    """Maximize p . y - (1/2) y . A y over y >= 0, A symmetric PSD.

    Deterministic active-set iteration: among dual violations the smallest
    index enters the free set; blocked coordinates leave by ratio steps.
    The iteration path is a pure function of (A, p).
    """
    A = np.asarray(A, dtype=float)
    p = np.asarray(p, dtype=float)
    n = len(p)
    if maxiter is None:
        maxiter = 10 * n
    eps = np.finfo(float).eps
    y = np.zeros(n)
    free = np.zeros(n, dtype=bool)
    tol = 10.0 * eps * n * max(1e-30, float(np.abs(p).max()))
    outer = 0
    while True:
        grad = p - A @ y
        cand = (~free) & (grad > tol)
        if not cand.any() or outer >= maxiter:
            break
        outer += 1
        free[int(np.argmax(cand))] = True  # smallest violating index
        while True:
            s = np.zeros(n)
            F = np.flatnonzero(free)
            s[F] = np.linalg.lstsq(A[np.ix_(F, F)], p[F], rcond=None)[0]
            if np.all(s[F] > 0.0):
                y = s
                break
            blocked = free & (s <= 0.0)
            denom = y[blocked] - s[blocked]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, y[blocked] / denom, np.inf)
            alpha = float(np.min(ratios)) if ratios.size else 0.0
            y = y + alpha * (s - y)
            free &= y > 10.0 * eps * max(1.0, float(np.abs(y).max()))
            y[~free] = 0.0
            if not free.any():
                break
    return y


def _project_simplex_sum(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = total} by the sort method."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    ks = np.arange(1, len(v) + 1)
    cond = u - css / ks > 0
    k = int(np.flatnonzero(cond)[-1]) + 1
    tau = css[k - 1] / k
    return np.clip(v - tau, 0.0, None)


def _kkt_residual(grad: np.ndarray, y: np.ndarray) -> float:
    """Max violation of the orthant KKT system: gradient zero on the support,
    non-positive off it."""
    scale = max(1.0, float(np.abs(y).max()))
    on = y > 1e-10 * scale
    r = 0.0
    if on.any():
        r = float(np.abs(grad[on]).max())
    if (~on).any():
        r = max(r, float(np.clip(grad[~on], 0.0, None).max()))
    return r


def _pg_ascent(obj, grad, project, y0: np.ndarray, iters: int = 400) -> np.ndarray:
    """Projected gradient ascent with Armijo backtracking.

    obj/grad evaluate the concave objective and its gradient; project maps an
    arbitrary vector back to the feasible set.
    """
    y = project(np.asarray(y0, dtype=float))
    v = obj(y)
    step = 1.0
    for _ in range(iters):
        g = grad(y)
        accepted = False
        for _ in range(30):
            cand = project(y + step * g)
            vc = obj(cand)
            # Armijo: sufficient increase against the projected step length
            if vc >= v + 1e-4 * float(g @ (cand - y)) and vc > v - 1e-18:
                y, v = cand, vc
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        step *= 1.6
    return y


def _multistart_seeds(d: int, radius: float, seed: int, n_starts: int) -> list:
    """Deterministic start battery: zero, the scaled vertices, and Dirichlet
    interior points from a fixed seeded generator."""
    seeds = [np.zeros(d)]
    for k in range(d):
        e = np.zeros(d)
        e[k] = radius * d
        seeds.append(e)
    rng = np.random.default_rng(seed)
    while len(seeds) < n_starts:
        w = rng.dirichlet(np.ones(d)) * radius * d
        w *= rng.uniform(0.1, 1.0)
        seeds.append(w)
    return seeds[:n_starts]


def hopf_lax_finite(psi: InitialCondition, G: KernelMatrix, t: float, x,
                    seed: int = 0, n_starts: int = 32) -> HopfLaxResult:
    """sup_{y >= 0} psi^(K)(x + y) - y.Gy/(2t), restricted to the certified
    search radius ||y||_1 <= (2t/m) Lip(psi).

    Linear initial data (kernel functionals and raw linear forms) is solved
    exactly by the deterministic active-set QP; other data by multistart
    projected gradient ascent.  t = 0 returns psi(x).
    """
    x = np.asarray(x, dtype=float)
    K = G.grid.K
    d = G.d
    if x.shape != (d,):
        raise ValueError(f"point dimension {x.shape} != grid dimension {d}")
    if np.any(x < 0):
        raise ValueError("the state must be a non-negative weight vector")
    if t < 0:
        raise ValueError("t must be non-negative")
    m = G.kernel.m
    if m <= 0:
        raise ValueError("search radius needs a kernel with certified m > 0")
    radius = (2.0 * t / m) * psi.lip_tv

    if t == 0:
        return HopfLaxResult(value=float(psi.value_K(K, x)), maximizer=np.zeros(d),
                             kkt_residual=0.0, search_radius_used=0.0, n_starts=0)

    q = None
    if psi.variant == "linear":
        q = psi.gradient_K(K)
    elif psi.constant_grad is not None:
        q = np.asarray(psi.constant_grad, dtype=float)

    if q is not None:
        # psi(x + y) = psi(x) + q.y: exact concave QP on the orthant
        y = _qp_nonneg_max(G.entries / t, q)
        grad = q - (G.entries @ y) / t
        value = float(psi.value_K(K, x) + q @ y - (y @ G.entries @ y) / (2.0 * t))
        return HopfLaxResult(value=value, maximizer=y,
                             kkt_residual=_kkt_residual(grad, y),
                             search_radius_used=radius, n_starts=1)

    def obj(y):
        return float(psi.value_K(K, x + y) - (y @ G.entries @ y) / (2.0 * t))

    def grad_fn(y):
        return psi.grad_K(K, x + y) - (G.entries @ y) / t

    def project(y):
        y = np.clip(y, 0.0, None)
        if radius > 0 and y.sum() > radius * d:
            y = _project_simplex_sum(y, radius * d)
        return y

    best_y, best_v = None, -np.inf
    for y0 in _multistart_seeds(d, max(radius, 1e-12), seed, n_starts):
        y = _pg_ascent(obj, grad_fn, project, y0)
        v = obj(y)
        if v > best_v:
            best_y, best_v = y, v
    grad = grad_fn(best_y)
    res = _kkt_residual(grad, best_y)
    return HopfLaxResult(value=best_v, maximizer=best_y, kkt_residual=res,
                         search_radius_used=radius, n_starts=n_starts,
                         stagnated=res > 1e-5 * max(1.0, abs(best_v)))


def hopf_lax_measure(psi: InitialCondition, g: Kernel, K: int, t: float,
                     mu: MeasureSpec, mass_constraint: float | None = None,
                     seed: int = 0, n_starts: int = 32) -> HopfLaxResult:
    """sup over discrete nu >= 0 at scale K of psi(mu + t nu) - (t/2) int G_nu dnu.

    Unconstrained, the substitution nu' = t nu reduces the problem to the
    finite form at the projected weights of mu.  With a mass constraint the
    weights of nu are confined to the scaled simplex {w >= 0, norm_l1(w) = a}
    by exact projection inside the ascent.
    """
    grid = dyadic_grid(K)
    G = kernel_matrix(g, grid)
    xmu = project_measure(mu, K).weights
    d = grid.d

    if t < 0:
        raise ValueError("t must be non-negative")
    if mass_constraint is None:
        if t == 0:
            return HopfLaxResult(value=float(psi.value_K(K, xmu)),
                                 maximizer=DiscreteMeasure(grid, np.zeros(d)),
                                 kkt_residual=0.0, search_radius_used=0.0, n_starts=0)
        fin = hopf_lax_finite(psi, G, t, xmu, seed=seed, n_starts=n_starts)
        nu = DiscreteMeasure(grid, np.asarray(fin.maximizer) / t)
        return HopfLaxResult(value=fin.value, maximizer=nu,
                             kkt_residual=fin.kkt_residual,
                             search_radius_used=fin.search_radius_used,
                             n_starts=fin.n_starts, stagnated=fin.stagnated)

    a = float(mass_constraint)
    if a <= 0:
        raise ValueError("mass constraint must be positive")
    total = a * d  # sum of weights with norm_l1 = a

    if t == 0:
        w0 = np.full(d, a)
        return HopfLaxResult(value=float(psi.value_K(K, xmu)),
                             maximizer=DiscreteMeasure(grid, w0),
                             kkt_residual=0.0, search_radius_used=a, n_starts=0)

    def obj(w):
        return float(psi.value_K(K, xmu + t * w) - 0.5 * t * (w @ G.entries @ w))

    def grad_fn(w):
        return t * psi.grad_K(K, xmu + t * w) - t * (G.entries @ w)

    def project(w):
        return _project_simplex_sum(np.asarray(w, dtype=float), total)

    best_w, best_v = None, -np.inf
    for w0 in _multistart_seeds(d, a, seed, n_starts):
        w = _pg_ascent(obj, grad_fn, project, w0)
        v = obj(w)
        if v > best_v:
            best_w, best_v = w, v
    # KKT on the simplex: the gradient must be constant on the support and
    # no larger off it; measure the spread against the support mean
    grad = grad_fn(best_w)
    on = best_w > 1e-10 * max(1.0, float(best_w.max()))
    lam = float(grad[on].mean())
    res = float(np.abs(grad[on] - lam).max())
    if (~on).any():
        res = max(res, float(np.clip(grad[~on] - lam, 0.0, None).max()))
    return HopfLaxResult(value=best_v, maximizer=DiscreteMeasure(grid, best_w),
                         kkt_residual=res, search_radius_used=a,
                         n_starts=n_starts,
                         stagnated=res > 1e-5 * max(1.0, abs(best_v)))


def semigroup_residual(psi: InitialCondition, G: KernelMatrix, t: float,
                       s: float, x, seed: int = 0, n_starts: int = 32) -> float:
    """|f_HL(t,x) - sup_{y>=0} [f_HL(s, x+y) - y.Gy/(2(t-s))]| for t > s > 0.

    For (effectively) linear data f_HL(s, .) = psi(.) + s c0 with c0 the
    orthant supremum of q.y - y.Gy/2, so the inner value is again linear and
    the outer problem is solved by the exact QP; otherwise the inner solve is
    nested inside a projected gradient ascent.
    """
    if not (t > s > 0):
        raise ValueError("semigroup residual needs t > s > 0")
    x = np.asarray(x, dtype=float)
    K = G.grid.K
    lhs = hopf_lax_finite(psi, G, t, x, seed=seed, n_starts=n_starts).value

    q = None
    if psi.variant == "linear":
        q = psi.gradient_K(K)
    elif psi.constant_grad is not None:
        q = np.asarray(psi.constant_grad, dtype=float)

    if q is not None:
        y0 = _qp_nonneg_max(G.entries, q)
        c0 = float(q @ y0 - 0.5 * y0 @ G.entries @ y0)
        inner = raw_functional(
            value_fn=lambda KK, z, _q=q, _c=s * c0: np.asarray(z, dtype=float) @ _q + _c,
            lip_tv=psi.lip_tv,
        )
        inner.constant_grad = q
        rhs = hopf_lax_finite(inner, G, t - s, x, seed=seed, n_starts=n_starts).value
        return abs(lhs - rhs)

    # Nonlinear data: the nested supremum equals the joint concave problem
    #   sup_{y, z >= 0} psi(x + y + z) - z.Gz/(2s) - y.Gy/(2(t-s)),
    # a single ascent in 2d variables instead of an ascent whose every
    # objective evaluation is itself a multistart solve.
    d = G.d
    m = G.kernel.m
    r_outer = (2.0 * (t - s) / m) * psi.lip_tv
    r_inner = (2.0 * s / m) * psi.lip_tv

    def obj(w):
        y, z = w[:d], w[d:]
        return float(psi.value_K(K, x + y + z)
                     - (z @ G.entries @ z) / (2.0 * s)
                     - (y @ G.entries @ y) / (2.0 * (t - s)))

    def grad_fn(w):
        y, z = w[:d], w[d:]
        p = psi.grad_K(K, x + y + z)
        return np.concatenate([p - (G.entries @ y) / (t - s),
                               p - (G.entries @ z) / s])

    def project(w):
        w = np.clip(w, 0.0, None)
        y, z = w[:d].copy(), w[d:].copy()
        if y.sum() > r_outer * d:
            y = _project_simplex_sum(y, r_outer * d)
        if z.sum() > r_inner * d:
            z = _project_simplex_sum(z, r_inner * d)
        return np.concatenate([y, z])

    best = -np.inf
    outer = _multistart_seeds(d, max(r_outer, 1e-12), seed, n_starts)
    inner_seeds = _multistart_seeds(d, max(r_inner, 1e-12), seed + 1, n_starts)
    for y0, z0 in zip(outer, inner_seeds):
        w = _pg_ascent(obj, grad_fn, project, np.concatenate([y0, z0]))
        best = max(best, obj(w))
    return abs(lhs - best)


def first_order_residual(psi: InitialCondition, g: Kernel, result: HopfLaxResult,
                         mu: MeasureSpec, t: float) -> float:
    """sup over grid points of |G_{nu*}(x) - D psi(mu + t nu*, x)|.

    G_{nu*} is evaluated from the maximizing weights; the density comes from
    the initial condition's Gateaux callback at the shifted measure.
    """
    if not psi.has_gateaux():
        raise ValueError("initial condition exposes no Gateaux density")
    nu = result.maximizer
    if not isinstance(nu, DiscreteMeasure):
        raise ValueError("first-order condition needs a measure-form maximizer")
    K = nu.grid.K
    pts = nu.grid.points
    g_nu = np.asarray([float(np.sum(nu.weights * g(p * pts)) / nu.grid.d) for p in pts])
    x_shift = project_measure(mu, K).weights + t * nu.weights
    dens = np.asarray(psi.gateaux_density(K, x_shift, pts), dtype=float)
    return float(np.abs(g_nu - dens).max())
