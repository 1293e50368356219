"""Scale limits and invariance harnesses, plus convex-geometry test utilities.

The solution of the measure-space equation is defined through the scale
limit K -> infinity; these helpers measure the Cauchy behaviour of the
per-scale values, the independence of the extension radius R, and the
invariance of the mass-constrained evolution under kernel translations
g -> g + b, each against its explicit error envelope E_K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hamiltonian import cone_decompose, extended_hamiltonian, nnls_index
from .initial import InitialCondition, linear_functional, softmin_functional
from .kernels import Kernel, KernelMatrix, kernel_matrix, translate
from .measures import MeasureSpec, dyadic_grid, norm_l1, project_measure


def error_envelope(K: int, R: float, m: float, M: float) -> float:
    """The explicit per-scale error term E_K = 56 R M / (2^{K/2} m^2)."""
    return 56.0 * R * M / (2.0 ** (K / 2.0) * m**2)


@dataclass(frozen=True)
class ConvergenceReport:
    K_values: tuple
    values: tuple
    methods: tuple
    successive_diffs: tuple
    theoretical_rate: tuple
    fit_exponent: float


def _fit_exponent(K_values, diffs) -> float:
    """Least-squares slope of log2 |diff| against K; -inf when the diffs are
    already at rounding level."""
    diffs = np.asarray(diffs, dtype=float)
    if diffs.size < 2:
        return float("nan")
    if np.all(diffs < 1e-13):
        return float("-inf")
    ks = np.asarray(K_values[:-1], dtype=float)
    logs = np.log2(np.clip(diffs, 1e-16, None))
    slope = np.polyfit(ks, logs, 1)[0]
    return float(slope)


def _pde_value(psi: InitialCondition, g: Kernel, K: int, t: float, R: float,
               x: np.ndarray, dx: float, seed: int) -> float:
    from .grid_solver import LatticeDomain, query, solve

    G = kernel_matrix(g, dyadic_grid(K))
    H = extended_hamiltonian(G, R)
    margin = float(np.abs(x).max())
    extent = margin + 2.0 * H.lip_bound * t
    extent = np.ceil(extent / dx) * dx
    dom = LatticeDomain(K=K, dx=dx, extent=float(max(extent, dx)),
                        query_margin=margin)
    sol = solve(psi, H, t, dom, seed=seed)
    return query(sol, t, x)


def k_convergence(psi: InitialCondition, g: Kernel, mu: MeasureSpec, t: float,
                  K_range, R: float, method: str = "hopflax", dx: float = 0.1,
                  seed: int = 0) -> ConvergenceReport:
    """Per-scale values f^(K)(t, x^(K)(mu)) with successive differences, the
    theoretical envelope, and a fitted decay exponent.

    method "hopflax" uses the variational solver at every scale; "pde" runs
    the full-grid scheme and is restricted to K <= 1 by the dimension cap.
    """
    from .hopflax import hopf_lax_measure

    K_range = sorted(int(K) for K in K_range)
    if R <= psi.lip_tv:
        raise ValueError(
            f"extension radius {R} must exceed the TV-Lipschitz constant {psi.lip_tv}"
        )
    if method not in ("pde", "hopflax"):
        raise ValueError(f"unknown method {method!r}")
    if method == "pde" and max(K_range) > 1:
        raise ValueError("pde route is limited to K <= 1 (full-grid dimension cap)")

    values = []
    for K in K_range:
        if method == "hopflax":
            values.append(hopf_lax_measure(psi, g, K, t, mu, seed=seed).value)
        else:
            x = project_measure(mu, K).weights
            values.append(_pde_value(psi, g, K, t, R, x, dx, seed))
    diffs = tuple(abs(values[i + 1] - values[i]) for i in range(len(values) - 1))
    rate = tuple(error_envelope(K, R, g.m, g.M) for K in K_range)
    return ConvergenceReport(
        K_values=tuple(K_range), values=tuple(values),
        methods=tuple(method for _ in K_range),
        successive_diffs=diffs, theoretical_rate=rate,
        fit_exponent=_fit_exponent(K_range, diffs),
    )


@dataclass(frozen=True)
class RIndependenceResult:
    discrepancy: float
    r_ignored: bool  # the variational route has no R in its formula
    times: tuple


def r_independence(psi: InitialCondition, g: Kernel, mu: MeasureSpec, times,
                   K: int, R1: float, R2: float, method: str = "pde",
                   dx: float = 0.1, seed: int = 0) -> RIndependenceResult:
    """Max over the time grid of |f^(K)_{R1} - f^(K)_{R2}|.

    Both radii must exceed the TV-Lipschitz constant of the data; below it
    the extension can clip the reachable gradients and the independence
    argument does not apply.
    """
    lip = psi.lip_tv
    if R1 <= lip or R2 <= lip:
        raise ValueError(
            f"radii {R1}, {R2} must exceed the TV-Lipschitz constant {lip}"
        )
    times = tuple(float(t) for t in times)
    if method == "hopflax":
        return RIndependenceResult(discrepancy=0.0, r_ignored=True, times=times)
    worst = 0.0
    x = project_measure(mu, K).weights
    for t in times:
        v1 = _pde_value(psi, g, K, t, R1, x, dx, seed)
        v2 = _pde_value(psi, g, K, t, R2, x, dx, seed)
        worst = max(worst, abs(v1 - v2))
    return RIndependenceResult(discrepancy=worst, r_ignored=False, times=times)


def _shift_initial(psi: InitialCondition, gb: Kernel) -> InitialCondition:
    """The companion data psi + a b mass(.) realized exactly: for a kernel
    functional with mass-a rho, integrating the translated kernel against the
    same rho adds exactly a b per unit mass."""
    if psi.variant == "linear":
        return linear_functional(gb, psi.rho)
    if psi.variant == "softmin":
        rhos = [c.rho for c in psi.components]
        if len({round(r.total_mass, 12) for r in rhos}) != 1:
            raise ValueError("translation invariance needs equal component masses")
        return softmin_functional(gb, rhos, psi.tau)
    raise ValueError("translation invariance needs kernel-functional data")


def b_invariance(g: Kernel, psi: InitialCondition, b1: float, b2: float,
                 t: float, mu: MeasureSpec, K: int, seed: int = 0) -> dict:
    """|f_{b1} - f_{b2}| for the mass-constrained evolution under g + b.

    Each f_b is computed from the translated kernel and the companion data,
    then corrected by - a b mass(mu) - a^2 b t / 2; the result should not
    depend on b.
    """
    from .hopflax import hopf_lax_measure

    a = psi.mass
    if a <= 0:
        raise ValueError("mass-constrained invariance needs data of positive mass")
    mass_mu = mu.total_mass
    out = {}
    for b in (float(b1), float(b2)):
        gb = translate(g, b)
        if gb.m <= 0:
            raise ValueError(f"shift b = {b} leaves the kernel non-positive")
        psib = _shift_initial(psi, gb)
        r = hopf_lax_measure(psib, gb, K, t, mu, mass_constraint=a, seed=seed)
        out[b] = r.value - a * b * mass_mu - a**2 * b * t / 2.0
    vals = list(out.values())
    return {"discrepancy": abs(vals[0] - vals[1]), "values": out}


def distance_like(x) -> float:
    """(1/d) min_k x_k: the infimum of y . x over unit-dual-norm vectors y in
    the orthant; vanishes exactly on the boundary."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a non-empty vector")
    if np.any(x < 0):
        raise ValueError("the distance-like function is defined on the dual orthant")
    return float(x.min() / x.size)


def gradient_in_set_check(f_values, G: KernelMatrix, a: float, n_pairs: int,
                          seed: int, slack: float | None = None,
                          tol: float = 1e-9, box: float = 1.0) -> dict:
    """Support-function test that the difference quotients of f stay above the
    support lower bound of the enlarged gradient set {Gu : u >= 0, mass <= a}.

    For each sampled base point x >= 0 and direction v with x + v >= 0 the
    increment f(x+v) - f(x) must be at least
    min(0, a d min_k (Gv)_k) - slack * ||v||_1, with slack defaulting to the
    d^{-1/2} enlargement radius.
    """
    d = G.d
    if slack is None:
        slack = d**-0.5
    rng = np.random.default_rng(seed)
    violations = 0
    worst = np.inf
    for _ in range(int(n_pairs)):
        x = rng.uniform(0.0, box, size=d)
        v = rng.uniform(-1.0, 1.0, size=d) * np.minimum(x, box)
        gv = G.entries @ v
        c = min(0.0, a * d * float(gv.min())) - slack * norm_l1(v)
        margin = float(f_values(x + v)) - float(f_values(x)) - c
        worst = min(worst, margin)
        if margin < -tol:
            violations += 1
    return {"violations": violations, "worst_margin": float(worst)}


def bidual_sanity(G: KernelMatrix, n_samples: int, seed: int,
                  tol: float = 1e-10) -> dict:
    """Pairing checks between the cone {Gu : u >= 0} and its dual.

    Random cone points must pair non-negatively with the generator directions
    G e_k; for points whose decomposition fails, the least-squares residual
    z = G u* - y is exhibited as a separator: z pairs non-negatively with the
    cone but strictly negatively with y.
    """
    rng = np.random.default_rng(seed)
    d = G.d
    scale = float(np.abs(G.entries).max()) * d
    ok = True
    separators = 0
    for _ in range(int(n_samples)):
        u = rng.uniform(0.0, 1.0, size=d)
        x = G.entries @ u
        pair = G.entries @ x  # entries are x . (G e_k)
        if float(pair.min()) < -tol * scale:
            ok = False
        y = rng.uniform(-1.0, 1.0, size=d)
        dec = cone_decompose(G, y)
        if not dec.in_cone:
            z = G.entries @ dec.u - y
            # KKT of the non-negative fit: z pairs >= 0 with every generator
            if float((G.entries @ z).min()) < -tol * scale or float(y @ z) >= 0.0:
                ok = False
            else:
                separators += 1
    return {"ok": ok, "separators": separators, "n_samples": int(n_samples)}
