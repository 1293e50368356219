"""Kernel functions g on [-1, 1], their certified bounds, and discretizations.

A kernel induces the function G_mu(x) = int g(xy) dmu(y), the symmetric
matrix G_{kk'} = g(k k') / d^2 on the scale-K grid, and the quadratic
energy C(Gx) = (1/2) x . G x on the cone of non-negative weight vectors.
The two hypotheses that matter numerically are a positive lower bound
g >= m > 0 and non-negative definiteness of (x, y) -> g(xy), the latter
checked through finite sections.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .measures import DiscreteMeasure, DyadicGrid, MeasureSpec

_CERT_GRID = 10**4  # sample count for grid-plus-derivative bound certification


@dataclass(frozen=True)
class Kernel:
    """A kernel g(z) = base_family(z) + shift_b with certified bounds on [-1, 1].

    m and M bound g from below/above, deriv_bound bounds |g'|; all three are
    certified either by a family closed form or by a 10^4-point grid plus the
    derivative interval argument.  m may be <= 0 for kernels pending
    translation.
    """

    family: str  # quadratic | exponential | affine | polynomial
    params: tuple[float, ...]
    m: float
    M: float
    deriv_bound: float
    shift_b: float = 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "quadratic":
            out = self.params[0] + z**2
        elif self.family == "exponential":
            out = np.exp(z)
        elif self.family == "affine":
            out = self.params[0] + z
        elif self.family == "polynomial":
            out = np.polynomial.polynomial.polyval(z, np.asarray(self.params))
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")
        return out + self.shift_b

    def antiderivative(self, z):
        """Antiderivative of g, available for the polynomial-type families."""
        z = np.asarray(z, dtype=float)
        if self.family == "quadratic":
            base = self.params[0] * z + z**3 / 3.0
        elif self.family == "affine":
            base = self.params[0] * z + z**2 / 2.0
        elif self.family == "polynomial":
            coeffs = np.concatenate(([0.0], np.asarray(self.params) / np.arange(1, len(self.params) + 1)))
            base = np.polynomial.polynomial.polyval(z, coeffs)
        else:
            raise ValueError(f"no closed-form antiderivative for family {self.family!r}")
        return base + self.shift_b * z

    def to_config(self) -> dict:
        cfg = {"family": self.family, "shift_b": self.shift_b}
        if self.family in ("quadratic", "affine"):
            cfg["c"] = self.params[0]
        elif self.family == "polynomial":
            cfg["coeffs"] = list(self.params)
        return cfg


def _certify_polynomial(coeffs: np.ndarray) -> tuple[float, float, float]:
    """Grid min/max widened by the derivative bound times half the spacing."""
    coeffs = np.asarray(coeffs, dtype=float)
    deriv = float(np.abs(coeffs[1:] * np.arange(1, len(coeffs))).sum())
    zs = np.linspace(-1.0, 1.0, _CERT_GRID)
    vals = np.polynomial.polynomial.polyval(zs, coeffs)
    half = (zs[1] - zs[0]) / 2.0
    return float(vals.min() - deriv * half), float(vals.max() + deriv * half), deriv


def kernel(family: str, c: float | None = None, coeffs=None, shift_b: float = 0.0) -> Kernel:
    """Construct a kernel with certified m, M, deriv_bound.

    quadratic: g = c + z^2; exponential: g = e^z; affine: g = c + z;
    polynomial: coefficients in ascending order.  shift_b is an additive
    translation recorded separately so it can be undone exactly.
    """
    if family == "quadratic":
        if c is None:
            raise ValueError("quadratic kernel needs coefficient c")
        m, M, dv = float(c), float(c) + 1.0, 2.0
        params = (float(c),)
    elif family == "affine":
        if c is None:
            raise ValueError("affine kernel needs coefficient c")
        m, M, dv = float(c) - 1.0, float(c) + 1.0, 1.0
        params = (float(c),)
    elif family == "exponential":
        m, M, dv = float(np.exp(-1.0)), float(np.e), float(np.e)
        params = ()
    elif family == "polynomial":
        if coeffs is None:
            raise ValueError("polynomial kernel needs coefficients")
        params = tuple(float(a) for a in coeffs)
        m, M, dv = _certify_polynomial(np.asarray(params))
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    return Kernel(family=family, params=params, m=m + shift_b, M=M + shift_b,
                  deriv_bound=dv, shift_b=float(shift_b))


def kernel_from_config(cfg: dict) -> Kernel:
    return kernel(cfg["family"], c=cfg.get("c"), coeffs=cfg.get("coeffs"),
                  shift_b=cfg.get("shift_b", 0.0))


def translate(g: Kernel, b: float) -> Kernel:
    """The translated kernel g + b with shifted certified bounds."""
    return replace(g, m=g.m + b, M=g.M + b, shift_b=g.shift_b + b)


@dataclass(frozen=True)
class KernelMatrix:
    """The symmetric matrix G_{kk'} = g(k k') / d^2 on a dyadic grid."""

    grid: DyadicGrid
    entries: np.ndarray
    kernel: Kernel

    @property
    def d(self) -> int:
        return self.grid.d


def kernel_matrix(g: Kernel, grid: DyadicGrid) -> KernelMatrix:
    d = grid.d
    prods = np.outer(grid.points, grid.points)
    entries = g(prods) / d**2
    entries = (entries + entries.T) / 2.0  # bit-exact symmetry
    entries.setflags(write=False)
    return KernelMatrix(grid=grid, entries=entries, kernel=g)


def _gauss_panels(a: float, b: float, panels: int = 64, order: int = 8):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    nodes, wts = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    xs = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    ws = (half[:, None] * wts[None, :]).ravel()
    return xs, ws


def g_mu(g: Kernel, mu: MeasureSpec | DiscreteMeasure, x) -> float | np.ndarray:
    """G_mu(x) = int g(xy) dmu(y), vectorized over x.

    Atom sums are exact; density pieces use the closed-form antiderivative for
    the polynomial-type families and composite Gauss quadrature for the
    exponential family.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x, dtype=float)
    if isinstance(mu, DiscreteMeasure):
        pts = mu.grid.points
        w = mu.weights / mu.grid.d
        out = out + np.sum(w * g(np.multiply.outer(x, pts)), axis=-1)
        return out if out.ndim else float(out)
    for loc, wt in mu.atoms:
        out = out + wt * g(x * loc)
    for a, b, v in mu.density:
        if b <= a or v == 0.0:
            continue
        if g.family == "exponential":
            ys, ws = _gauss_panels(a, b)
            out = out + v * np.sum(ws * g(np.multiply.outer(x, ys)), axis=-1)
        else:
            # int_a^b g(xy) dy = (P(xb) - P(xa))/x with P the antiderivative
            small = np.abs(x) < 1e-13
            xs = np.where(small, 1.0, x)
            exact = (g.antiderivative(xs * b) - g.antiderivative(xs * a)) / xs
            out = out + v * np.where(small, g(0.0) * (b - a), exact)
    return out if out.ndim else float(out)


def pair_energy(g: Kernel, mu: MeasureSpec, nu: MeasureSpec) -> float:
    """int G_nu dmu = int int g(xy) dmu(x) dnu(y)."""
    total = 0.0
    for loc, wt in mu.atoms:
        total += wt * float(g_mu(g, nu, loc))
    for a, b, v in mu.density:
        if b <= a or v == 0.0:
            continue
        xs, ws = _gauss_panels(a, b)
        total += v * float(np.sum(ws * np.asarray(g_mu(g, nu, xs))))
    return total


def quadratic_energy(G: KernelMatrix, x: np.ndarray) -> float:
    """The projected non-linearity C_K: (1/2) x . G x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (G.d,):
        raise ValueError(f"weight vector length {x.shape} != matrix dimension {G.d}")
    return float(0.5 * x @ G.entries @ x)


def check_lower_bound(g: Kernel) -> dict:
    """Certify g >= m > 0 on [-1, 1] (hypothesis H1 style check)."""
    zs = np.linspace(-1.0, 1.0, _CERT_GRID)
    vals = np.asarray(g(zs))
    half = (zs[1] - zs[0]) / 2.0
    certified_min = float(vals.min() - g.deriv_bound * half)
    ok = certified_min > 0.0
    report = {"ok": ok, "m": g.m, "certified_min": certified_min}
    if not ok:
        report["violated_at"] = float(zs[int(np.argmin(vals))])
    return report


def check_nonneg_definite(g: Kernel, K_list) -> dict:
    """Smallest eigenvalue of G^(K) per scale; a failure certifies an H5
    violation, a passing battery is advisory."""
    from .measures import dyadic_grid

    min_eigs = {}
    ok = True
    for K in K_list:
        G = kernel_matrix(g, dyadic_grid(K))
        eigs = np.linalg.eigvalsh(G.entries)
        scale = float(np.abs(G.entries).max())
        min_eigs[K] = float(eigs[0])
        if eigs[0] < -1e-10 * max(scale, 1e-30):
            ok = False
    return {"ok": ok, "min_eigenvalue": min_eigs}


def kernel_cauchy_schwarz_check(g: Kernel, mu: MeasureSpec, nu: MeasureSpec) -> dict:
    """Check (int G_nu dmu)^2 <= (int G_mu dmu)(int G_nu dnu)."""
    cross = pair_energy(g, mu, nu)
    lhs = cross**2
    rhs = pair_energy(g, mu, mu) * pair_energy(g, nu, nu)
    scale = max(abs(lhs), abs(rhs), 1.0)
    return {"lhs": lhs, "rhs": rhs, "ok": lhs <= rhs + 1e-10 * scale}
