"""Initial conditions psi for the projected evolution, in three flavours.

The linear variant is the kernel functional psi(mu) = int G_rho dmu; at
scale K it is the linear form q . x with gradient q = G^(K) x^(K)(rho),
so the gradient lies in the cone image of mass-a vectors with a the mass
of rho.  The soft-min variant is -tau log sum_j exp(-psi_j / tau) over
finitely many linear functionals; it is concave, Lipschitz with the worst
component constant, and has a Gateaux density given by the soft-min convex
combination of the component densities.  The raw variant wraps
user-supplied callbacks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, g_mu, kernel_matrix
from .measures import MeasureSpec, dyadic_grid, norm_l1, project_measure

_LIP_GRID = 10**4


def _lip_tv_linear(g: Kernel, rho: MeasureSpec) -> float:
    """Certified sup of |G_rho| on [-1, 1]: grid max widened by the
    derivative bound |G_rho'| <= deriv_bound * mass times half the spacing."""
    xs = np.linspace(-1.0, 1.0, _LIP_GRID)
    vals = np.abs(np.asarray(g_mu(g, rho, xs)))
    half = (xs[1] - xs[0]) / 2.0
    return float(vals.max() + g.deriv_bound * rho.total_mass * half)


@dataclass
class InitialCondition:
    """Initial condition with per-scale value/gradient and a TV-Lipschitz bound.

    variant is one of "linear", "softmin", "raw".  For "linear", kernel_g and
    rho define psi(mu) = int G_rho dmu and a is the mass of rho.  For
    "softmin", components holds the linear pieces and tau > 0 the temperature.
    For "raw", value_fn(K, x) is required; grad_fn, gateaux_fn optional.
    """

    variant: str
    kernel_g: Kernel | None = None
    rho: MeasureSpec | None = None
    components: tuple["InitialCondition", ...] = ()
    tau: float = 0.0
    value_fn: object = None
    grad_fn: object = None
    gateaux_fn: object = None
    lip_tv_raw: float | None = None
    constant_grad: object = None  # fixed gradient vector for raw linear forms
    _grad_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant == "linear":
            if self.kernel_g is None or self.rho is None:
                raise ValueError("linear variant needs a kernel and a measure rho")
        elif self.variant == "softmin":
            if not self.components or self.tau <= 0:
                raise ValueError("softmin variant needs components and tau > 0")
            if any(c.variant != "linear" for c in self.components):
                raise ValueError("softmin components must be linear functionals")
        elif self.variant == "raw":
            if self.value_fn is None or self.lip_tv_raw is None:
                raise ValueError("raw variant needs value_fn and lip_tv_raw")
        else:
            raise ValueError(f"unknown initial-condition variant {self.variant!r}")

    @property
    def mass(self) -> float:
        """The cone mass a: total mass of rho (worst component for softmin)."""
        if self.variant == "linear":
            return self.rho.total_mass
        if self.variant == "softmin":
            return max(c.mass for c in self.components)
        return 0.0

    @property
    def lip_tv(self) -> float:
        if self.variant == "linear":
            if "lip" not in self._grad_cache:
                self._grad_cache["lip"] = _lip_tv_linear(self.kernel_g, self.rho)
            return self._grad_cache["lip"]
        if self.variant == "softmin":
            return max(c.lip_tv for c in self.components)
        return float(self.lip_tv_raw)

    def gradient_K(self, K: int) -> np.ndarray:
        """For the linear variant: the exact scale-K gradient G^(K) x^(K)(rho)."""
        if self.variant != "linear":
            raise ValueError("gradient_K is defined for the linear variant only")
        if K not in self._grad_cache:
            G = kernel_matrix(self.kernel_g, dyadic_grid(K))
            xr = project_measure(self.rho, K).weights
            q = G.entries @ xr
            q.setflags(write=False)
            self._grad_cache[K] = q
        return self._grad_cache[K]

    def value_K(self, K: int, x: np.ndarray):
        """psi^(K) on weight vectors, vectorized over leading axes of x."""
        x = np.asarray(x, dtype=float)
        if self.variant == "linear":
            return x @ self.gradient_K(K)
        if self.variant == "softmin":
            vals = np.stack([c.value_K(K, x) for c in self.components], axis=-1)
            vmin = vals.min(axis=-1)
            # stabilized soft-min: -tau log sum exp(-(v - vmin)/tau) + vmin
            return vmin - self.tau * np.log(
                np.exp(-(vals - vmin[..., None]) / self.tau).sum(axis=-1)
            )
        return self.value_fn(K, x)

    def grad_K(self, K: int, x: np.ndarray) -> np.ndarray:
        """Gradient of psi^(K) at x, vectorized over leading axes of x."""
        x = np.asarray(x, dtype=float)
        if self.variant == "linear":
            return np.broadcast_to(self.gradient_K(K), x.shape).copy()
        if self.variant == "softmin":
            vals = np.stack([c.value_K(K, x) for c in self.components], axis=-1)
            lam = np.exp(-(vals - vals.min(axis=-1, keepdims=True)) / self.tau)
            lam /= lam.sum(axis=-1, keepdims=True)
            Q = np.stack([np.broadcast_to(c.gradient_K(K), x.shape) for c in self.components], axis=-1)
            return np.einsum("...kj,...j->...k", Q, lam)
        if self.grad_fn is None:
            raise ValueError("raw variant has no gradient callback")
        return self.grad_fn(K, x)

    def has_gateaux(self) -> bool:
        return self.variant in ("linear", "softmin") or self.gateaux_fn is not None

    def gateaux_density(self, K: int, x: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """The density z -> D psi(mu_x, z) evaluated at pts, for mu_x at scale K.

        Linear: G_rho(pts), independent of x.  Soft-min: the soft-min convex
        combination of the component densities at x.
        """
        pts = np.asarray(pts, dtype=float)
        if self.variant == "linear":
            return np.asarray(g_mu(self.kernel_g, self.rho, pts), dtype=float)
        if self.variant == "softmin":
            vals = np.array([c.value_K(K, x) for c in self.components])
            lam = np.exp(-(vals - vals.min()) / self.tau)
            lam /= lam.sum()
            dens = np.stack([c.gateaux_density(K, x, pts) for c in self.components])
            return lam @ dens
        if self.gateaux_fn is None:
            raise ValueError("raw variant has no Gateaux density callback")
        return self.gateaux_fn(K, x, pts)

    def value_measure(self, mu: MeasureSpec) -> float:
        """psi(mu) without discretization, for the linear variant."""
        from .kernels import pair_energy

        if self.variant == "linear":
            return pair_energy(self.kernel_g, mu, self.rho)
        if self.variant == "softmin":
            vals = np.array([c.value_measure(mu) for c in self.components])
            vmin = vals.min()
            return float(vmin - self.tau * np.log(np.exp(-(vals - vmin) / self.tau).sum()))
        raise ValueError("value_measure needs a kernel-functional variant")


def linear_functional(g: Kernel, rho: MeasureSpec) -> InitialCondition:
    """psi(mu) = int G_rho dmu."""
    return InitialCondition(variant="linear", kernel_g=g, rho=rho)


def softmin_functional(g: Kernel, rhos, tau: float) -> InitialCondition:
    """Soft minimum of the linear functionals for the given measures."""
    comps = tuple(linear_functional(g, r) for r in rhos)
    return InitialCondition(variant="softmin", components=comps, tau=float(tau))


def raw_functional(value_fn, lip_tv: float, grad_fn=None, gateaux_fn=None) -> InitialCondition:
    """User-supplied psi^(K) with a declared TV-Lipschitz constant."""
    return InitialCondition(variant="raw", value_fn=value_fn, grad_fn=grad_fn,
                            gateaux_fn=gateaux_fn, lip_tv_raw=float(lip_tv))


def linear_form(q) -> InitialCondition:
    """The raw linear form x -> q . x with its gradient recorded exactly."""
    from .measures import norm_l1_star

    q = np.asarray(q, dtype=float)
    return InitialCondition(
        variant="raw",
        value_fn=lambda K, x: np.asarray(x, dtype=float) @ q,
        grad_fn=lambda K, x: np.broadcast_to(q, np.shape(x)).copy(),
        lip_tv_raw=norm_l1_star(q),
        constant_grad=q,
    )


def initial_from_config(cfg: dict, g: Kernel) -> InitialCondition:
    variant = cfg.get("variant", "linear")
    if variant == "linear":
        return linear_functional(g, MeasureSpec.from_config(cfg["rho"]))
    if variant == "softmin":
        rhos = [MeasureSpec.from_config(r) for r in cfg["rhos"]]
        return softmin_functional(g, rhos, cfg["tau"])
    raise ValueError(f"config cannot describe variant {variant!r}")
