"""Dyadic grids on [-1, 1], discrete measures, and the norms they live in.

The scale-K grid holds the d = 2^{K+1} dyadic points i/2^K with
-2^K <= i < 2^K.  A weight vector x on that grid represents the measure
mu_x = d^{-1} sum_k x_k delta_k, so the normalized l1 norm of x is the
total mass of mu_x.  All distances and estimates downstream are stated in
the normalized l1 norm and its dual (d times the max norm).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SCALE = 20


class ScaleError(ValueError):
    """Scale out of range or scales passed in the wrong order."""


class GridMismatchError(ValueError):
    """Two discrete measures do not share a grid."""


class MassMismatchError(ValueError):
    """Wasserstein distance requested between measures of unequal mass."""


@dataclass(frozen=True)
class DyadicGrid:
    """The point set D_K = {i/2^K : -2^K <= i < 2^K}."""

    K: int
    points: np.ndarray

    @property
    def d(self) -> int:
        return 2 ** (self.K + 1)

    @property
    def spacing(self) -> float:
        return 2.0 ** (-self.K)


def dyadic_grid(K: int) -> DyadicGrid:
    """Build the dyadic grid at scale K.

    Points are exact in double precision (denominators are powers of two),
    strictly increasing, starting at -1 and ending at 1 - 2^{-K}.
    """
    if K < 0:
        raise ScaleError(f"scale must be non-negative, got {K}")
    if K > MAX_SCALE:
        raise ScaleError(f"scale {K} exceeds cap {MAX_SCALE} (dimension 2^{K + 1})")
    n = 2**K
    points = np.arange(-n, n, dtype=float) / n
    points.setflags(write=False)
    return DyadicGrid(K=K, points=points)


@dataclass(frozen=True)
class MeasureSpec:
    """A non-negative measure given by atoms plus a piecewise-constant density.

    ``atoms`` is a list of (location, weight) with locations in [-1, 1] and
    weights >= 0.  ``density`` is a list of (a, b, value) pieces with
    value >= 0, understood as value * Lebesgue on [a, b) within [-1, 1].
    """

    atoms: tuple[tuple[float, float], ...] = ()
    density: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((float(l), float(w)) for l, w in self.atoms))
        object.__setattr__(
            self, "density", tuple((float(a), float(b), float(v)) for a, b, v in self.density)
        )
        for loc, w in self.atoms:
            if not (-1.0 <= loc <= 1.0):
                raise ValueError(f"atom location {loc} outside [-1, 1]")
            if w < 0:
                raise ValueError(f"negative atom weight {w}")
        for a, b, v in self.density:
            if not (-1.0 <= a <= b <= 1.0):
                raise ValueError(f"density piece [{a}, {b}] not inside [-1, 1]")
            if v < 0:
                raise ValueError(f"negative density value {v}")

    @property
    def total_mass(self) -> float:
        mass = sum(w for _, w in self.atoms)
        mass += sum(v * (b - a) for a, b, v in self.density)
        return float(mass)

    def scaled(self, c: float) -> "MeasureSpec":
        if c < 0:
            raise ValueError("scale factor must be non-negative")
        return MeasureSpec(
            atoms=tuple((l, c * w) for l, w in self.atoms),
            density=tuple((a, b, c * v) for a, b, v in self.density),
        )

    @staticmethod
    def from_config(cfg: dict) -> "MeasureSpec":
        return MeasureSpec(
            atoms=tuple((l, w) for l, w in cfg.get("atoms", [])),
            density=tuple((a, b, v) for a, b, v in cfg.get("density", [])),
        )

    def to_config(self) -> dict:
        return {
            "atoms": [[l, w] for l, w in self.atoms],
            "density": [[a, b, v] for a, b, v in self.density],
        }


def delta(loc: float, weight: float = 1.0) -> MeasureSpec:
    """Single atom of the given weight."""
    return MeasureSpec(atoms=((loc, weight),))


def uniform(mass: float = 1.0) -> MeasureSpec:
    """Uniform measure of the given total mass on [-1, 1]."""
    return MeasureSpec(density=((-1.0, 1.0, mass / 2.0),))


@dataclass(frozen=True)
class DiscreteMeasure:
    """Non-negative weight vector on a dyadic grid, representing mu_x."""

    grid: DyadicGrid
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.d,):
            raise ValueError(f"weights length {w.shape} != grid cardinality {self.grid.d}")
        if np.any(w < 0):
            raise ValueError("negative weights in DiscreteMeasure")
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return norm_l1(self.weights)


def project_measure(spec: MeasureSpec, K: int) -> DiscreteMeasure:
    """Project a measure to scale K: weights_k = d * mu[k, k + 2^{-K}).

    The final bin is closed at 1 so that total mass is conserved.
    """
    grid = dyadic_grid(K)
    d = grid.d
    h = grid.spacing
    w = np.zeros(d)
    for loc, wt in spec.atoms:
        # bin index: largest grid point <= loc, with {1} folded into the last bin
        i = min(int(np.floor((loc + 1.0) / h)), d - 1)
        w[i] += d * wt
    for a, b, v in spec.density:
        if b <= a or v == 0.0:
            continue
        for i in range(d):
            lo = max(a, -1.0 + i * h)
            hi = min(b, -1.0 + (i + 1) * h)
            if hi > lo:
                w[i] += d * v * (hi - lo)
        # density mass exactly at {1} is Lebesgue-null; nothing to fold
    return DiscreteMeasure(grid=grid, weights=w)


def lift(x: np.ndarray, K: int, K_to: int) -> np.ndarray:
    """Lift a weight vector from scale K to a finer scale K_to > K.

    Each coordinate is repeated 2^{K_to - K} times in grid order; the
    represented measure spreads every atom uniformly over its bin.
    """
    if K_to <= K:
        raise ScaleError(f"lift needs K_to > K, got {K} -> {K_to}")
    x = np.asarray(x, dtype=float)
    if x.shape != (2 ** (K + 1),):
        raise ValueError("weight vector length does not match scale K")
    return np.repeat(x, 2 ** (K_to - K))


def coarsen(x: np.ndarray, K_from: int, K_to: int) -> np.ndarray:
    """Coarsen a weight vector from scale K_from to K_to < K_from by bin averages."""
    if K_to >= K_from:
        raise ScaleError(f"coarsen needs K_to < K_from, got {K_from} -> {K_to}")
    x = np.asarray(x, dtype=float)
    if x.shape != (2 ** (K_from + 1),):
        raise ValueError("weight vector length does not match scale K_from")
    block = 2 ** (K_from - K_to)
    return x.reshape(-1, block).mean(axis=1)


def norm_l1(x: np.ndarray) -> float:
    """Normalized l1 norm d^{-1} sum |x_k|."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(x).sum() / x.size)


def norm_l1_star(y: np.ndarray) -> float:
    """Dual norm d * max |y_k|, so that x.y <= norm_l1(x) * norm_l1_star(y)."""
    y = np.asarray(y, dtype=float)
    return float(y.size * np.abs(y).max()) if y.size else 0.0


def tv_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Total variation distance between two discrete measures on one grid."""
    if mu.grid.K != nu.grid.K:
        raise GridMismatchError("tv_distance needs measures on the same grid")
    diff = mu.weights - nu.weights
    pos = diff[diff > 0].sum()
    neg = -diff[diff < 0].sum()
    return float(max(pos, neg) / mu.grid.d)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """1D Wasserstein distance via the cumulative mass functions.

    Defined for equal-mass pairs only: sum over bins of |F_mu - F_nu| times
    the bin width.
    """
    if mu.grid.K != nu.grid.K:
        raise GridMismatchError("wasserstein needs measures on the same grid")
    d = mu.grid.d
    mass_mu = mu.weights.sum() / d
    mass_nu = nu.weights.sum() / d
    if abs(mass_mu - mass_nu) > 1e-12:
        raise MassMismatchError(f"unequal masses {mass_mu} vs {mass_nu}")
    F = np.cumsum(mu.weights - nu.weights) / d
    return float(np.abs(F).sum() * mu.grid.spacing)
