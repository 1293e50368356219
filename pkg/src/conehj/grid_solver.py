"""Monotone explicit solver for d_t f = H(grad f) on the non-negative orthant.

The scheme is Lax-Friedrichs in time-explicit form,

    f^{n+1}_i = f^n_i + dt * [ H(D_c f^n_i)
                 + sum_k (alpha/2) (f_{i+e_k} - 2 f_i + f_{i-e_k}) / dx ],

with central gradients D_c and artificial viscosity alpha = V d per axis,
where V is the global dual-norm Lipschitz constant of H, so each coordinate
of the numerical Hamiltonian moves at most alpha per unit gradient.  The
CFL bound dt <= dx / (2 d alpha) keeps the update monotone in every stencil
input.  At the faces x_k = 0 the central difference is replaced by the
one-sided interior-pointing difference and the viscosity term is dropped;
no boundary data is imposed there, and monotonicity at those faces rests on
H being non-decreasing.  At the outer truncation faces the last interior
slope is extrapolated linearly (backward gradient, zero second difference).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .hamiltonian import ExtendedHamiltonian, evaluate_batch
from .initial import InitialCondition

_MAX_CELLS = 8_000_000


class SchemeError(RuntimeError):
    """CFL violation, memory cap, or NaN during time stepping."""


@dataclass(frozen=True)
class LatticeDomain:
    """Uniform lattice over [0, extent]^d at spacing dx.

    query_margin is the radius (sup norm) of the region in which query
    results are covered by the finite-speed-of-propagation argument; it
    should satisfy extent >= query_margin + 2 V t_end.
    """

    K: int
    dx: float
    extent: float
    query_margin: float
    dim: int | None = None  # synthetic dimension override (default 2^{K+1})

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.extent < self.dx:
            raise ValueError("extent must cover at least one cell")
        if self.query_margin < 0 or self.query_margin > self.extent:
            raise ValueError("query_margin must lie within [0, extent]")

    @property
    def d(self) -> int:
        return int(self.dim) if self.dim is not None else 2 ** (self.K + 1)

    @property
    def n_axis(self) -> int:
        return int(np.floor(self.extent / self.dx + 1e-12)) + 1

    @property
    def axis_points(self) -> np.ndarray:
        return np.arange(self.n_axis) * self.dx


@dataclass(frozen=True)
class GridSolution:
    """Stored snapshots of the lattice solution plus scheme diagnostics."""

    domain: LatticeDomain
    times: np.ndarray
    values: list  # one flat array of length n_axis^d per stored time
    scheme_diagnostics: dict


def _check_domain(H: ExtendedHamiltonian, dom: LatticeDomain):
    d = dom.d
    if d != H.d:
        raise ValueError(f"domain dimension {d} != Hamiltonian dimension {H.d}")
    if d > 6:
        raise SchemeError(f"full-grid solver capped at d <= 6, got d = {d}")
    if dom.n_axis**d > _MAX_CELLS:
        raise SchemeError(
            f"lattice would hold {dom.n_axis ** d} cells (cap {_MAX_CELLS})"
        )


def _lattice_points(dom: LatticeDomain) -> np.ndarray:
    ax = dom.axis_points
    grids = np.meshgrid(*([ax] * dom.d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _central_gradients(f: np.ndarray, dx: float, out: np.ndarray | None = None) -> np.ndarray:
    """Per-axis difference quotients, flattened to (cells, d).

    Central in the interior; forward (interior-pointing) at index 0, which is
    the face x_k = 0; backward at the last index, which equals the central
    difference against the linearly extrapolated ghost value.
    """
    d = f.ndim
    if out is None:
        out = np.empty((d,) + f.shape)
    c = 1.0 / (2.0 * dx)
    for k in range(d):
        g = out[k]
        # g[i] = c f[i+1] - c f[i-1] in a single C pass; faces fixed after
        ndimage.correlate1d(f, [-c, 0.0, c], axis=k, output=g, mode="nearest")
        sl = [slice(None)] * d

        def at(i):
            s = list(sl)
            s[k] = i
            return tuple(s)

        g[at(0)] = (f[at(1)] - f[at(0)]) / dx
        g[at(-1)] = (f[at(-1)] - f[at(-2)]) / dx
    return out.reshape(d, -1).T


def _viscosity(f: np.ndarray, out: np.ndarray | None = None,
               tmp: np.ndarray | None = None) -> np.ndarray:
    """Sum over axes of second differences, zero on all faces."""
    d = f.ndim
    if out is None:
        out = np.zeros_like(f)
    else:
        out.fill(0.0)
    if tmp is None:
        tmp = np.empty_like(f)
    for k in range(d):
        ndimage.correlate1d(f, [1.0, -2.0, 1.0], axis=k, output=tmp, mode="nearest")
        sl = [slice(None)] * d

        def at(i):
            s = list(sl)
            s[k] = i
            return tuple(s)

        tmp[at(0)] = 0.0
        tmp[at(-1)] = 0.0
        out += tmp
    return out


def step_once(H: ExtendedHamiltonian, f: np.ndarray, dom: LatticeDomain,
              dt: float, seed: int = 0, cache: dict | None = None,
              out: np.ndarray | None = None) -> np.ndarray:
    """One explicit update; exposed so the monotonicity of the update map can
    be probed directly.

    cache, if given, holds persistent scratch buffers reused across steps;
    at solver sizes the allocation cost of fresh multi-megabyte temporaries
    would otherwise dominate the arithmetic.  out, if given, receives the
    updated layer (it must not alias f).
    """
    d = dom.d
    alpha = H.lip_bound * d
    if dt > dom.dx / (2.0 * d * alpha) * (1.0 + 1e-12):
        raise SchemeError(
            f"CFL violated: dt = {dt} exceeds {dom.dx / (2 * d * alpha)}"
        )
    work = None
    if cache is not None:
        work = cache.setdefault("work", {})
        gbuf = cache.get("gbuf")
        if gbuf is None or gbuf.shape != (d,) + f.shape:
            gbuf = np.empty((d,) + f.shape)
            cache["gbuf"] = gbuf
    grads = _central_gradients(f, dom.dx, out=cache["gbuf"] if cache else None)
    hvals = evaluate_batch(H, grads, seed=seed, work=work).reshape(f.shape)
    vbuf = tbuf = None
    if cache is not None:
        vbuf = cache.get("vbuf")
        if vbuf is None or vbuf.shape != f.shape:
            vbuf = np.empty(f.shape)
            tbuf = np.empty(f.shape)
            cache["vbuf"], cache["tbuf"] = vbuf, tbuf
        else:
            tbuf = cache["tbuf"]
    incr = _viscosity(f, out=vbuf, tmp=tbuf)
    incr *= alpha / (2.0 * dom.dx)
    incr += hvals
    incr *= dt
    if out is None:
        return f + incr
    return np.add(f, incr, out=out)


def solve(psi: InitialCondition, H: ExtendedHamiltonian, t_end: float,
          dom: LatticeDomain, store_times=None, seed: int = 0) -> GridSolution:
    """March the monotone scheme to t_end, storing the requested snapshots.

    Snapshots default to {0, t_end}.  Each inter-snapshot segment is stepped
    with the largest uniform dt respecting the CFL bound, so stored times are
    hit exactly.  The state is double-buffered: each update reads the frozen
    previous layer only.
    """
    _check_domain(H, dom)
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    d = dom.d
    alpha = H.lip_bound * d
    dt_max = dom.dx / (2.0 * d * alpha)

    if store_times is None:
        store_times = [0.0, t_end] if t_end > 0 else [0.0]
    times = np.array(sorted(set(float(t) for t in store_times) | {0.0, float(t_end)}))
    if times[0] < 0 or times[-1] > t_end + 1e-15:
        raise ValueError("store_times must lie in [0, t_end]")

    pts = _lattice_points(dom)
    shape = (dom.n_axis,) * d
    f = np.asarray(psi.value_K(dom.K, pts), dtype=float).reshape(shape)
    if not np.all(np.isfinite(f)):
        raise SchemeError("initial data is not finite on the lattice")

    values = [f.ravel().copy()]
    total_steps = 0
    max_resid = 0.0
    for seg_start, seg_end in zip(times[:-1], times[1:]):
        seg = float(seg_end - seg_start)
        if seg <= 0:
            values.append(f.ravel().copy())
            continue
        n_steps = max(int(np.ceil(seg / dt_max - 1e-12)), 1)
        dt = seg / n_steps
        cache: dict = {}
        spare = np.empty_like(f)
        for _ in range(n_steps):
            f_new = step_once(H, f, dom, dt, seed=seed, cache=cache, out=spare)
            if not np.isfinite(f_new.max()) or not np.isfinite(f_new.min()):
                raise SchemeError(f"NaN/inf detected at step {total_steps + 1}")
            # the increment buffer holds dt * (H + viscosity) for this step
            vb = cache["vbuf"]
            max_resid = max(max_resid, abs(float(vb.max())), abs(float(vb.min())))
            spare, f = f, f_new
            total_steps += 1
        values.append(f.ravel().copy())

    diagnostics = {
        "alpha": alpha,
        "dt_max": dt_max,
        "n_steps": total_steps,
        "cfl_number": 1.0 if total_steps else 0.0,
        "max_one_step_residual": max_resid,
    }
    return GridSolution(domain=dom, times=times, values=values,
                        scheme_diagnostics=diagnostics)


def query(sol: GridSolution, t: float, x) -> float:
    """Multilinear interpolation in space, linear in time.

    Refuses points outside the query-margin region or times outside the
    stored range rather than extrapolating.
    """
    dom = sol.domain
    x = np.asarray(x, dtype=float)
    if x.shape != (dom.d,):
        raise ValueError(f"query point must have dimension {dom.d}")
    if np.any(x < -1e-12) or float(np.abs(x).max()) > dom.query_margin + 1e-12:
        raise ValueError("query point outside the guaranteed-accuracy region")
    if t < sol.times[0] - 1e-12 or t > sol.times[-1] + 1e-12:
        raise ValueError("query time outside the stored range")

    def interp_space(flat: np.ndarray) -> float:
        grid = flat.reshape((dom.n_axis,) * dom.d)
        pos = np.clip(x, 0.0, dom.extent) / dom.dx
        base = np.minimum(pos.astype(int), dom.n_axis - 2)
        frac = pos - base
        val = 0.0
        for corner in range(2**dom.d):
            bits = (corner >> np.arange(dom.d)) & 1
            wgt = np.prod(np.where(bits == 1, frac, 1.0 - frac))
            if wgt == 0.0:
                continue
            val += wgt * float(grid[tuple(base + bits)])
        return val

    j = int(np.searchsorted(sol.times, t, side="right")) - 1
    j = min(max(j, 0), len(sol.times) - 2) if len(sol.times) > 1 else 0
    if len(sol.times) == 1 or abs(t - sol.times[j]) < 1e-14:
        return interp_space(sol.values[j])
    t0, t1 = sol.times[j], sol.times[j + 1]
    lam = (t - t0) / (t1 - t0)
    return (1.0 - lam) * interp_space(sol.values[j]) + lam * interp_space(sol.values[j + 1])


def lipschitz_profile(sol: GridSolution) -> np.ndarray:
    """Per stored time, max over lattice edges of |df| d / dx: the discrete
    Lipschitz constant in the normalized l1 norm (an edge has length dx/d)."""
    dom = sol.domain
    shape = (dom.n_axis,) * dom.d
    out = np.zeros(len(sol.times))
    for i, flat in enumerate(sol.values):
        grid = flat.reshape(shape)
        worst = 0.0
        for k in range(dom.d):
            worst = max(worst, float(np.abs(np.diff(grid, axis=k)).max()))
        out[i] = worst * dom.d / dom.dx
    return out


def grid_solution_csv(sol: GridSolution, path: str):
    """Write the stored snapshots as rows t,i1,...,id,value."""
    dom = sol.domain
    idx = np.stack(np.meshgrid(*([np.arange(dom.n_axis)] * dom.d), indexing="ij"),
                   axis=-1).reshape(-1, dom.d)
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"i{k + 1}" for k in range(dom.d)) + ",value\n")
        for t, flat in zip(sol.times, sol.values):
            for row, v in zip(idx, flat):
                fh.write(f"{t!r}," + ",".join(str(i) for i in row) + f",{v:.17g}\n")
