"""Configuration-driven command line for reproducible experiments.

Commands: validate-kernel, solve, hopf-lax, converge, invariants.  A single
JSON config file describes the kernel, the initial condition, the base
measure and the experiment parameters; --t/--K/--R/--seed/--out override
individual fields.  Delimited outputs carry 17 significant digits and the
provenance columns (method, K, R, seed); report paths also get a rendered
PNG figure next to the delimited output unless --no-plot is given.

Exit codes: 0 success, 1 property or hypothesis failure, 2 config error,
3 solver error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import (
    LatticeDomain,
    b_invariance,
    bidual_sanity,
    check_lower_bound,
    check_nonneg_definite,
    coarsen,
    cone_decompose,
    dyadic_grid,
    error_envelope,
    evaluate,
    extended_hamiltonian,
    first_order_residual,
    gradient_in_set_check,
    hopf_lax_measure,
    initial_from_config,
    k_convergence,
    kernel_cauchy_schwarz_check,
    kernel_matrix,
    lift,
    lipschitz_audit,
    norm_l1,
    norm_l1_star,
    project_measure,
    query,
    r_independence,
    semigroup_residual,
    solve,
    step_once,
    tv_distance,
    wasserstein,
)
from .kernels import kernel_from_config
from .measures import MeasureSpec

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


def _load_config(path: str, args) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if getattr(args, "t", None) is not None:
        cfg["times"] = [float(v) for v in args.t]
    if getattr(args, "K", None) is not None:
        cfg["K"] = int(args.K)
        cfg.pop("K_range", None)
    if getattr(args, "R", None) is not None:
        cfg["R"] = float(args.R)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = int(args.seed)
    if getattr(args, "out", None) is not None:
        cfg["out"] = args.out
    return cfg


def _parse_problem(cfg: dict):
    try:
        g = kernel_from_config(cfg["kernel"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel config: {exc}")
    psi = None
    if "initial" in cfg:
        try:
            psi = initial_from_config(cfg["initial"], g)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad initial-condition config: {exc}")
    mu = None
    if "measure" in cfg:
        try:
            mu = MeasureSpec.from_config(cfg["measure"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad measure config: {exc}")
    times = cfg.get("times", [])
    if any(t < 0 for t in times) or list(times) != sorted(times):
        raise ConfigError("times must be non-negative and ascending")
    return g, psi, mu, [float(t) for t in times]


def _maybe_plot(no_plot: bool, out: str | None, draw):
    if no_plot or not out:
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    draw(ax)
    png = out.rsplit(".", 1)[0] + ".png"
    fig.tight_layout()
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return png


def _write_json(path: str | None, payload: dict):
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_validate_kernel(args) -> int:
    cfg = _load_config(args.config, args)
    g, _, _, _ = _parse_problem(cfg)
    hypotheses = cfg.get("hypotheses", ["H1", "H5"])
    report = {"kernel": g.to_config(), "hypotheses": {}}
    ok = True
    if "H1" in hypotheses:
        r = check_lower_bound(g)
        report["hypotheses"]["lower_bound"] = r
        ok = ok and r["ok"]
    if "H5" in hypotheses:
        r = check_nonneg_definite(g, range(0, 5))
        report["hypotheses"]["nonneg_definite"] = r
        ok = ok and r["ok"]
    report["ok"] = ok
    _write_json(cfg.get("out"), report)
    return EXIT_OK if ok else EXIT_PROPERTY


def cmd_solve(args) -> int:
    cfg = _load_config(args.config, args)
    g, psi, mu, times = _parse_problem(cfg)
    if psi is None or mu is None or not times:
        raise ConfigError("solve needs initial, measure and times")
    K = int(cfg.get("K", 0))
    R = float(cfg.get("R", 4.0))
    seed = int(cfg.get("seed", 0))
    dx = float(cfg.get("dx", 0.1))
    method = cfg.get("method", "both")
    if method not in ("pde", "hopflax", "both"):
        raise ConfigError(f"unknown method {method!r}")
    run_pde = method in ("pde", "both")
    run_hl = method in ("hopflax", "both")
    if run_pde and R <= psi.lip_tv:
        raise ConfigError(
            f"R = {R} must exceed the TV-Lipschitz constant {psi.lip_tv} for the pde route"
        )

    grid = dyadic_grid(K)
    G = kernel_matrix(g, grid)
    x = project_measure(mu, K).weights
    a = psi.mass

    pde_vals = {}
    if run_pde:
        H = extended_hamiltonian(G, R)
        margin = float(np.abs(x).max())
        t_end = times[-1]
        extent = np.ceil((margin + 2.0 * H.lip_bound * t_end) / dx) * dx
        dom = LatticeDomain(K=K, dx=dx, extent=float(max(extent, dx)),
                            query_margin=margin)
        sol = solve(psi, H, t_end, dom, store_times=times, seed=seed)
        for t in times:
            pde_vals[t] = query(sol, t, x)
    hl_vals = {}
    if run_hl:
        for t in times:
            hl_vals[t] = hopf_lax_measure(psi, g, K, t, mu, seed=seed).value

    bound_coef = (R + a + 8.0 * R * G.kernel.M / G.kernel.m**2) / np.sqrt(grid.d)
    header = ["t", "method", "K", "R", "seed", "value"]
    if run_pde and run_hl:
        header += ["gap", "bound"]
    rows = []
    for t in times:
        if run_pde:
            row = [_fmt(t), "pde", str(K), _fmt(R), str(seed), _fmt(pde_vals[t])]
            if run_hl:
                row += [_fmt(abs(pde_vals[t] - hl_vals[t])), _fmt(t * bound_coef)]
            rows.append(row)
        if run_hl:
            row = [_fmt(t), "hopflax", str(K), _fmt(R), str(seed), _fmt(hl_vals[t])]
            if run_pde:
                row += [_fmt(abs(pde_vals[t] - hl_vals[t])), _fmt(t * bound_coef)]
            rows.append(row)

    out = cfg.get("out")
    lines = [",".join(header)] + [",".join(r) for r in rows]
    if out:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))

    def draw(ax):
        if run_pde:
            ax.plot(times, [pde_vals[t] for t in times], "o-", label="pde")
        if run_hl:
            ax.plot(times, [hl_vals[t] for t in times], "s--", label="hopflax")
        ax.set_xlabel("t")
        ax.set_ylabel("value")
        ax.legend()

    _maybe_plot(args.no_plot, out, draw)
    return EXIT_OK


def cmd_hopf_lax(args) -> int:
    cfg = _load_config(args.config, args)
    g, psi, mu, times = _parse_problem(cfg)
    if psi is None or mu is None or not times:
        raise ConfigError("hopf-lax needs initial, measure and times")
    K = int(cfg.get("K", 0))
    seed = int(cfg.get("seed", 0))
    a = cfg.get("mass_constraint")
    results = []
    for t in times:
        r = hopf_lax_measure(psi, g, K, t, mu, mass_constraint=a, seed=seed)
        maximizer = r.maximizer
        if hasattr(maximizer, "weights"):
            maximizer = list(maximizer.weights)
        else:
            maximizer = list(np.asarray(maximizer))
        results.append({
            "t": t, "K": K, "seed": seed, "method": "hopflax",
            "value": r.value, "maximizer": maximizer,
            "kkt_residual": r.kkt_residual, "n_starts": r.n_starts,
        })
    _write_json(cfg.get("out"), {"results": results})
    return EXIT_OK


def cmd_converge(args) -> int:
    cfg = _load_config(args.config, args)
    g, psi, mu, times = _parse_problem(cfg)
    if psi is None or mu is None:
        raise ConfigError("converge needs initial and measure")
    K_range = cfg.get("K_range", [cfg.get("K", 0)])
    R = float(cfg.get("R", 4.0))
    seed = int(cfg.get("seed", 0))
    dx = float(cfg.get("dx", 0.1))
    method = cfg.get("method", "hopflax")
    t = times[-1] if times else float(cfg.get("t", 1.0))
    if R <= psi.lip_tv:
        raise ConfigError(
            f"R = {R} must exceed the TV-Lipschitz constant {psi.lip_tv}"
        )
    try:
        rep = k_convergence(psi, g, mu, t, K_range, R, method=method, dx=dx, seed=seed)
    except ValueError as exc:
        raise ConfigError(str(exc))

    out = cfg.get("out")
    lines = ["K,method,R,seed,value,diff,E_K"]
    for i, K in enumerate(rep.K_values):
        diff = rep.successive_diffs[i] if i < len(rep.successive_diffs) else ""
        lines.append(",".join([
            str(K), rep.methods[i], _fmt(R), str(seed), _fmt(rep.values[i]),
            _fmt(diff) if diff != "" else "", _fmt(rep.theoretical_rate[i]),
        ]))
    if out:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        print("\n".join(lines))

    payload = {
        "K_values": list(rep.K_values),
        "values": list(rep.values),
        "successive_diffs": list(rep.successive_diffs),
        "theoretical_rate": list(rep.theoretical_rate),
        "fit_exponent": rep.fit_exponent,
        "method": method, "R": R, "seed": seed, "t": t,
    }
    if "r_independence" in cfg:
        rc = cfg["r_independence"]
        ri = r_independence(psi, g, mu, times or [t], int(cfg.get("K", min(K_range))),
                            float(rc["R1"]), float(rc["R2"]),
                            method=rc.get("method", "pde"), dx=dx, seed=seed)
        payload["r_independence"] = {"discrepancy": ri.discrepancy,
                                     "r_ignored": ri.r_ignored}
    if "b_invariance" in cfg:
        bc = cfg["b_invariance"]
        bi = b_invariance(g, psi, float(bc["b1"]), float(bc["b2"]), t, mu,
                          int(cfg.get("K", min(K_range))), seed=seed)
        payload["b_invariance"] = bi
    if out:
        _write_json(out.rsplit(".", 1)[0] + ".json", payload)
    else:
        _write_json(None, payload)

    def draw(ax):
        ax.plot(rep.K_values, rep.values, "o-", label="value")
        if rep.successive_diffs:
            ax2 = ax.twinx()
            ax2.semilogy(rep.K_values[:-1],
                         np.clip(rep.successive_diffs, 1e-16, None),
                         "s--", color="tab:red", label="|diff|")
            ax2.set_ylabel("|successive diff|")
        ax.set_xlabel("K")
        ax.set_ylabel("value")
    _maybe_plot(args.no_plot, out, draw)
    return EXIT_OK


def _invariant_battery(cfg: dict, seed: int) -> list:
    """The default property suite on the configured kernel: each entry is
    (name, ok, detail)."""
    g = kernel_from_config(cfg.get("kernel", {"family": "quadratic", "c": 2.0}))
    rng = np.random.default_rng(seed)
    checks = []

    # projection/lift identity and metric sanity at a couple of scales
    ok = True
    for K in (1, 3):
        x = rng.uniform(0.0, 2.0, size=2 ** (K + 1))
        ok &= np.array_equal(coarsen(lift(x, K, K + 2), K + 2, K), x)
    checks.append(("project_lift_identity", bool(ok), ""))

    ok = True
    K = 2
    grid = dyadic_grid(K)
    for _ in range(20):
        x = rng.uniform(0.0, 1.0, size=grid.d)
        y = rng.uniform(-1.0, 1.0, size=grid.d)
        ok &= x @ y <= norm_l1(x) * norm_l1_star(y) + 1e-12
    checks.append(("holder_inequality", bool(ok), ""))

    hyp = check_lower_bound(g)
    if hyp["ok"]:
        G = kernel_matrix(g, dyadic_grid(1))
        R = float(cfg.get("R", 4.0))
        H = extended_hamiltonian(G, R)
        if cfg.get("fault_injection") == "monotonicity":
            # deliberately corrupted evaluator used to exercise the failure path
            def h_eval(y):
                return evaluate(H, y, seed=seed) - 0.05 * float(np.sum(y))
        else:
            def h_eval(y):
                return evaluate(H, y, seed=seed)
        worst = 0.0
        box = 2.0 * R / H.d
        for _ in range(int(cfg.get("n_mono", 20))):
            y = rng.uniform(-box, 0.5 * box, size=H.d)
            dlt = rng.uniform(0.0, 0.5 * box, size=H.d)
            worst = max(worst, h_eval(y) - h_eval(y + dlt))
        checks.append(("hamiltonian_monotonicity", worst <= 1e-9, f"worst gap {worst:.2e}"))
        audit = lipschitz_audit(H, int(cfg.get("n_audit", 300)), seed)
        checks.append(("hamiltonian_lipschitz", audit["ok"],
                       f"ratio {audit['max_ratio']:.3f} bound {audit['bound']:.3f}"))
    else:
        checks.append(("kernel_lower_bound", False, "m <= 0"))

    checks.append(("cauchy_schwarz", kernel_cauchy_schwarz_check(
        g, MeasureSpec(atoms=((0.3, 1.0),)), MeasureSpec(atoms=((-0.5, 0.7),)))["ok"], ""))
    checks.append(("bidual_sanity", bidual_sanity(kernel_matrix(g, dyadic_grid(0)),
                                                  50, seed)["ok"], ""))
    return checks


def cmd_invariants(args) -> int:
    cfg = _load_config(args.config, args)
    seed = int(cfg.get("seed", 1))
    suite = cfg.get("suite", "default")
    if not suite:
        raise ConfigError("empty suite selection")
    checks = _invariant_battery(cfg, seed)
    payload = {"seed": seed,
               "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks],
               "ok": all(ok for _, ok, _ in checks)}
    _write_json(cfg.get("out"), payload)
    if not payload["ok"]:
        failed = [n for n, ok, _ in checks if not ok]
        print(f"failed properties: {', '.join(failed)}", file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="conehj")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("validate-kernel", "solve", "hopf-lax", "converge", "invariants"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--t", nargs="+", type=float)
        p.add_argument("--K", type=int)
        p.add_argument("--R", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--no-plot", action="store_true")
    args = parser.parse_args(argv)
    handlers = {
        "validate-kernel": cmd_validate_kernel,
        "solve": cmd_solve,
        "hopf-lax": cmd_hopf_lax,
        "converge": cmd_converge,
        "invariants": cmd_invariants,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver-level failure
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
