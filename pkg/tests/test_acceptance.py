"""End-to-end acceptance battery: one pass/fail line per criterion.

Each criterion computes its quantities first, reports a single line on the
terminal, then asserts, so the line is printed whether or not the criterion
holds.
"""

import time

import numpy as np
import pytest

from conehj import (
    LatticeDomain,
    b_invariance,
    bidual_sanity,
    coarsen,
    delta,
    dyadic_grid,
    error_envelope,
    extended_hamiltonian,
    first_order_residual,
    gradient_in_set_check,
    hopf_lax_finite,
    hopf_lax_measure,
    k_convergence,
    kernel,
    kernel_matrix,
    lift,
    linear_functional,
    lipschitz_audit,
    lipschitz_profile,
    norm_l1,
    norm_l1_star,
    project_measure,
    query,
    r_independence,
    semigroup_residual,
    softmin_functional,
    solve,
    step_once,
    tv_distance,
    uniform,
)

SEEDS = (1, 2, 3)


def _report(capsys, n, label, ok, detail):
    with capsys.disabled():
        print(f"criterion {n} ({label}): {'PASS' if ok else 'FAIL'} [{detail}]")


def _worked_psi():
    g = kernel("quadratic", c=2.0)
    return g, linear_functional(g, delta(-1.0, 1.0))


def test_criterion_1_analytic_oracle(capsys):
    g, psi = _worked_psi()
    start = time.perf_counter()
    worst = 0.0
    for K in range(4):
        for t in (0.5, 1.0, 2.0):
            v = hopf_lax_measure(psi, g, K, t, delta(0.0, 1.0)).value
            worst = max(worst, abs(v - (2.0 + 1.5 * t)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 5.0
    _report(capsys, 1, "analytic oracle", ok,
            f"max err {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 5.0


def test_criterion_2_pde_hopflax_agreement(capsys):
    g, psi = _worked_psi()
    K, R, t, dx = 0, 4.0, 0.5, 0.05
    G = kernel_matrix(g, dyadic_grid(K))
    H = extended_hamiltonian(G, R)
    x = project_measure(delta(0.0, 1.0), K).weights
    start = time.perf_counter()
    margin = float(np.abs(x).max())
    extent = float(np.ceil((margin + 2.0 * H.lip_bound * t) / dx) * dx)
    dom = LatticeDomain(K=K, dx=dx, extent=extent, query_margin=margin)
    sol = solve(psi, H, t, dom)
    v_pde = query(sol, t, x)
    v_hl = hopf_lax_measure(psi, g, K, t, delta(0.0, 1.0)).value
    elapsed = time.perf_counter() - start
    gap = abs(v_pde - v_hl)
    a, m, M = 1.0, g.m, g.M
    bound = (t / np.sqrt(G.d)) * (R + a + 8.0 * R * M / m**2)
    ok = gap <= bound and gap <= 0.05 and elapsed < 30.0
    _report(capsys, 2, "pde vs hopf-lax", ok,
            f"gap {gap:.2e}, bound {bound:.2f}, {elapsed:.1f}s")
    assert gap <= bound
    assert gap <= 0.05
    assert elapsed < 30.0


def test_criterion_3_lipschitz_preservation(capsys):
    g, psi = _worked_psi()
    L0 = 3.0
    worst_low, worst_high = np.inf, -np.inf
    for K, dx, t in ((0, 0.25, 0.25), (1, 0.5, 0.1)):
        G = kernel_matrix(g, dyadic_grid(K))
        H = extended_hamiltonian(G, 4.0)
        d = G.d
        extent = float(np.ceil((1.0 + 2.0 * H.lip_bound * t) / dx) * dx)
        dom = LatticeDomain(K=K, dx=dx, extent=extent, query_margin=1.0)
        sol = solve(psi, H, t, dom, store_times=[0.0, t / 2.0, t])
        prof = lipschitz_profile(sol)
        worst_low = min(worst_low, float(prof.min()) - (L0 - 1e-9))
        worst_high = max(worst_high, float(prof.max()) - (L0 + 2.0 * dx * H.lip_bound))
    ok = worst_low >= 0.0 and worst_high <= 0.0
    _report(capsys, 3, "Lipschitz preservation", ok,
            f"low margin {worst_low:.2e}, high margin {-worst_high:.2e}")
    assert worst_low >= 0.0
    assert worst_high <= 0.0


def test_criterion_4_k_convergence(capsys):
    g = kernel("quadratic", c=2.0)
    psi = linear_functional(g, uniform(1.0))
    t = 1.0
    target = 19.0 / 9.0 + (19.0 / 18.0) * t
    start = time.perf_counter()
    rep = k_convergence(psi, g, uniform(1.0), t, range(0, 5), R=4.0)
    elapsed = time.perf_counter() - start
    worst = max(abs(v - target) - 3.0 * 2.0**-K
                for K, v in zip(rep.K_values, rep.values))
    ok = worst <= 0.0 and rep.fit_exponent <= -0.4 and elapsed < 60.0
    _report(capsys, 4, "K-convergence", ok,
            f"envelope margin {-worst:.2e}, fit {rep.fit_exponent:.2f}, {elapsed:.1f}s")
    assert worst <= 0.0
    assert rep.fit_exponent <= -0.4
    assert elapsed < 60.0


def test_criterion_5_r_independence(capsys):
    g, psi = _worked_psi()
    t = 0.5
    res = r_independence(psi, g, delta(0.0, 1.0), [t], K=0,
                         R1=4.0, R2=6.0, method="pde", dx=0.2)
    envelope = error_envelope(0, 6.0, g.m, g.M) * t
    ok = res.discrepancy <= 1e-8 and res.discrepancy <= envelope
    _report(capsys, 5, "R-independence", ok,
            f"discrepancy {res.discrepancy:.2e}")
    assert res.discrepancy <= 1e-8
    assert res.discrepancy <= envelope


def test_criterion_6_b_invariance(capsys):
    gz = kernel("affine", c=0.0)
    psi = linear_functional(gz, delta(-1.0, 1.0))
    t = 1.0
    out = b_invariance(gz, psi, 2.0, 3.0, t, delta(0.0, 1.0), K=2)
    # common value: int(-x) dmu + t/2 with mu = delta_0
    target = 0.0 + t / 2.0
    worst_val = max(abs(v - target) for v in out["values"].values())
    ok = out["discrepancy"] <= 1e-6 and worst_val <= 1e-6
    _report(capsys, 6, "b-invariance", ok,
            f"discrepancy {out['discrepancy']:.2e}, value err {worst_val:.2e}")
    assert out["discrepancy"] <= 1e-6
    assert worst_val <= 1e-6


def test_criterion_7_first_order_condition(capsys):
    g, psi = _worked_psi()
    r1 = hopf_lax_measure(psi, g, 2, 1.0, delta(0.0, 1.0))
    res1 = first_order_residual(psi, g, r1, delta(0.0, 1.0), 1.0)
    gz = kernel("affine", c=0.0)
    psic = linear_functional(gz, delta(-1.0, 1.0))
    r2 = hopf_lax_measure(psic, gz, 2, 1.0, delta(0.0, 1.0), mass_constraint=1.0)
    res2 = first_order_residual(psic, gz, r2, delta(0.0, 1.0), 1.0)
    ok = res1 <= 1e-6 and res2 <= 1e-6
    _report(capsys, 7, "first-order condition", ok,
            f"residuals {res1:.2e}, {res2:.2e}")
    assert res1 <= 1e-6
    assert res2 <= 1e-6


def _audit_battery():
    """Full-size Lipschitz/monotonicity audits, one dimension per seed."""
    quad = kernel("quadratic", c=2.0)
    expk = kernel("exponential")
    cases = [
        (1, extended_hamiltonian(kernel_matrix(quad, dyadic_grid(0)), 4.0)),
        (2, extended_hamiltonian(kernel_matrix(expk, dyadic_grid(1)), 3.0)),
        (3, extended_hamiltonian(kernel_matrix(quad, dyadic_grid(2)), 4.0)),
    ]
    reports = []
    for seed, H in cases:
        reports.append((seed, H.d, lipschitz_audit(H, 10**4, seed)))
    return reports


def _scheme_certificate(seed):
    """Finite-difference monotonicity probe of the update map (interior)."""
    rng = np.random.default_rng(seed)
    g = kernel("quadratic", c=2.0)
    H = extended_hamiltonian(kernel_matrix(g, dyadic_grid(0)), 4.0)
    dom = LatticeDomain(K=0, dx=0.5, extent=2.0, query_margin=1.0)
    n = dom.n_axis
    dt = 0.9 * dom.dx / (2.0 * 2 * (H.lip_bound * 2))
    interior = (slice(0, n - 1), slice(0, n - 1))
    worst = np.inf
    for _ in range(10):
        f = rng.uniform(-1.0, 1.0, (n, n))
        i = (int(rng.integers(0, n - 1)), int(rng.integers(0, n - 1)))
        f2 = f.copy()
        f2[i] += 1e-3
        worst = min(worst, float(
            (step_once(H, f2, dom, dt) - step_once(H, f, dom, dt))[interior].min()
        ))
    return worst


def _comparison_and_cstar(seed):
    """Comparison ordering of evolved data and C*-monotonicity preservation."""
    g = kernel("quadratic", c=2.0)
    G = kernel_matrix(g, dyadic_grid(0))
    H = extended_hamiltonian(G, 4.0)
    psi_low = softmin_functional(g, [delta(-1.0, 1.0), uniform(1.0)], tau=0.25)
    psi_high = linear_functional(g, delta(-1.0, 1.0))
    dom = LatticeDomain(K=0, dx=0.5, extent=2.0, query_margin=1.0)
    s1 = solve(psi_low, H, 0.2, dom, seed=seed)
    s2 = solve(psi_high, H, 0.2, dom, seed=seed)
    cmp_worst = float((np.asarray(s2.values[-1]) - np.asarray(s1.values[-1])).min())

    # C*-monotonicity: the gradients of psi_low lie in the cone, so along any
    # dual-cone direction z (G z >= 0) the Hopf-Lax values must not decrease
    rng = np.random.default_rng(seed)
    cstar_worst = np.inf
    for _ in range(10):
        x = rng.uniform(0.5, 1.5, 2)
        w = rng.uniform(0.0, 1.0, 2)
        z = np.linalg.solve(G.entries, w)
        z *= 0.25 / max(norm_l1(z), 1e-12)
        if np.any(x + z < 0):
            continue
        v0 = hopf_lax_finite(psi_low, G, 0.5, x, seed=seed).value
        v1 = hopf_lax_finite(psi_low, G, 0.5, x + z, seed=seed).value
        cstar_worst = min(cstar_worst, v1 - v0)
    return cmp_worst, cstar_worst


def _metric_and_holder(seed):
    rng = np.random.default_rng(seed)
    worst = np.inf
    for K in (1, 3):
        x = rng.uniform(0.0, 2.0, 2 ** (K + 1))
        if not np.array_equal(coarsen(lift(x, K, K + 2), K + 2, K), x):
            return -np.inf
    grid = dyadic_grid(2)
    for _ in range(30):
        x = rng.uniform(0.0, 1.0, grid.d)
        y = rng.uniform(-1.0, 1.0, grid.d)
        worst = min(worst, norm_l1(x) * norm_l1_star(y) - x @ y)
        from conehj import DiscreteMeasure

        a = DiscreteMeasure(grid, rng.uniform(0, 2, grid.d))
        b = DiscreteMeasure(grid, rng.uniform(0, 2, grid.d))
        c = DiscreteMeasure(grid, rng.uniform(0, 2, grid.d))
        worst = min(worst, tv_distance(a, b) + tv_distance(b, c) - tv_distance(a, c))
    return worst


def test_criterion_8_property_battery(capsys):
    start = time.perf_counter()
    g, psi = _worked_psi()
    G0 = kernel_matrix(g, dyadic_grid(0))

    audits = _audit_battery()
    audits_ok = all(r["ok"] and r["mono_ok"] for _, _, r in audits)

    scheme_ok = all(_scheme_certificate(s) >= -1e-12 for s in SEEDS)

    cmp_ok = cstar_ok = True
    for s in SEEDS:
        cw, zw = _comparison_and_cstar(s)
        cmp_ok &= cw >= -1e-10
        cstar_ok &= zw >= -1e-8

    grad_ok = True
    for s in SEEDS:
        rep = gradient_in_set_check(
            lambda x: hopf_lax_finite(psi, G0, 0.5, x).value,
            G0, a=psi.mass, n_pairs=40, seed=s)
        grad_ok &= rep["violations"] == 0

    semi = max(semigroup_residual(psi, G0, 1.0, 0.5, np.array([0.0, 2.0]), seed=s)
               for s in SEEDS)
    semi_ok = semi <= 1e-8

    bidual_ok = all(bidual_sanity(G0, 50, seed=s)["ok"] for s in SEEDS)
    metric_ok = all(_metric_and_holder(s) >= -1e-12 for s in SEEDS)

    elapsed = time.perf_counter() - start
    parts = {
        "lipschitz audits": audits_ok,
        "scheme certificate": scheme_ok,
        "comparison": cmp_ok,
        "C* monotonicity": cstar_ok,
        "gradient set": grad_ok,
        "semigroup": semi_ok,
        "biduality": bidual_ok,
        "metric/Holder": metric_ok,
    }
    ok = all(parts.values())
    detail = "all sub-suites ok" if ok else "failed: " + ", ".join(
        k for k, v in parts.items() if not v)
    _report(capsys, 8, "property battery", ok, f"{detail}, {elapsed:.1f}s")
    for name, good in parts.items():
        assert good, name
