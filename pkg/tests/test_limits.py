"""Scale limits, radius independence, translation invariance, cone geometry."""

import numpy as np
import pytest

from conehj import (
    b_invariance,
    bidual_sanity,
    delta,
    distance_like,
    dyadic_grid,
    error_envelope,
    gradient_in_set_check,
    k_convergence,
    kernel,
    kernel_matrix,
    linear_form,
    linear_functional,
    r_independence,
    uniform,
)


def _quad():
    return kernel("quadratic", c=2.0)


def test_error_envelope_values():
    assert error_envelope(0, 1.0, 2.0, 3.0) == pytest.approx(56.0 * 3.0 / 4.0)
    assert error_envelope(2, 1.0, 2.0, 3.0) == pytest.approx(56.0 * 3.0 / 8.0)
    # halves every two scales
    assert error_envelope(4, 2.0, 1.0, 1.0) == pytest.approx(
        error_envelope(2, 2.0, 1.0, 1.0) / 2.0
    )


def test_k_convergence_grid_exact_case_is_flat():
    # linear data depending on mu only through its mass: every scale agrees
    g = _quad()
    psi = linear_functional(g, delta(-1.0, 1.0))
    rep = k_convergence(psi, g, delta(0.0, 1.0), 1.0, range(0, 4), R=4.0)
    np.testing.assert_allclose(rep.values, 3.5, atol=1e-9)
    assert rep.fit_exponent == float("-inf")
    assert all(d <= 1e-9 for d in rep.successive_diffs)


def test_k_convergence_uniform_case_decays():
    g = _quad()
    psi = linear_functional(g, uniform(1.0))
    rep = k_convergence(psi, g, uniform(1.0), 1.0, range(0, 5), R=4.0)
    # exact value 19/9 + 19/18 t at t = 1
    target = 19.0 / 9.0 + 19.0 / 18.0
    for K, v in zip(rep.K_values, rep.values):
        assert abs(v - target) <= 3.0 * 2.0**-K
    assert rep.fit_exponent <= -0.4
    for K, env in zip(rep.K_values, rep.theoretical_rate):
        assert env == pytest.approx(error_envelope(K, 4.0, g.m, g.M))


def test_k_convergence_validation():
    g = _quad()
    psi = linear_functional(g, delta(-1.0, 1.0))
    with pytest.raises(ValueError):
        k_convergence(psi, g, delta(0.0, 1.0), 1.0, range(0, 3), R=1.0)
    with pytest.raises(ValueError):
        k_convergence(psi, g, delta(0.0, 1.0), 1.0, range(0, 3), R=4.0, method="pde")
    with pytest.raises(ValueError):
        k_convergence(psi, g, delta(0.0, 1.0), 1.0, range(0, 2), R=4.0, method="nope")


def test_r_independence_hopflax_route():
    g = _quad()
    psi = linear_functional(g, delta(-1.0, 1.0))
    res = r_independence(psi, g, delta(0.0, 1.0), [0.5, 1.0], K=0,
                         R1=4.0, R2=6.0, method="hopflax")
    assert res.r_ignored and res.discrepancy == 0.0


def test_r_independence_pde_route():
    g = _quad()
    psi = linear_functional(g, delta(-1.0, 1.0))
    res = r_independence(psi, g, delta(0.0, 1.0), [0.25], K=0,
                         R1=4.0, R2=5.0, method="pde", dx=0.25)
    assert not res.r_ignored
    assert res.discrepancy <= 1e-8


def test_r_independence_rejects_small_radii():
    g = _quad()
    psi = linear_functional(g, delta(-1.0, 1.0))  # lip_tv just above 3
    with pytest.raises(ValueError):
        r_independence(psi, g, delta(0.0, 1.0), [1.0], K=0, R1=2.0, R2=6.0)


def test_b_invariance_affine_shifts():
    # psi(mu) = int(-x) dmu under g = z shifted into positivity: the
    # corrected values agree across shifts and match the closed form
    gz = kernel("affine", c=0.0)
    psi = linear_functional(gz, delta(-1.0, 1.0))
    out = b_invariance(gz, psi, 2.0, 3.0, 1.0, delta(0.0, 1.0), K=2)
    assert out["discrepancy"] <= 1e-6
    # common value: the b-free evolution started at int(-x) dmu = 0
    for v in out["values"].values():
        assert v == pytest.approx(0.5, abs=1e-6)


def test_b_invariance_rejects_nonpositive_shift():
    gz = kernel("affine", c=0.0)  # m = -1: b = 0.5 leaves m <= 0
    psi = linear_functional(gz, delta(-1.0, 1.0))
    with pytest.raises(ValueError):
        b_invariance(gz, psi, 0.5, 2.0, 1.0, delta(0.0, 1.0), K=1)


def test_distance_like_oracles():
    assert distance_like(np.array([1.0, 2.0])) == pytest.approx(0.5)
    assert distance_like(np.array([0.0, 2.0, 1.0])) == 0.0
    with pytest.raises(ValueError):
        distance_like(np.array([-1.0, 2.0]))
    with pytest.raises(ValueError):
        distance_like(np.array([]))


def test_gradient_in_set_for_hopf_lax_values():
    from conehj import hopf_lax_finite

    g = _quad()
    G = kernel_matrix(g, dyadic_grid(0))
    psi = linear_functional(g, delta(-1.0, 1.0))
    t = 0.5

    def f(x):
        return hopf_lax_finite(psi, G, t, x).value

    rep = gradient_in_set_check(f, G, a=psi.mass, n_pairs=60, seed=0)
    assert rep["violations"] == 0
    assert rep["worst_margin"] >= -1e-9


def test_gradient_in_set_flags_fast_decrease():
    # a function falling faster than the support bound allows must be caught
    g = _quad()
    G = kernel_matrix(g, dyadic_grid(0))
    rep = gradient_in_set_check(lambda x: -10.0 * x.sum(), G, a=1.0,
                                n_pairs=60, seed=0)
    assert rep["violations"] > 0


def test_bidual_sanity():
    g = _quad()
    for K in (0, 1, 2):
        rep = bidual_sanity(kernel_matrix(g, dyadic_grid(K)), 40, seed=K)
        assert rep["ok"]
        assert rep["separators"] > 0
        assert rep["n_samples"] == 40
