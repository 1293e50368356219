"""Command line: configs, overrides, delimited output, plots, exit codes."""

import json

import pytest

from conehj.cli import main

QUAD = {"family": "quadratic", "c": 2.0}
BASE = {
    "kernel": QUAD,
    "initial": {"variant": "linear", "rho": {"atoms": [[-1.0, 1.0]]}},
    "measure": {"atoms": [[0.0, 1.0]]},
    "times": [0.5, 1.0],
    "K": 0,
    "R": 4.0,
    "seed": 0,
}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_validate_kernel_ok(tmp_path, capsys):
    path = _write(tmp_path, {"kernel": QUAD})
    assert main(["validate-kernel", path]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"]
    assert report["hypotheses"]["lower_bound"]["ok"]
    assert report["hypotheses"]["nonneg_definite"]["ok"]


def test_validate_kernel_failing_hypothesis(tmp_path, capsys):
    # 2 - z^2 is positive but not of non-negative type
    path = _write(tmp_path, {"kernel": {"family": "polynomial", "coeffs": [2.0, 0.0, -1.0]}})
    assert main(["validate-kernel", path]) == 1
    report = json.loads(capsys.readouterr().out)
    assert not report["ok"]


def test_missing_config_is_config_error(tmp_path):
    assert main(["solve", str(tmp_path / "absent.json")]) == 2


def test_malformed_json_is_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["solve", str(p)]) == 2


def test_bad_kernel_family_is_config_error(tmp_path):
    path = _write(tmp_path, {**BASE, "kernel": {"family": "sinusoid"}})
    assert main(["solve", path]) == 2


def test_unsorted_times_is_config_error(tmp_path):
    path = _write(tmp_path, {**BASE, "times": [1.0, 0.5]})
    assert main(["solve", path]) == 2


def test_solve_hopflax_csv(tmp_path):
    out = tmp_path / "vals.csv"
    cfg = {**BASE, "method": "hopflax", "out": str(out)}
    path = _write(tmp_path, cfg)
    assert main(["solve", path, "--no-plot"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,method,K,R,seed,value"
    rows = [l.split(",") for l in lines[1:]]
    assert [r[1] for r in rows] == ["hopflax", "hopflax"]
    assert [r[2] for r in rows] == ["0", "0"]  # provenance K
    assert [r[4] for r in rows] == ["0", "0"]  # provenance seed
    # exact values 2 + 1.5 t at full precision
    assert float(rows[0][5]) == pytest.approx(2.75, abs=1e-12)
    assert float(rows[1][5]) == pytest.approx(3.5, abs=1e-12)


def test_solve_both_methods_gap_and_bound(tmp_path):
    out = tmp_path / "vals.csv"
    cfg = {**BASE, "method": "both", "dx": 0.5, "times": [0.25], "out": str(out)}
    path = _write(tmp_path, cfg)
    assert main(["solve", path, "--no-plot"]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,method,K,R,seed,value,gap,bound"
    for l in lines[1:]:
        f = l.split(",")
        gap, bound = float(f[6]), float(f[7])
        assert gap <= bound
        assert gap <= 1e-9  # the scheme is exact on linear data


def test_solve_seventeen_digit_output(tmp_path):
    out = tmp_path / "vals.csv"
    # 2 + 1.5 * 0.1 has no short decimal form, so all digits must show
    cfg = {**BASE, "method": "hopflax", "times": [0.1], "out": str(out)}
    path = _write(tmp_path, cfg)
    assert main(["solve", path, "--no-plot"]) == 0
    value = out.read_text().strip().splitlines()[1].split(",")[5]
    assert len(value.replace(".", "").replace("-", "").lstrip("0")) >= 16
    assert float(value) == 2.0 + 1.5 * 0.1  # lossless round trip


def test_solve_reruns_bit_identical(tmp_path):
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    path = _write(tmp_path, {**BASE, "method": "hopflax"})
    assert main(["solve", path, "--no-plot", "--out", str(out1)]) == 0
    assert main(["solve", path, "--no-plot", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_solve_overrides_change_provenance(tmp_path):
    out = tmp_path / "vals.csv"
    path = _write(tmp_path, {**BASE, "method": "hopflax", "out": str(out)})
    assert main(["solve", path, "--no-plot", "--K", "2", "--seed", "7",
                 "--t", "0.5"]) == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 2
    f = lines[1].split(",")
    assert f[2] == "2" and f[4] == "7"


def test_solve_renders_plot_next_to_output(tmp_path):
    out = tmp_path / "vals.csv"
    cfg = {**BASE, "method": "hopflax", "out": str(out)}
    path = _write(tmp_path, cfg)
    assert main(["solve", path]) == 0
    png = tmp_path / "vals.png"
    assert png.exists() and png.stat().st_size > 0


def test_solve_no_plot_skips_figure(tmp_path):
    out = tmp_path / "vals.csv"
    path = _write(tmp_path, {**BASE, "method": "hopflax", "out": str(out)})
    assert main(["solve", path, "--no-plot"]) == 0
    assert not (tmp_path / "vals.png").exists()


def test_solve_small_radius_is_config_error(tmp_path):
    path = _write(tmp_path, {**BASE, "method": "pde", "R": 2.0})
    assert main(["solve", path, "--no-plot"]) == 2


def test_solve_pde_dimension_cap_is_solver_error(tmp_path):
    # K = 3 means d = 16, beyond the full-grid cap: hopflax still works
    path = _write(tmp_path, {**BASE, "method": "pde", "K": 3, "times": [0.1]})
    assert main(["solve", path, "--no-plot"]) == 3
    out = tmp_path / "ok.csv"
    path = _write(tmp_path, {**BASE, "method": "hopflax", "K": 3,
                             "times": [0.1], "out": str(out)}, name="cfg2.json")
    assert main(["solve", path, "--no-plot"]) == 0
    assert out.exists()


def test_hopf_lax_command_json(tmp_path):
    out = tmp_path / "hl.json"
    path = _write(tmp_path, {**BASE, "times": [1.0], "out": str(out)})
    assert main(["hopf-lax", path, "--no-plot"]) == 0
    payload = json.loads(out.read_text())
    (res,) = payload["results"]
    assert res["value"] == pytest.approx(3.5, abs=1e-10)
    assert res["maximizer"] == pytest.approx([2.0, 0.0], abs=1e-9)
    assert res["kkt_residual"] <= 1e-10
    assert res["method"] == "hopflax"


def test_hopf_lax_mass_constraint(tmp_path, capsys):
    cfg = {
        "kernel": {"family": "affine", "c": 0.0},
        "initial": {"variant": "linear", "rho": {"atoms": [[-1.0, 1.0]]}},
        "measure": {"atoms": [[0.0, 1.0]]},
        "times": [1.0],
        "K": 2,
        "mass_constraint": 1.0,
    }
    path = _write(tmp_path, cfg)
    assert main(["hopf-lax", path, "--no-plot"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["results"][0]["value"] == pytest.approx(0.5, abs=1e-7)


def test_converge_outputs(tmp_path):
    out = tmp_path / "conv.csv"
    cfg = {
        "kernel": QUAD,
        "initial": {"variant": "linear", "rho": {"density": [[-1.0, 1.0, 0.5]]}},
        "measure": {"density": [[-1.0, 1.0, 0.5]]},
        "times": [1.0],
        "K_range": [0, 1, 2, 3],
        "R": 4.0,
        "out": str(out),
    }
    path = _write(tmp_path, cfg)
    assert main(["converge", path]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "K,method,R,seed,value,diff,E_K"
    assert len(lines) == 5
    payload = json.loads((tmp_path / "conv.json").read_text())
    assert payload["K_values"] == [0, 1, 2, 3]
    assert len(payload["successive_diffs"]) == 3
    assert (tmp_path / "conv.png").exists()


def test_converge_with_invariance_subreports(tmp_path, capsys):
    cfg = {
        "kernel": QUAD,
        "initial": {"variant": "linear", "rho": {"atoms": [[-1.0, 1.0]]}},
        "measure": {"atoms": [[0.0, 1.0]]},
        "times": [0.25],
        "K_range": [0, 1],
        "K": 0,
        "R": 4.0,
        "dx": 0.25,
        "r_independence": {"R1": 4.0, "R2": 5.0, "method": "pde"},
    }
    path = _write(tmp_path, cfg)
    assert main(["converge", path, "--no-plot"]) == 0
    txt = capsys.readouterr().out
    payload = json.loads(txt[txt.index("{"):])
    assert payload["r_independence"]["discrepancy"] <= 1e-8


def test_invariants_default_suite(tmp_path, capsys):
    path = _write(tmp_path, {"kernel": QUAD, "seed": 1, "n_audit": 50})
    assert main(["invariants", path]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"]
    names = {c["name"] for c in payload["checks"]}
    assert {"project_lift_identity", "holder_inequality",
            "hamiltonian_monotonicity", "hamiltonian_lipschitz",
            "cauchy_schwarz", "bidual_sanity"} <= names


def test_invariants_fault_injection(tmp_path, capsys):
    path = _write(tmp_path, {"kernel": QUAD, "seed": 1, "n_audit": 50,
                             "fault_injection": "monotonicity"})
    assert main(["invariants", path]) == 1
    captured = capsys.readouterr()
    assert "hamiltonian_monotonicity" in captured.err


def test_invariants_empty_suite_is_config_error(tmp_path):
    path = _write(tmp_path, {"kernel": QUAD, "suite": ""})
    assert main(["invariants", path]) == 2
