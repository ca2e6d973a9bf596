import json
import math

import pytest

import migrasim as ms


def test_closed_forms():
    assert ms.docs_tl_threshold(1, 1, 1) == pytest.approx(4 / 3, abs=1e-12)
    assert ms.docs_tl_threshold(1, 20, 1) == pytest.approx(23 / 60, abs=1e-12)
    assert ms.air_threshold(1, 1) == pytest.approx(1.0, abs=1e-12)
    b = ms.sis_threshold_bounds(1, 1, 1)
    assert b["lower"] == pytest.approx(1 / 7, abs=1e-12)
    assert b["upper"] == pytest.approx(3.75, abs=1e-12)
    assert b["kappa"] == pytest.approx(2 / 15, abs=1e-12)


def test_params_and_validation():
    p = ms.params_from_density(2.0, 1.0, 1.0, 1.0, 0.25)
    assert p.eta == 2.0 and p.q == 0.75 and p.nu == 2.0
    assert "lambda=2" in repr(p)
    with pytest.raises(ValueError):
        ms.derive_params(-1.0, 1.0, 1.0, 1.0, 0.5)
    with pytest.raises(ms.ValidationError):
        ms.derive_params(1.0, 1.0, 1.0, 1.0, 1.5)


def test_docs_quadrature():
    p = ms.derive_params(1.5, 1.0, 1.0, 1.0, 0.0)
    assert ms.docs_mean_x(p) == pytest.approx(1.5, abs=1e-10)
    assert ms.docs_tl_rhs(0.0, p) == pytest.approx(1.0, abs=1e-10)


def test_simulated_totals_are_poisson():
    p = ms.derive_params(1.0, 1.0, 1.0, 1.0, 0.5)
    r = ms.simulate_moments(p, "sis", 2e4, 3)
    total = r["mean_x"].value + r["mean_y"].value
    se = math.hypot(r["mean_x"].std_error, r["mean_y"].std_error)
    assert abs(total - 1.0) < 5 * se + 0.05


def test_g_and_fixed_point():
    p = ms.params_from_density(2.0, 1.0, 1.0, 1.0)
    g = ms.estimate_g(0.5, p, 20000, 1)
    assert 0.0 < g.value < 1.0 and g.std_error > 0
    ps = ms.find_p_star(p, 20000, 2)
    assert ps.value <= ms.p_star_upper_bound(p) + 3 * ps.std_error


def test_audit_and_coupling():
    p = ms.derive_params(1.0, 1.0, 1.0, 1.0, 0.5)
    checks = ms.audit_sis(p, 2e4, 5)
    assert {"name", "lhs", "rhs", "residual", "se", "pass"} <= set(checks[0])
    s = ms.coupled_p_monotonicity(0.2, 0.5, ms.params_from_density(1.5, 1, 1, 1), 2000, 1)
    assert s["violations"] == 0 and s["strict"] > 0
    with pytest.raises(ValueError):
        ms.coupled_p_monotonicity(0.6, 0.5, p, 10, 1)


def test_cli_in_process(tmp_path):
    code, out, _ = ms.run_cli(
        ["threshold", "--variant", "docs", "--mu", "1", "--alpha", "1", "--beta", "1",
         "--manifest", str(tmp_path / "m.json")])
    assert code == 0
    assert float(out) == pytest.approx(4 / 3, abs=1e-15)
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert manifest["command"] == "threshold"
    code, _, err = ms.run_cli(["threshold", "--nope"])
    assert code == 1 and "--nope" in err
