"""Acceptance criteria, evaluated on one full seeded suite run.

Each test prints and records one PASS/FAIL line; the summary is repeated at
the end of the pytest run.
"""
import numpy as np
import pytest
from conftest import record_criterion

from artifact import experiments as ex


@pytest.fixture(scope="module")
def cfg():
    return ex.ExperimentConfig(seed=0)


@pytest.fixture(scope="module")
def report(cfg):
    return ex.run_suite(cfg)


def _values(check, key):
    return [rec["residuals"][key]["value"] for rec in check["records"] if key in rec.get("residuals", {})]


def _worst(check, key):
    vals = _values(check, key)
    assert vals, f"no {key} records in {check['name']}"
    return max(vals)


def _verdict(number, title, ok, detail):
    record_criterion(number, title, ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})")
    assert ok, detail


def _budget(report, name):
    return report["timings"]["budgets"][name]


def test_criterion_01_exact_collapse(report):
    chk = report["checks"]["collapse"]
    by_n = {n: sum(1 for r in chk["records"] if r["n"] == n) for n in (2, 3)}
    worst = max(_worst(chk, k) for k in ("C", "S_plus", "S_minus"))
    b = _budget(report, "collapse")
    ok = chk["pass"] and by_n == {2: 20, 3: 20} and worst <= 1e-9 and b["within"]
    _verdict(1, "diagonal residue collapse", ok, f"max dev {worst:.1e}, samples {by_n}, {b['seconds']:.1f}s")


def test_criterion_02_monodromy_relation(report):
    chk = report["checks"]["monodromy"]
    by_n = {n: sum(1 for r in chk["records"] if r.get("n") == n) for n in (2, 3)}
    worst = _worst(chk, "relation")
    b = _budget(report, "monodromy")
    ok = by_n == {2: 20, 3: 10} and worst <= 1e-7 and b["within"] and not any("error" in r for r in chk["records"])
    _verdict(2, "monodromy relation", ok, f"max residual {worst:.1e}, samples {by_n}, {b['seconds']:.1f}s")


def test_criterion_03_triangularity(report):
    chk = report["checks"]["monodromy"]
    worst = _worst(chk, "triangularity")
    ok = worst <= 1e-8 and len(_values(chk, "triangularity")) == 30
    _verdict(3, "Stokes triangularity", ok, f"max off-structure {worst:.1e}")


def test_criterion_04_gauge_equation(report):
    chk = report["checks"]["gauge"]
    worst = _worst(chk, "gauge")
    ratios = [v for rec in chk["records"] for k, v in rec["residuals"].items() if k.startswith("step_ratio") and k.endswith("_lo")]
    ratio_vals = [r["value"] for r in ratios]
    b = _budget(report, "gauge")
    ok = (
        len(_values(chk, "gauge")) == 5
        and worst <= 1e-5
        and ratio_vals
        and all(3 <= r <= 5 for r in ratio_vals)
        and b["within"]
    )
    _verdict(
        4,
        "gauge transformation equation",
        ok,
        f"max residual {worst:.1e}, step ratios {min(ratio_vals):.3f}..{max(ratio_vals):.3f}, {b['seconds']:.1f}s",
    )


def test_criterion_05_first_order(report):
    val = _worst(report["checks"]["gauge"], "first_order")
    _verdict(5, "first-order identity at 0", val <= 1e-6, f"residual {val:.1e}")


def test_criterion_06_cdybe(report):
    chk = report["checks"]["cdybe"]
    worst = _worst(chk, "cdybe")
    control = min(_values(chk, "control_half_t"))
    ok = len(chk["records"]) == 10 and worst <= 1e-8 and control >= 1e-2
    _verdict(6, "dynamical Yang-Baxter equation", ok, f"max residual {worst:.1e}, control min {control:.2f}")


def test_criterion_07_jacobi(report):
    chk = report["checks"]["jacobi"]
    sts, am = _worst(chk, "sts"), _worst(chk, "am")
    control = min(_values(chk, "control_am_without_r0"))
    ok = len(chk["records"]) == 10 and sts <= 1e-6 and am <= 1e-6 and control >= 1e-2
    _verdict(7, "Jacobi identity", ok, f"sts {sts:.1e}, am {am:.1e}, control min {control:.2f}")


def test_criterion_08_reductions(report):
    chk = report["checks"]["reduction"]
    orbit = [r for r in chk["records"] if r["kind"] == "orbit_pullback"]
    pairs = sum(r["info"]["tangent_pairs"] for r in orbit)
    pull = max(r["residuals"]["pullback"]["value"] for r in orbit)
    reduced = _worst(chk, "reduced_form")
    b = _budget(report, "reduction")
    ok = pairs == 20 and pull <= 1e-10 and len(_values(chk, "reduced_form")) == 5 and reduced <= 1e-8 and b["within"]
    _verdict(8, "reduction identities", ok, f"pullback {pull:.1e} over {pairs} pairs, reduced form {reduced:.1e}, {b['seconds']:.2f}s")


def test_criterion_09_dual_paths(report):
    chk = report["checks"]["paths"]
    keys = ("frobenius_vs_ode_inner", "frobenius_vs_ode_outer", "matching_point_near", "matching_point_far", "seed_order")
    worst = {k: _worst(chk, k) for k in keys}
    ok = chk["pass"] and all(v <= 1e-9 for v in worst.values())
    _verdict(9, "dual-path agreement", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_10_pushforward_gauge(report):
    chk = report["checks"]["pushforward"]
    rows = {r["map"]: r["info"] for r in chk["records"]}
    agree = all(i["pushforward_pass"] == i["gauge_pass"] for i in rows.values())
    ok = set(rows) == {"C_2pii", "identity", "corrupted"} and agree and rows["C_2pii"]["pushforward_pass"]
    ok = ok and not rows["identity"]["gauge_pass"] and not rows["corrupted"]["gauge_pass"]
    detail = ", ".join(f"{k} push {v['pushforward']:.1e}/gauge {v['gauge']:.1e}" for k, v in rows.items())
    _verdict(10, "pushforward and gauge classify alike", ok, detail)


def test_criterion_11_stokes_map_poisson(report):
    chk = report["checks"]["poisson_map"]
    worst = _worst(chk, "poisson_map")
    kappa = complex(*chk["calibration"]["kappa"])
    ok = len(chk["records"]) == 5 and worst <= 1e-4 and abs(kappa + 2j * np.pi) < 1e-6
    _verdict(11, "Stokes map is Poisson", ok, f"max residual {worst:.1e}, calibrated scale {kappa:.6f}")


def test_criterion_12_groupoid(report):
    chk = report["checks"]["groupoid"]
    exact = max(_values(chk, "source_of_unit")) == 0.0
    mixed, mv = _worst(chk, "mixed_bracket"), _worst(chk, "map_v")
    ok = exact and mixed <= 1e-8 and mv <= 1e-9
    _verdict(12, "groupoid conditions", ok, f"source(unit) exact {exact}, mixed bracket {mixed:.1e}, map_v {mv:.1e}")


def test_criterion_13_determinism(cfg, report):
    again = ex.run_suite(cfg)
    same = ex.to_json(ex.payload(report)) == ex.to_json(ex.payload(again))
    _verdict(13, "deterministic payload", same and report["passed"], f"identical payloads {same}")
