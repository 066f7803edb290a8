"""Acceptance suite: one test per criterion, at the stated tolerances.

Each test prints a single PASS/FAIL line (visible with `pytest -s` or in the
captured output of a failure).  Statistical criteria run at 10^4 replicas
with the seeds pinned in the scenario gallery.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from growfrag import scenario as scenario_mod
from growfrag import suites
from growfrag.branching import Population, replay_view, truncate_view
from growfrag.spine import forward_decorated

ROOT = Path(__file__).resolve().parents[1]
SCN = ROOT / "scenarios"


def _report(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num} {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def binary_scn():
    return scenario_mod.load(SCN / "binary_pointmass.scn")


@pytest.fixture(scope="module")
def drift_scn():
    return scenario_mod.load(SCN / "binary_drift.scn")


@pytest.fixture(scope="module")
def diffuse_scn():
    return scenario_mod.load(SCN / "binary_diffuse.scn")


@pytest.fixture(scope="module")
def powerlaw_scn():
    return scenario_mod.load(SCN / "powerlaw.scn")


@pytest.fixture(scope="module")
def martingale_report(drift_scn):
    return suites.martingale_suite(drift_scn)


def test_criterion_1_cumulant_algebra(binary_scn):
    model = binary_scn.model
    checks = [
        abs(model.cumulant(0.0) - 1.0) < 1e-12,
        abs(model.cumulant(2.0) - 0.5) < 1e-12,
        abs(model.cumulant(2.0, trunc=0) - 0.25) < 1e-12,  # b_0 = 0 < ln 2
    ]
    wb = model.omega_bar()
    resid = abs(wb * model.cumulant_derivative(wb) - model.cumulant(wb))
    checks += [resid < 1e-10, 2.40 <= wb <= 2.45]
    _report(1, "cumulant algebra", all(checks), f"omega_bar={wb:.6f} residual={resid:.2e}")


def test_criterion_2_esscher_identity(binary_scn, powerlaw_scn):
    worst = 0.0
    for scn in (binary_scn, powerlaw_scn):
        model = scn.model
        wbar = model.omega_bar()
        for omega in (1.0, 2.0, wbar):
            for q in np.linspace(0.25, 5.0, 20):
                lhs = model.spine_exponent_lk(omega, q)
                rhs = model.cumulant(q + omega) - model.cumulant(omega)
                worst = max(worst, abs(lhs - rhs))
    _report(2, "Esscher spine-exponent identity (both families)", worst < 1e-12, f"max |diff|={worst:.2e}")


def test_criterion_3_unit_mean_additive(binary_scn):
    report = suites.martingale_suite(binary_scn)
    w_tests = [t for t in report["tests"] if t["name"].startswith("W_mean")]
    assert len(w_tests) == 9  # {1, 2, omega_bar} x {0.5, 1, 2}
    ok = all(t["pass"] for t in w_tests)
    worst = max(abs(t["z"]) for t in w_tests)
    _report(3, "unit-mean additive martingale (9-point grid, 1e4 replicas)", ok, f"max |z|={worst:.2f}")


def test_criterion_4_derivative_and_stopped_means(martingale_report):
    report = martingale_report
    dw = [t for t in report["tests"] if t["name"].startswith("dW_mean")]
    dwa = [t for t in report["tests"] if t["name"].startswith("dWa_mean")]
    shrink = next(t for t in report["tests"] if t["name"] == "dWa_bias_shrinks")
    ok = all(t["pass"] for t in dw + dwa) and shrink["pass"]
    _report(
        4,
        "derivative and stopped-martingale means",
        ok,
        f"bias h={shrink['bias_coarse']:.4f} h/2={shrink['bias_fine']:.4f}",
    )


def test_criterion_5_many_to_one(binary_scn):
    report = suites.mto_suite(binary_scn)
    names = {t["name"] for t in report["tests"]}
    assert {"mto_exp_q2", "mto_count", "mto_indicator"} <= names
    ok = report["pass"]
    _report(5, "many-to-one closed-form and indicator cross-validation", ok)


def test_criterion_6_spine_decomposition(binary_scn):
    report = suites.spine_suite(binary_scn)
    control = next(t for t in report["tests"] if t["name"] == "power_control_rejects")
    _report(
        6,
        "spine decomposition 6-test panel plus power control",
        report["pass"],
        f"control p={control['p_value']:.2e}",
    )


def test_criterion_7_truncation_consistency(binary_scn):
    model = binary_scn.model
    mismatches = 0
    for stream in np.random.default_rng(binary_scn.seed).spawn(100):
        pop = Population(model, 3, stream)
        pop.advance(2.0)
        for m in (1, 2, 3):
            if truncate_view(pop, m).snapshot() != replay_view(pop, m).snapshot():
                mismatches += 1
    _report(7, "truncation consistency (100-replica coupled replay)", mismatches == 0)


def test_criterion_8_population_growth(binary_scn):
    model = binary_scn.model
    counts = []
    for stream in np.random.default_rng(binary_scn.seed + 8).spawn(binary_scn.replicas):
        pop = Population(model, binary_scn.level, stream)
        pop.advance(3.0)
        counts.append(pop.size)
    counts = np.asarray(counts, dtype=float)
    target = math.exp(3.0 * model.cumulant(0.0, trunc=binary_scn.level))
    se = counts.std(ddof=1) / math.sqrt(len(counts))
    ok = abs(counts.mean() - target) < 3 * se
    _report(8, "population growth (Yule check at t=3)", ok, f"mean={counts.mean():.3f} target={target:.3f}")


def test_criterion_9_lambda_martingale(binary_scn):
    model = binary_scn.model
    a = binary_scn.barrier_a
    lams = []
    for stream in np.random.default_rng(binary_scn.seed + 9).spawn(binary_scn.replicas):
        out = forward_decorated(
            model,
            binary_scn.omega,
            binary_scn.horizon,
            binary_scn.level,
            stream,
            t_grid=binary_scn.t_grid,
            barrier_a=a,
        )
        lams.append(out.lambda_values)
    lams = np.asarray(lams)
    ok = True
    zs = []
    for j in range(lams.shape[1]):
        se = lams[:, j].std(ddof=1) / math.sqrt(len(lams))
        z = (lams[:, j].mean() - a) / se
        zs.append(z)
        ok = ok and abs(z) < 3.0
    _report(9, "lambda martingale under the forward spine", ok, "z=" + ",".join(f"{z:+.2f}" for z in zs))


def test_criterion_10_derivative_asymptotics(diffuse_scn):
    report = suites.derivative_suite(diffuse_scn)
    ok = report["pass"]
    heavy = report["heavy_tail_running_mean"]
    detail = "running mean of -dW: " + ", ".join(f"n={p['n']}:{p['mean']:+.3f}" for p in heavy)
    _report(10, "derivative-martingale asymptotics proxies", ok, detail)
