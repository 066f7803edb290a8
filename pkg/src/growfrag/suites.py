"""Verification suites: the statistical checks behind the CLI subcommands.

Every suite runs replicas with per-replica RNG streams derived from
(seed, replica index), reduced in index order, so results are byte-identical
for any worker count.  Suite reports are plain dicts ready for JSON.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from . import stats
from .branching import Population
from .errors import NoCriticalPoint
from .martingales import additive, derivative, largest, stopped_derivative
from .scenario import Scenario
from .spine import forward_decorated
from .dislocation import FiniteAtomic, spine_process_params
from .levy import simulate_path


def _rng_for(seed: int, idx: int):
    return np.random.default_rng(np.random.SeedSequence([seed, idx]))


def run_replicas(fn, payload, n: int, seed: int, workers: int = 1):
    """fn(payload, rng) evaluated on n per-index streams, in index order."""
    worker = partial(_call_one, fn, payload, seed)
    if workers <= 1:
        return [worker(i) for i in range(n)]
    chunk = max(1, n // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(worker, range(n), chunksize=chunk))


def _call_one(fn, payload, seed, idx):
    return fn(payload, _rng_for(seed, idx))


def _mean_test(name, values, target, weights=None, factor=3.0):
    m, se = stats.mean_se(stats.SampleSet(np.asarray(values), weights))
    z = (m - target) / se if se > 0 else 0.0
    ok = abs(m - target) < factor * se if se > 0 else m == target
    return {
        "name": name,
        "estimate": m,
        "se": se,
        "target": target,
        "threshold": factor,
        "pass": bool(ok),
        "z": z,
    }


def _suite_pass(tests):
    return all(t["pass"] for t in tests)


# -- kappa table ----------------------------------------------------------------


def kappa_suite(scn: Scenario) -> dict:
    model = scn.model
    lo = model.dom_lower()
    q_grid = [q for q in np.arange(0.0, 4.01, 0.25) if q > lo + 0.05]
    try:
        wbar = model.omega_bar()
    except NoCriticalPoint:
        wbar = None
    if wbar is not None and all(abs(q - wbar) > 1e-9 for q in q_grid):
        q_grid = sorted(q_grid + [wbar])
    header = ["q", "kappa", "kappa_prime"] + [
        f"kappa_b{n}" for n in range(model.ladder.max_index + 1)
    ]
    rows = []
    for q in q_grid:
        k = model.cumulant(q)
        kp = model.cumulant_derivative(q) if model.in_domain(q) else math.nan
        rows.append(
            [q, k, kp] + [model.cumulant(q, trunc=n) for n in range(model.ladder.max_index + 1)]
        )
    report = {
        "suite": "kappa",
        "scenario": scn.name,
        "omega_bar": wbar,
        "header": header,
        "rows": rows,
        "tests": [],
        "pass": True,
    }
    if wbar is not None:
        resid = abs(wbar * model.cumulant_derivative(wbar) - model.cumulant(wbar))
        report["tests"].append(
            {
                "name": "omega_bar_residual",
                "estimate": resid,
                "se": None,
                "threshold": 1e-10,
                "pass": bool(resid < 1e-10),
            }
        )
        report["pass"] = _suite_pass(report["tests"])
    return report


# -- martingale suite ---------------------------------------------------------


def _martingale_replica(payload, rng):
    model, level, t_grid, omegas, cap = payload
    pop = Population(model, level, rng, cap=cap)
    out = []
    for t in t_grid:
        pop.advance(t)
        snap = pop.snapshot()
        out.append(
            [additive(snap, model, w, t, level=level) for w in omegas]
            + [derivative(snap, model, w, t, level=level) for w in omegas]
        )
    return out


def _barrier_replica(payload, rng):
    model, level, t_bar, omega, a, mesh_fine, cap = payload
    pop = Population(model, level, rng, cap=cap, barrier_omega=omega, monitor_mesh=mesh_fine)
    pop.advance(t_bar)
    return (
        stopped_derivative(pop, omega, a, t_bar, mesh="coarse"),
        stopped_derivative(pop, omega, a, t_bar, mesh="fine"),
    )


def martingale_suite(scn: Scenario, workers: int = 1) -> dict:
    model = scn.model
    omegas = []
    for w in (1.0, 2.0):
        if model.in_domain(w) and w not in omegas:
            omegas.append(w)
    try:
        wbar = model.omega_bar()
        if all(abs(w - wbar) > 1e-9 for w in omegas):
            omegas.append(wbar)
    except NoCriticalPoint:
        wbar = None

    payload = (model, scn.level, scn.t_grid, omegas, scn.cap)
    data = run_replicas(_martingale_replica, payload, scn.replicas, scn.seed, workers)
    arr = np.asarray(data)  # (replica, time, 2 * len(omegas))
    tests = []
    n_om = len(omegas)
    for ti, t in enumerate(scn.t_grid):
        for wi, w in enumerate(omegas):
            tests.append(_mean_test(f"W_mean(omega={w:.6g},t={t:g})", arr[:, ti, wi], 1.0))
    for ti, t in enumerate(scn.t_grid):
        for wi, w in enumerate(omegas):
            tests.append(
                _mean_test(f"dW_mean(omega={w:.6g},t={t:g})", arr[:, ti, n_om + wi], 0.0)
            )

    barrier = None
    if wbar is not None:
        t_bar = 1.0 if 1.0 in scn.t_grid else scn.t_grid[-1]
        mesh_fine = scn.mesh / 2.0
        payload = (model, scn.level, t_bar, wbar, scn.barrier_a, mesh_fine, scn.cap)
        pairs = run_replicas(_barrier_replica, payload, scn.replicas, scn.seed + 1, workers)
        coarse = np.array([p[0] for p in pairs])
        fine = np.array([p[1] for p in pairs])
        tests.append(_mean_test(f"dWa_mean(mesh={scn.mesh:g})", coarse, scn.barrier_a))
        tests.append(_mean_test(f"dWa_mean(mesh={scn.mesh / 2:g})", fine, scn.barrier_a))
        bias_c = float(coarse.mean() - scn.barrier_a)
        bias_f = float(fine.mean() - scn.barrier_a)
        from .dislocation import single_particle_params
        from .levy import MotionSampler

        exact = (
            model.sigma == 0.0
            and MotionSampler(
                single_particle_params(model, scn.level), scn.model.ladder.threshold(scn.model.ladder.max_index)
            ).is_deterministic
        )
        shrink_ok = (bias_f < bias_c) or (exact and bias_f == bias_c)
        tests.append(
            {
                "name": "dWa_bias_shrinks",
                "estimate": bias_c - bias_f,
                "se": None,
                "threshold": 0.0,
                "pass": bool(shrink_ok),
                "bias_coarse": bias_c,
                "bias_fine": bias_f,
                "exact_monitoring": bool(exact),
            }
        )
        barrier = {
            "omega": wbar,
            "a": scn.barrier_a,
            "t": t_bar,
            "mesh_pair": [scn.mesh, scn.mesh / 2.0],
        }
    return {
        "suite": "verify-martingales",
        "scenario": scn.name,
        "omegas": omegas,
        "t_grid": list(scn.t_grid),
        "replicas": scn.replicas,
        "seed": scn.seed,
        "barrier": barrier,
        "tests": tests,
        "pass": _suite_pass(tests),
    }


# -- many-to-one suite ----------------------------------------------------------


def _mto_left_replica(payload, rng):
    model, level, t, cap, which, omega = payload
    pop = Population(model, level, rng, cap=cap)
    pop.advance(t)
    snap = pop.snapshot()
    out = []
    for name in which:
        if name == "exp_q2":
            out.append(sum(math.exp(2.0 * z) for _, _, z in snap))
        elif name == "count":
            out.append(float(len(snap)))
        elif name == "poly_exp":
            out.append(sum(z * math.exp(omega * z) for _, _, z in snap))
        elif name == "indicator":
            out.append(float(sum(1 for _, _, z in snap if z > 0.0)))
    return out


def _mto_right_replica(payload, rng):
    model, level, t, omega, cutoff = payload
    params = spine_process_params(model, omega, level)
    xi = simulate_path(params, t, None, rng, small_jump_cutoff=cutoff).terminal()
    scale = math.exp(t * model.cumulant(omega, trunc=level))
    return scale * (1.0 if xi > 0.0 else 0.0) * math.exp(-omega * xi)


def mto_suite(scn: Scenario, workers: int = 1) -> dict:
    model = scn.model
    level = scn.level
    omega = scn.omega
    t = 1.0 if 1.0 in scn.t_grid else scn.t_grid[0]
    which = ["exp_q2", "count", "poly_exp"]
    atomic = isinstance(model.nu, FiniteAtomic)
    if atomic:
        which.append("indicator")
    payload = (model, level, t, scn.cap, which, omega)
    left = np.asarray(
        run_replicas(_mto_left_replica, payload, scn.replicas, scn.seed, workers)
    )
    tests = []
    closed = {
        "exp_q2": math.exp(t * model.cumulant(2.0, trunc=level)),
        "count": math.exp(t * model.cumulant(0.0, trunc=level)),
        "poly_exp": math.exp(t * model.cumulant(omega, trunc=level))
        * t
        * model.cumulant_derivative(omega, trunc=level),
    }
    for j, name in enumerate(which):
        if name in closed:
            tst = _mean_test(f"mto_{name}", left[:, j], closed[name])
            tst["right"] = {"estimate": closed[name], "se": 0.0, "closed_form": True}
            tests.append(tst)
    if atomic:
        j = which.index("indicator")
        cutoff = model.ladder.threshold(model.ladder.max_index)
        payload_r = (model, level, t, omega, cutoff)
        right = np.asarray(
            run_replicas(_mto_right_replica, payload_r, scn.replicas, scn.seed + 1, workers)
        )
        lm, ls = stats.mean_se(stats.SampleSet(left[:, j]))
        rm, rs = stats.mean_se(stats.SampleSet(right))
        denom = math.hypot(ls, rs)
        z = (lm - rm) / denom if denom > 0 else 0.0
        tests.append(
            {
                "name": "mto_indicator",
                "estimate": lm,
                "se": ls,
                "right": {"estimate": rm, "se": rs, "closed_form": False},
                "z": z,
                "threshold": 3.0,
                "pass": bool(abs(z) < 3.0),
            }
        )
    return {
        "suite": "verify-mto",
        "scenario": scn.name,
        "omega": omega,
        "t": t,
        "replicas": scn.replicas,
        "seed": scn.seed,
        "tests": tests,
        "pass": _suite_pass(tests),
    }


# -- spine decomposition suite --------------------------------------------------


def _spine_backward_replica(payload, rng):
    model, level, t, omega, cap = payload
    pop = Population(model, level, rng, cap=cap)
    pop.advance(t)
    snap = pop.snapshot()
    w = additive(snap, model, omega, t, level=level)
    probs = np.array([math.exp(omega * z) for _, _, z in snap])
    pick = int(rng.choice(len(snap), p=probs / probs.sum()))
    zpick = snap[pick][2]
    off = math.nan
    if len(snap) > 1:
        off = max(z for j, (_, _, z) in enumerate(snap) if j != pick) - zpick
    return zpick, float(len(snap)), w, largest(snap), off


def _spine_forward_replica(payload, rng):
    model, level, t, omega, cap, perturb = payload
    out = forward_decorated(model, omega, t, level, rng, cap=cap, center_perturb=perturb)
    snap = out.population.snapshot()
    off = math.nan
    if len(snap) > 1:
        off = (
            max(
                p.position
                for lab, p in out.population.particles.items()
                if lab != out.spine_label
            )
            - out.spine_position
        )
    return (
        out.spine_position,
        float(len(snap)),
        additive(snap, model, omega, t, level=level),
        largest(snap),
        off,
    )


def _spine_panel(scn: Scenario, seed: int, workers: int, perturb: float = 0.0, alpha=0.01):
    model, level, omega = scn.model, scn.level, scn.omega
    t = 1.0 if 1.0 in scn.t_grid else scn.t_grid[0]
    n = scn.replicas
    back = run_replicas(
        _spine_backward_replica, (model, level, t, omega, scn.cap), n, seed, workers
    )
    fwd = run_replicas(
        _spine_forward_replica, (model, level, t, omega, scn.cap, perturb), n, seed + 1, workers
    )
    b = np.asarray(back)
    f = np.asarray(fwd)
    bw = b[:, 2]
    tests = []

    def ks(name, col):
        bmask = ~np.isnan(b[:, col])
        fmask = ~np.isnan(f[:, col])
        if bmask.sum() < stats.MIN_EFFECTIVE_N or fmask.sum() < stats.MIN_EFFECTIVE_N:
            tests.append(
                {
                    "name": name,
                    "statistic": None,
                    "p_value": None,
                    "threshold": alpha,
                    "pass": True,
                    "skipped": "too few samples (degenerate scenario)",
                }
            )
            return
        stat, p = stats.ks_two_sample(
            stats.SampleSet(b[bmask, col], bw[bmask]), stats.SampleSet(f[fmask, col])
        )
        tests.append(
            {"name": name, "statistic": stat, "p_value": p, "threshold": alpha, "pass": p > alpha}
        )

    def zt(name, col):
        m1, s1 = stats.mean_se(stats.SampleSet(b[:, col], bw))
        m2, s2 = stats.mean_se(stats.SampleSet(f[:, col]))
        denom = math.hypot(s1, s2)
        z = (m1 - m2) / denom if denom > 0 else 0.0
        tests.append(
            {"name": name, "statistic": z, "p_value": None, "threshold": 3.0, "pass": abs(z) < 3.0}
        )

    ks("ks_spine_position", 0)
    zt("z_spine_position", 0)
    zt("z_count", 1)
    zt("z_additive", 2)
    zt("z_max_position", 3)
    ks("ks_nonspine_offset", 4)
    return tests, t


def spine_suite(scn: Scenario, workers: int = 1) -> dict:
    """Forward/backward panel with the multiple-testing policy plus a power control.

    At alpha = 0.01 across six tests an occasional false rejection is
    expected: one marginal failure triggers a single fresh-seed rerun which
    must then clear completely.
    """
    tests, t = _spine_panel(scn, scn.seed, workers)
    n_fail = sum(not tst["pass"] for tst in tests)
    rerun = None
    if n_fail == 1:
        rerun, _ = _spine_panel(scn, scn.seed + 101, workers)
        panel_pass = all(tst["pass"] for tst in rerun)
    else:
        panel_pass = n_fail == 0
    control, _ = _spine_panel(scn, scn.seed + 17, workers, perturb=0.1)
    control_ks = next(tst for tst in control if tst["name"] == "ks_spine_position")
    control_test = {
        "name": "power_control_rejects",
        "statistic": control_ks["statistic"],
        "p_value": control_ks["p_value"],
        "threshold": 0.01,
        "pass": bool(control_ks["p_value"] < 0.01),
    }
    all_tests = tests + [control_test]
    return {
        "suite": "verify-spine",
        "scenario": scn.name,
        "omega": scn.omega,
        "t": t,
        "replicas": scn.replicas,
        "seed": scn.seed,
        "tests": all_tests,
        "rerun": rerun,
        "exemplar": spine_exemplar(scn, t),
        "pass": bool(panel_pass and control_test["pass"]),
    }


def spine_exemplar(scn: Scenario, t: float) -> dict:
    """One decorated-spine replica rendered as CSV-ready rows."""
    out = forward_decorated(
        scn.model,
        scn.omega,
        t,
        scn.level,
        _rng_for(scn.seed, 55_000_000),
        barrier_a=scn.barrier_a,
        cap=scn.cap,
    )
    kprime = scn.model.cumulant_derivative(scn.omega, trunc=scn.level)
    trace_rows = [
        [s, x, scn.barrier_a + s * kprime - x] for s, x in zip(out.xi_times, out.xi_values)
    ]
    imm_rows = [
        [ev.time, ev.y, ev.index, ";".join(f"{p:.17g}" for p in ev.partition)]
        for ev in out.immigration_log
    ]
    snap_rows = [
        [t, str(lab), pos, scn.level, _fmt_counters(ks)] for lab, ks, pos in out.population.snapshot()
    ]
    return {
        "trace_header": ["time", "xi", "lambda"],
        "trace_rows": trace_rows,
        "immigration_header": ["time", "y", "i", "partners"],
        "immigration_rows": imm_rows,
        "snapshot_header": ["time", "label", "position", "level_mask", "k_counters"],
        "snapshot_rows": snap_rows,
        "spine_label": str(out.spine_label),
    }


# -- derivative martingale suite ---------------------------------------------


def _derivative_replica(payload, rng):
    model, level, t_grid, omegas, cap = payload
    pop = Population(model, level, rng, cap=cap)
    out = []
    for t in t_grid:
        pop.advance(t)
        snap = pop.snapshot()
        out.append(
            [additive(snap, model, omegas[0], t, level=level)]
            + [derivative(snap, model, w, t, level=level) for w in omegas]
        )
    return out


def derivative_suite(scn: Scenario, workers: int = 1) -> dict:
    model = scn.model
    wbar = model.omega_bar()
    w_super = wbar + 0.5
    t_grid = scn.t_grid
    payload = (model, scn.level, t_grid, (wbar, w_super), scn.cap)
    data = np.asarray(run_replicas(_derivative_replica, payload, scn.replicas, scn.seed, workers))
    W = data[:, :, 0]
    dW = data[:, :, 1]
    dW_super = data[:, :, 2]

    from .martingales import MartingaleTrace

    times = np.asarray(t_grid)

    def traces(series):
        return [
            MartingaleTrace(
                omega=wbar,
                times=times,
                W=W[r],
                dW=series[r],
                dWa=None,
                count=np.ones(len(times), dtype=int),
                max_pos=np.zeros(len(times)),
            )
            for r in range(len(series))
        ]

    report_W = stats.convergence_report(traces(dW), "W")
    report_dW = stats.convergence_report(traces(dW), "dW")
    report_super = stats.convergence_report(traces(dW_super), "dW")

    check_ts = [t for t in (1.0, 2.0, 4.0) if t in t_grid] or list(t_grid)
    idx = [t_grid.index(t) for t in check_ts]
    medians = np.median(W[:, idx], axis=0)
    frac_nonpos = report_dW["terminal_nonpositive_fraction"]
    ratio = report_super["median_abs_terminal_over_initial"]

    tests = [
        {
            "name": "W_median_strictly_decreasing",
            "estimate": [float(m) for m in medians],
            "se": None,
            "threshold": 0.0,
            "pass": bool(np.all(np.diff(medians) < 0.0)),
        },
        {
            "name": "dW_terminal_nonpositive_fraction",
            "estimate": frac_nonpos,
            "se": float(math.sqrt(frac_nonpos * (1 - frac_nonpos) / len(dW))),
            "threshold": 0.95,
            "pass": bool(frac_nonpos >= 0.95),
        },
        {
            "name": "dW_supercritical_decay_ratio",
            "estimate": ratio,
            "se": None,
            "threshold": 0.10,
            "pass": bool(ratio < 0.10),
        },
    ]
    return {
        "suite": "derivative",
        "scenario": scn.name,
        "omega_bar": wbar,
        "omega_supercritical": w_super,
        "t_grid": list(t_grid),
        "replicas": scn.replicas,
        "seed": scn.seed,
        "tests": tests,
        "heavy_tail_running_mean": report_dW["running_mean_neg_terminal"],
        "convergence": {
            "W_critical": report_W,
            "dW_critical": report_dW,
            "dW_supercritical": report_super,
        },
        "trace_data": {
            "times": list(t_grid),
            "W_quantiles": {
                q: [float(x) for x in np.quantile(W, float(q), axis=0)]
                for q in ("0.05", "0.25", "0.5", "0.75", "0.95")
            },
            "dW_quantiles": {
                q: [float(x) for x in np.quantile(dW, float(q), axis=0)]
                for q in ("0.05", "0.25", "0.5", "0.75", "0.95")
            },
        },
        "pass": _suite_pass(tests),
    }


# -- simulate ------------------------------------------------------------------


def _simulate_replica(payload, rng):
    model, level, t_grid, omega, a_bar, mesh, cap = payload
    pop = Population(model, level, rng, cap=cap, barrier_omega=omega, monitor_mesh=mesh / 2.0)
    rows = []
    for t in t_grid:
        pop.advance(t)
        snap = pop.snapshot()
        rows.append(
            (
                t,
                additive(snap, model, omega, t, level=level),
                derivative(snap, model, omega, t, level=level),
                stopped_derivative(pop, omega, a_bar, t),
                len(snap),
                largest(snap),
            )
        )
    final = [
        (str(lab), _fmt_counters(ks), pos) for lab, ks, pos in pop.snapshot()
    ]
    return rows, final


def _fmt_counters(ks: dict) -> str:
    return ";".join(f"{l}:{c}" for l, c in sorted(ks.items()))


def simulate_suite(scn: Scenario, workers: int = 1) -> dict:
    payload = (
        scn.model,
        scn.level,
        scn.t_grid,
        scn.omega,
        scn.barrier_a,
        scn.mesh,
        scn.cap,
    )
    out = run_replicas(_simulate_replica, payload, scn.replicas, scn.seed, workers)
    trace_rows = []
    snap_rows = []
    for r, (rows, final) in enumerate(out):
        for t, w, dw, dwa, count, mx in rows:
            trace_rows.append([r, t, w, dw, dwa, count, mx])
        for lab, ks, pos in final:
            snap_rows.append([r, scn.t_grid[-1], lab, pos, scn.level, ks])
    return {
        "suite": "simulate",
        "scenario": scn.name,
        "omega": scn.omega,
        "replicas": scn.replicas,
        "seed": scn.seed,
        "trace_header": ["replica", "time", "W", "dW", "dWa", "count", "max_pos"],
        "trace_rows": trace_rows,
        "snapshot_header": ["replica", "time", "label", "position", "level_mask", "k_counters"],
        "snapshot_rows": snap_rows,
        "tests": [],
        "pass": True,
    }
