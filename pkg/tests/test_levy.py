import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import kstest

from growfrag.errors import GrowfragError
from growfrag.levy import (
    AtomicJumps,
    LevyExponentParams,
    MotionSampler,
    PowerTailJumps,
    esscher,
    exponent_mean,
    laplace_exponent,
    sample_jumps,
    simulate_path,
)

from conftest import rng

BM = LevyExponentParams(center=0.0, gaussian=1.0)
ATOM = LevyExponentParams(
    center=0.0, gaussian=0.0, jumps=(AtomicJumps((1.0,), (-math.log(2.0),)),)
)
TAIL = LevyExponentParams(
    center=0.0,
    gaussian=0.0,
    jumps=(PowerTailJumps(c=1.0, beta=1.5, tilt=0.0, p_lo=0.5),),
)


def test_exponent_brownian():
    assert laplace_exponent(BM, 2.0) == pytest.approx(2.0)


def test_exponent_atomic():
    expect = 0.25 - 1.0 + 2.0 * math.log(2.0)
    assert laplace_exponent(ATOM, 2.0) == pytest.approx(expect, rel=1e-14)


def test_exponent_vanishes_at_zero():
    for params in (BM, ATOM, TAIL):
        assert laplace_exponent(params, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_exponent_power_tail_against_quadrature():
    for q in (0.7, 2.0, 3.4):
        val, _ = quad(
            lambda p: (p**q - 1.0 - q * math.log(p)) * (1.0 - p) ** -1.5, 0.5, 1.0
        )
        assert laplace_exponent(TAIL, q) == pytest.approx(val, abs=1e-9)


def test_esscher_brownian_drift():
    tilted = esscher(BM, 1.0)
    assert tilted.center == pytest.approx(1.0)
    assert tilted.gaussian == 1.0
    assert laplace_exponent(tilted, 2.0) == pytest.approx(2.0 + 2.0)  # q^2/2 + q at q=2


def test_esscher_atomic_values():
    tilted = esscher(ATOM, 2.0)
    (jumps,) = tilted.jumps
    assert jumps.rates[0] == pytest.approx(0.25, rel=1e-14)
    assert jumps.sizes[0] == -math.log(2.0)
    assert tilted.center == pytest.approx(-math.log(2.0) * (0.25 - 1.0), rel=1e-14)


def test_esscher_identity_grid():
    for params in (BM, ATOM, TAIL):
        for omega in (0.5, 1.0, 2.0):
            tilted = esscher(params, omega)
            for q in np.linspace(0.0, 5.0, 21):
                lhs = laplace_exponent(tilted, q)
                rhs = laplace_exponent(params, q + omega) - laplace_exponent(params, omega)
                assert lhs == pytest.approx(rhs, abs=1e-12)


def test_esscher_composition():
    for params in (ATOM, TAIL):
        two_step = esscher(esscher(params, 0.7), 1.3)
        one_step = esscher(params, 2.0)
        for q in np.linspace(0.0, 4.0, 9):
            assert laplace_exponent(two_step, q) == pytest.approx(
                laplace_exponent(one_step, q), abs=1e-12
            )


def test_deterministic_drift_path():
    params = LevyExponentParams(center=0.7, gaussian=0.0)
    path = simulate_path(params, 2.0, 0.25, rng(0))
    assert np.allclose(path.values, 0.7 * path.times)
    assert path.jump_record == []


def test_path_starts_at_zero():
    path = simulate_path(BM, 1.0, 0.1, rng(1))
    assert path.times[0] == 0.0 and path.values[0] == 0.0
    assert np.all(np.diff(path.times) > 0)


def test_jump_count_oracle():
    counts = [
        len(simulate_path(ATOM, 10.0, None, stream).jump_record)
        for stream in rng(2).spawn(3000)
    ]
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - 10.0) < 3 * se


def test_path_mean_matches_exponent_slope():
    for params in (ATOM, LevyExponentParams(center=0.3, gaussian=0.8, jumps=ATOM.jumps)):
        terms = [simulate_path(params, 1.0, None, s).terminal() for s in rng(3).spawn(4000)]
        se = np.std(terms, ddof=1) / math.sqrt(len(terms))
        assert abs(np.mean(terms) - exponent_mean(params)) < 3 * se


def test_exponential_martingale():
    terminals = np.array([simulate_path(ATOM, 1.0, None, s).terminal() for s in rng(4).spawn(10_000)])
    for q in (1.0, 2.0):
        vals = np.exp(q * terminals - laplace_exponent(ATOM, q))
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - 1.0) < 3 * se


def test_increment_independence():
    # correlation between increments over disjoint intervals ~ 0
    params = LevyExponentParams(center=0.0, gaussian=1.0, jumps=ATOM.jumps)
    a, b = [], []
    for s in rng(5).spawn(2000):
        path = simulate_path(params, 2.0, None, s, breakpoints=[1.0])
        i = int(np.searchsorted(path.times, 1.0))
        a.append(path.values[i])
        b.append(path.values[-1] - path.values[i])
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 3.0 / math.sqrt(len(a))


def test_jumps_appear_in_skeleton():
    # gamma = 0: between skeleton points the path moves by drift alone, so a
    # jump accounts exactly for the remaining discontinuity
    path = simulate_path(ATOM, 5.0, 0.5, rng(6))
    drift = math.log(2.0)  # compensation of the single atom
    assert len(path.jump_record) > 0
    for t, x in path.jump_record:
        i = int(np.searchsorted(path.times, t))
        assert path.times[i] == t
        dt = path.times[i] - path.times[i - 1]
        assert path.values[i] - path.values[i - 1] == pytest.approx(drift * dt + x, abs=1e-12)


def test_power_tail_needs_cutoff():
    with pytest.raises(GrowfragError):
        simulate_path(TAIL, 1.0, None, rng(7))


def test_power_tail_cutoff_scheme_preserves_mean():
    # dropped sub-cutoff jumps keep their compensator: the mean slope is exact
    times = [
        simulate_path(TAIL, 1.0, None, s, small_jump_cutoff=0.05).terminal()
        for s in rng(8).spawn(4000)
    ]
    se = np.std(times, ddof=1) / math.sqrt(len(times))
    assert abs(np.mean(times) - exponent_mean(TAIL)) < 3 * se


def test_power_tail_sample_distribution():
    comp = TAIL.jumps[0]
    r = rng(9)
    lo, hi = 0.5, 0.95
    draws = np.array([comp.sample(r, lo, hi) for _ in range(8000)])
    e = 1.0 - comp.beta

    def cdf(p):
        a, b = (1 - lo) ** e, (1 - hi) ** e
        return ((1 - p) ** e - a) / (b - a)

    assert kstest(draws, cdf).pvalue > 0.01


def test_tilted_power_tail_sample_distribution():
    comp = PowerTailJumps(c=1.0, beta=1.5, tilt=2.0, p_lo=0.5)
    r = rng(10)
    lo, hi = 0.5, 0.95
    draws = np.array([comp.sample(r, lo, hi) for _ in range(8000)])
    norm, _ = quad(lambda p: p**2 * (1 - p) ** -1.5, lo, hi)

    def cdf(p):
        val, _ = quad(lambda x: x**2 * (1 - x) ** -1.5, lo, min(p, hi))
        return val / norm

    assert kstest(draws, np.vectorize(cdf)).pvalue > 0.01


def test_motion_sampler_matches_path_law():
    params = LevyExponentParams(center=0.4, gaussian=0.6, jumps=ATOM.jumps)
    sampler = MotionSampler(params)
    incs = [sampler.increment(s, 1.0) for s in rng(11).spawn(4000)]
    se = np.std(incs, ddof=1) / math.sqrt(len(incs))
    assert abs(np.mean(incs) - exponent_mean(params)) < 3 * se


def test_sample_jumps_drift_bookkeeping():
    # simulated mean slope = drift + mean of retained jumps = Psi'(0) = 0 here
    _, _, drift = sample_jumps(TAIL, 1.0, rng(12), small_jump_cutoff=0.05)
    comp = TAIL.jumps[0]
    retained_mean = comp.mean_log(comp.p_lo, math.exp(-0.05))
    assert drift + retained_mean == pytest.approx(exponent_mean(TAIL), abs=1e-12)
