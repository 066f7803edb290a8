"""Spectrally negative Levy processes: exponents, Esscher tilting, simulation.

The Laplace exponent convention is

    Psi(q) = gaussian^2 q^2 / 2 + center*q
             + integral (e^{qx} - 1 - q x 1{x > -1}) Pi(dx)

over jump sizes x < 0.  Jump measures are superpositions of components:
atomic lists (simulated exactly) and a power-law tail of small negative
jumps written in the fragment variable p = e^x with density
c * p^tilt * (1-p)^(-beta) dp on [p_lo, p_hi) -- tilting closes this family
under the Esscher transform.  Small jumps of the power tail below a cutoff
are replaced by their compensating drift (first-order scheme).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import series
from .errors import GrowfragError, MomentError

_E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class AtomicJumps:
    rates: tuple[float, ...]
    sizes: tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) != len(self.sizes):
            raise ValueError("rates and sizes must align")
        if any(r <= 0.0 for r in self.rates):
            raise ValueError("atomic rates must be positive")
        if any(x >= 0.0 for x in self.sizes):
            raise ValueError("jump sizes must be negative")

    def lk_integral(self, q):
        return sum(
            r * (math.exp(q * x) - 1.0 - q * x * (x > -1.0))
            for r, x in zip(self.rates, self.sizes)
        )

    def esscher(self, omega):
        rates = tuple(r * math.exp(omega * x) for r, x in zip(self.rates, self.sizes))
        shift = sum(
            r * x * (math.exp(omega * x) - 1.0)
            for r, x in zip(self.rates, self.sizes)
            if x > -1.0
        )
        if not all(map(math.isfinite, rates)) or not math.isfinite(shift):
            raise MomentError("tilted atomic rates diverge")
        return AtomicJumps(rates, self.sizes), shift

    def mean(self):
        """integral of x Pi(dx) (all jumps; finite for atomic lists)."""
        return sum(r * x for r, x in zip(self.rates, self.sizes))

    def compensated_mean(self):
        """integral of x 1{x > -1} Pi(dx)."""
        return sum(r * x for r, x in zip(self.rates, self.sizes) if x > -1.0)


@dataclass(frozen=True)
class PowerTailJumps:
    """Jumps x = log p with p ~ c * p^tilt * (1-p)^(-beta) dp on [p_lo, p_hi)."""

    c: float
    beta: float
    tilt: float
    p_lo: float
    p_hi: float = 1.0

    def __post_init__(self):
        if not (0.5 <= self.p_lo < self.p_hi <= 1.0):
            raise ValueError("power tail requires 1/2 <= p_lo < p_hi <= 1")
        if self.c <= 0.0:
            raise ValueError("c must be positive")

    def _x_range(self, p_from=None, p_to=None):
        p_from = self.p_lo if p_from is None else p_from
        p_to = self.p_hi if p_to is None else p_to
        return 1.0 - p_to, 1.0 - p_from  # in x = 1 - p

    def mass(self, p_from=None, p_to=None):
        lo, hi = self._x_range(p_from, p_to)
        if hi <= lo:
            return 0.0
        return self.c * series.integrate_power_weight(
            series.binom_series(self.tilt), self.beta, lo, hi
        )

    def mean_log(self, p_from=None, p_to=None):
        """integral of log(p) against the density on [p_from, p_to]."""
        lo, hi = self._x_range(p_from, p_to)
        if hi <= lo:
            return 0.0
        coeffs = series.series_mul(series.binom_series(self.tilt), series.log1m_series())
        return self.c * series.integrate_power_weight(coeffs, self.beta, lo, hi, drop=1)

    def lk_integral(self, q):
        # p_lo >= 1/2 > e^{-1}, so the small-jump compensation is always active
        coeffs = (
            series.binom_series(self.tilt + q)
            - series.binom_series(self.tilt)
            - q * series.series_mul(series.binom_series(self.tilt), series.log1m_series())
        )
        lo, hi = self._x_range()
        return self.c * series.integrate_power_weight(coeffs, self.beta, lo, hi, drop=2)

    def esscher(self, omega):
        tilted = replace(self, tilt=self.tilt + omega)
        coeffs = series.series_mul(
            series.log1m_series(),
            series.binom_series(self.tilt + omega) - series.binom_series(self.tilt),
        )
        lo, hi = self._x_range()
        shift = self.c * series.integrate_power_weight(coeffs, self.beta, lo, hi, drop=2)
        return tilted, shift

    def compensation_offset(self):
        """integral of (1 - e^x + x) Pi(dx): maps the dislocation drift onto the LK centre."""
        inner = series.log1m_series()
        inner[1] += 1.0  # x + log(1 - x)
        coeffs = series.series_mul(series.binom_series(self.tilt), inner)
        lo, hi = self._x_range()
        return self.c * series.integrate_power_weight(coeffs, self.beta, lo, hi, drop=2)

    def sample(self, rng, p_from, p_to):
        """One size p from the density restricted to [p_from, p_to]."""
        if self.tilt < 0.0:
            raise GrowfragError("power-tail sampling requires a nonnegative tilt")
        ref = p_to**self.tilt if self.tilt > 0.0 else 1.0
        while True:
            x = _sample_trunc_power(rng, self.beta, 1.0 - p_to, 1.0 - p_from)
            p = 1.0 - x
            if self.tilt == 0.0 or rng.random() * ref <= p**self.tilt:
                return p


def _sample_trunc_power(rng, beta, x_lo, x_hi):
    u = rng.random()
    if abs(beta - 1.0) < 1e-12:
        return x_lo * (x_hi / x_lo) ** u
    e = 1.0 - beta
    lo_p = x_lo**e if x_lo > 0.0 else 0.0
    return (lo_p + u * (x_hi**e - lo_p)) ** (1.0 / e)


@dataclass(frozen=True)
class LevyExponentParams:
    center: float
    gaussian: float
    jumps: tuple = ()

    def __post_init__(self):
        if self.gaussian < 0.0:
            raise ValueError("gaussian coefficient must be nonnegative")


def laplace_exponent(params: LevyExponentParams, q: float) -> float:
    """Psi(q) under the Levy-Khintchine convention above."""
    val = 0.5 * params.gaussian**2 * q * q + params.center * q
    for comp in params.jumps:
        val += comp.lk_integral(q)
    return val


def esscher(params: LevyExponentParams, omega: float) -> LevyExponentParams:
    """Parameters of the tilted process: Psi_omega(q) = Psi(q + omega) - Psi(omega)."""
    center = params.center + params.gaussian**2 * omega
    jumps = []
    for comp in params.jumps:
        tilted, shift = comp.esscher(omega)
        center += shift
        jumps.append(tilted)
    return LevyExponentParams(center=center, gaussian=params.gaussian, jumps=tuple(jumps))


def exponent_mean(params: LevyExponentParams) -> float:
    """Psi'(0): the mean slope of the path."""
    val = params.center
    for comp in params.jumps:
        if isinstance(comp, AtomicJumps):
            val += comp.mean() - comp.compensated_mean()
        else:
            val += comp.mean_log() - comp.mean_log(max(comp.p_lo, _E_INV), comp.p_hi)
    return val


@dataclass
class LevyPath:
    times: np.ndarray
    values: np.ndarray
    jump_record: list

    def terminal(self):
        return float(self.values[-1])


def simulate_path(
    params: LevyExponentParams,
    horizon: float,
    resolution: float | None,
    rng,
    *,
    small_jump_cutoff: float | None = None,
    breakpoints=(),
) -> LevyPath:
    """Simulate the path on [0, horizon].

    The skeleton is the union of the regular mesh (when ``resolution`` is
    given), the exact jump arrival times, the breakpoints and the endpoints.
    Power-tail jumps smaller than ``small_jump_cutoff`` in absolute size are
    replaced by their compensating drift.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    jump_times, jump_sizes, drift = sample_jumps(params, horizon, rng, small_jump_cutoff)

    pieces = [np.array([0.0, horizon])]
    if resolution is not None:
        pieces.append(np.arange(0.0, horizon, resolution))
    if len(breakpoints):
        pieces.append(np.asarray(breakpoints, dtype=float))
    if len(jump_times):
        pieces.append(jump_times)
    times = np.unique(np.concatenate(pieces))
    times = times[(times >= 0.0) & (times <= horizon)]

    dt = np.diff(times)
    incr = drift * dt
    if params.gaussian > 0.0:
        incr = incr + params.gaussian * np.sqrt(dt) * rng.standard_normal(len(dt))
    values = np.concatenate([[0.0], np.cumsum(incr)])
    if len(jump_times):
        idx = np.searchsorted(times, jump_times)
        bump = np.zeros_like(values)
        np.add.at(bump, idx, jump_sizes)
        values += np.cumsum(bump)
    return LevyPath(times=times, values=values, jump_record=list(zip(jump_times, jump_sizes)))


def sample_jumps(params, horizon, rng, small_jump_cutoff=None):
    """All simulated jumps on [0, horizon] plus the effective linear drift.

    The drift is the LK centre minus the compensator of every *simulated*
    jump with x > -1; dropped sub-cutoff jumps keep their compensator
    (they are approximated by it).
    """
    drift = params.center
    t_parts, x_parts = [], []
    for comp in params.jumps:
        if isinstance(comp, AtomicJumps):
            drift -= comp.compensated_mean()
            for r, x in zip(comp.rates, comp.sizes):
                n = rng.poisson(r * horizon)
                if n:
                    t_parts.append(rng.uniform(0.0, horizon, n))
                    x_parts.append(np.full(n, x))
        elif isinstance(comp, PowerTailJumps):
            if small_jump_cutoff is None:
                raise GrowfragError("power-tail jumps need a small-jump cutoff")
            p_cut = min(math.exp(-small_jump_cutoff), comp.p_hi)
            if p_cut > comp.p_lo:
                rate = comp.mass(comp.p_lo, p_cut)
                drift -= comp.mean_log(max(comp.p_lo, _E_INV), p_cut)
                n = rng.poisson(rate * horizon)
                if n:
                    t_parts.append(rng.uniform(0.0, horizon, n))
                    x_parts.append(
                        np.log([comp.sample(rng, comp.p_lo, p_cut) for _ in range(n)])
                    )
        else:
            raise TypeError(f"unknown jump component {comp!r}")
    if not t_parts:
        return np.empty(0), np.empty(0), drift
    times = np.concatenate(t_parts)
    sizes = np.concatenate(x_parts)
    order = np.argsort(times)
    return times[order], sizes[order], drift


class MotionSampler:
    """Cheap per-increment sampler for a particle's motion between events."""

    def __init__(self, params: LevyExponentParams, small_jump_cutoff: float | None = None):
        self.params = params
        self.gaussian = params.gaussian
        self.drift = params.center
        self.atoms = []
        self.tail = None
        for comp in params.jumps:
            if isinstance(comp, AtomicJumps):
                self.drift -= comp.compensated_mean()
                self.atoms.extend(zip(comp.rates, comp.sizes))
            else:
                if small_jump_cutoff is None:
                    raise GrowfragError("power-tail jumps need a small-jump cutoff")
                p_cut = min(math.exp(-small_jump_cutoff), comp.p_hi)
                if p_cut > comp.p_lo:
                    self.tail = (comp, p_cut, comp.mass(comp.p_lo, p_cut))
                    self.drift -= comp.mean_log(max(comp.p_lo, _E_INV), p_cut)
        self.is_trivial = (
            self.gaussian == 0.0 and not self.atoms and self.tail is None and self.drift == 0.0
        )
        self.is_deterministic = self.gaussian == 0.0 and not self.atoms and self.tail is None

    def increment(self, rng, dt: float) -> float:
        if dt <= 0.0:
            return 0.0
        dx = self.drift * dt
        if self.gaussian > 0.0:
            dx += self.gaussian * math.sqrt(dt) * rng.standard_normal()
        for r, x in self.atoms:
            n = rng.poisson(r * dt)
            if n:
                dx += n * x
        if self.tail is not None:
            comp, p_cut, rate = self.tail
            n = rng.poisson(rate * dt)
            for _ in range(n):
                dx += math.log(comp.sample(rng, comp.p_lo, p_cut))
        return dx
