"""Parametric dislocation measures, the cumulant, truncation and spine kernels.

Two families are supported:

* ``FiniteAtomic`` -- a finite collection of weighted mass-partition atoms;
  every derived quantity is a finite sum, evaluated in closed form.
* ``BinaryConservative`` -- binary splits (p, 1-p) with intensity density
  c * (1-p)**(-beta) for the larger piece p in [1/2, 1), beta < 3.  Derived
  integrals are evaluated by the machine-precision series in
  :mod:`growfrag.series`.

Positions live on the log scale: a fragment of relative size y sits at
offset log(y) from its parent.  The truncation ladder 0 = b_0 < b_1 < ...
suppresses children of relative size <= exp(-b_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import series
from .errors import (
    DomainError,
    Diverges,
    GrowfragError,
    InfiniteActivity,
    LadderExhausted,
    MomentError,
    NoCriticalPoint,
    ZeroRate,
)

_SUM_TOL = 1e-12
_CSTEP = 1e-80  # complex-step size for derivatives of the binary family
_E_INV = math.exp(-1.0)


@dataclass(frozen=True)
class MassPartition:
    """Nonincreasing nonnegative sequence with sum <= 1; trailing zeros implicit."""

    entries: tuple[float, ...]

    def __post_init__(self):
        ent = tuple(float(x) for x in self.entries)
        while ent and ent[-1] == 0.0:
            ent = ent[:-1]
        object.__setattr__(self, "entries", ent)
        prev = math.inf
        for x in ent:
            if x < 0.0 or x > prev:
                raise ValueError(f"entries must be nonincreasing and nonnegative: {ent}")
            prev = x
        if sum(ent) > 1.0 + _SUM_TOL:
            raise ValueError(f"entries sum to more than 1: {ent}")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, j):
        return self.entries[j]

    def __iter__(self):
        return iter(self.entries)

    @property
    def is_zero(self):
        return not self.entries

    @property
    def n_children(self):
        """Number of strictly positive entries."""
        return len(self.entries)


def kb_image(p: MassPartition, threshold: float) -> MassPartition:
    """Truncation map: keep the first entry, zero every later entry <= threshold."""
    if p.is_zero:
        return p
    kept = (p.entries[0],) + tuple(x for x in p.entries[1:] if x > threshold)
    return MassPartition(kept)


@dataclass(frozen=True)
class TruncationLadder:
    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(b) for b in self.levels)
        object.__setattr__(self, "levels", lv)
        if not lv or lv[0] != 0.0:
            raise ValueError("ladder must start at b_0 = 0")
        for lo, hi in zip(lv, lv[1:]):
            if hi <= lo:
                raise ValueError("ladder levels must be strictly increasing")

    @property
    def max_index(self):
        return len(self.levels) - 1

    def threshold(self, n: int) -> float:
        """exp(-b_n)."""
        return math.exp(-self.levels[n])

    def level_of(self, y: float) -> int:
        """The unique m >= 1 with exp(-b_{m-1}) >= y > exp(-b_m)."""
        if not 0.0 < y <= 1.0:
            raise ValueError(f"size must lie in (0, 1], got {y}")
        for m in range(1, len(self.levels)):
            if y > self.threshold(m):
                return m
        raise LadderExhausted(f"size {y} at or below exp(-b_{self.max_index}); extend the ladder")


def level_of(y: float, ladder: TruncationLadder) -> int:
    return ladder.level_of(y)


@dataclass(frozen=True)
class FiniteAtomic:
    """nu = sum of weight * delta_partition over finitely many atoms."""

    atoms: tuple[tuple[float, MassPartition], ...]

    def __post_init__(self):
        norm = []
        for w, p in self.atoms:
            w = float(w)
            if w <= 0.0:
                raise ValueError("atom weights must be positive")
            if not isinstance(p, MassPartition):
                p = MassPartition(tuple(p))
            if p.is_zero:
                raise ValueError("atoms must be nonzero partitions (nu({0}) = 0)")
            if p.n_children == 1 and p.entries[0] >= 1.0:
                raise ValueError("single-entry atoms must have entry < 1")
            norm.append((w, p))
        object.__setattr__(self, "atoms", tuple(norm))


@dataclass(frozen=True)
class BinaryConservative:
    """Density c * (1-p)**(-beta) for p in [1/2, 1); children are (p, 1-p)."""

    beta: float
    c: float

    def __post_init__(self):
        if not self.beta < 3.0:
            raise MomentError(f"(1-p)^2-moment diverges for beta = {self.beta} >= 3")
        if not self.c > 0.0:
            raise ValueError("c must be positive")


@dataclass(frozen=True)
class DislocationModel:
    a: float
    sigma: float
    nu: FiniteAtomic | BinaryConservative
    ladder: TruncationLadder = field(default_factory=lambda: TruncationLadder((0.0, 1.0, 2.0, 3.0)))

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if not isinstance(self.nu, (FiniteAtomic, BinaryConservative)):
            raise TypeError("nu must be FiniteAtomic or BinaryConservative")
        # (1 - p1)^2 moment: automatic for FiniteAtomic (finite measure), and
        # equivalent to beta < 3 for the binary family (checked there).

    # -- domain ------------------------------------------------------------

    def threshold(self, trunc):
        """Child-size threshold exp(-b_n) for a level index, or 0.0 untruncated."""
        if trunc is None:
            return 0.0
        return self.ladder.threshold(trunc)

    def dom_lower(self, trunc=None) -> float:
        """Left endpoint of dom kappa (open); -inf when kappa is finite everywhere."""
        if isinstance(self.nu, BinaryConservative) and trunc is None:
            return self.nu.beta - 1.0
        return -math.inf

    def in_domain(self, q: float, trunc=None) -> bool:
        return q > self.dom_lower(trunc)

    # -- cumulant ----------------------------------------------------------

    def cumulant(self, q, trunc=None):
        """kappa(q), or the level-b_n truncated cumulant when trunc is given.

        Returns +inf exactly when q is outside the domain.
        """
        thr = self.threshold(trunc)
        gauss = 0.5 * self.sigma**2 * q * q + self.a * q
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                p1 = p.entries[0]
                term = p1**q - 1.0 + (1.0 - p1) * q
                for x in p.entries[1:]:
                    if x > thr:
                        term += x**q
                s += w * term
            return gauss + s
        bc = self.nu
        s1 = series.integrate_power_weight(series.binom_series(q), bc.beta, 0.0, 0.5, drop=2)
        if thr < 0.5:
            s2 = series.power_integral(q - bc.beta, thr, 0.5)
        else:
            s2 = 0.0
        if s1 == math.inf or s2 == math.inf:
            return math.inf
        return gauss + bc.c * (s1 + s2)

    def cumulant_derivative(self, q: float, trunc=None) -> float:
        """kappa'(q) on the interior of the domain."""
        if not self.in_domain(q, trunc):
            raise DomainError(f"q = {q} outside the interior of dom kappa")
        if isinstance(self.nu, FiniteAtomic):
            thr = self.threshold(trunc)
            s = 0.0
            for w, p in self.nu.atoms:
                p1 = p.entries[0]
                term = p1**q * math.log(p1) + (1.0 - p1)
                for x in p.entries[1:]:
                    if x > thr:
                        term += x**q * math.log(x)
                s += w * term
            return self.sigma**2 * q + self.a + s
        val = self.cumulant(complex(q, _CSTEP), trunc)
        if val == math.inf:
            raise DomainError(f"q = {q} outside the interior of dom kappa")
        return val.imag / _CSTEP

    def omega_bar(self) -> float:
        """Unique positive root of q*kappa'(q) - kappa(q) (assumption of a critical point)."""

        def g(q):
            k = self.cumulant(q)
            if k == math.inf:
                return math.inf
            return q * self.cumulant_derivative(q) - k

        lower = max(0.0, self.dom_lower())
        lo = None
        step = 1.0
        for _ in range(70):
            q = lower + step
            v = g(q)
            if v < 0.0 and math.isfinite(v):
                lo = q
                break
            step /= 2.0
        if lo is None:
            raise NoCriticalPoint("no negative value of q*kappa'(q) - kappa(q) near the domain edge")
        hi = None
        q = max(lo * 2.0, lo + 1.0)
        for _ in range(70):
            v = g(q)
            if v > 0.0:
                hi = q
                break
            q *= 2.0
        if hi is None:
            raise NoCriticalPoint("q*kappa'(q) - kappa(q) never becomes positive")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13 * max(1.0, abs(hi)):
                break
        root = 0.5 * (lo + hi)
        if abs(g(root)) > 1e-10:
            raise NoCriticalPoint(f"bisection failed to resolve the root, residual {g(root)}")
        return root

    # -- branching under truncation -----------------------------------------

    def branch_rate(self, trunc: int) -> float:
        """Total mass of the truncated measure on partitions with >= 2 surviving children."""
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            return sum(w for w, p in self.nu.atoms if len(p) > 1 and p.entries[1] > thr)
        bc = self.nu
        if thr >= 0.5:
            return 0.0
        return bc.c * series.power_integral(-bc.beta, thr, 0.5)

    def sample_branch_event(self, trunc: int, rng) -> MassPartition:
        """Draw a partition from the normalized truncated branch measure."""
        lam = self.branch_rate(trunc)
        if lam <= 0.0:
            raise ZeroRate(f"branch rate is zero at level index {trunc}")
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            weights, parts = zip(
                *[(w, p) for w, p in self.nu.atoms if len(p) > 1 and p.entries[1] > thr]
            )
            j = rng.choice(len(parts), p=np.asarray(weights) / sum(weights))
            return kb_image(parts[j], thr)
        bc = self.nu
        x = _sample_trunc_power(rng, bc.beta, thr, 0.5)
        return MassPartition((1.0 - x, x))

    # -- spine kernels --------------------------------------------------------

    def spine_jump_rate(self, omega: float, trunc=None) -> float:
        """Total mass of pi: sum over surviving entries of p_i^omega."""
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                s += w * p.entries[0] ** omega
                s += w * sum(x**omega for x in p.entries[1:] if x > thr)
            return s
        bc = self.nu
        part1 = series.integrate_power_weight(series.binom_series(omega), bc.beta, 0.0, 0.5)
        part2 = series.power_integral(omega - bc.beta, thr, 0.5) if thr < 0.5 else 0.0
        if part1 == math.inf or part2 == math.inf:
            return math.inf
        return bc.c * (part1 + part2)

    def spine_kernel(self, omega: float, rng, trunc=None):
        """Draw one full spine-jump mark (y, i, partner partition).

        y is the spine's relative jump size, i the index it occupies in the
        partner partition, and the partner carries every surviving sibling.
        """
        rate = self.spine_jump_rate(omega, trunc)
        if not math.isfinite(rate):
            raise InfiniteActivity(
                "total spine-jump rate diverges; only the truncated immigration kernel is samplable"
            )
        if rate <= 0.0:
            raise ZeroRate("spine-jump rate is zero")
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            marks = _finite_mark_table(self.nu, omega, thr)
            weights = np.array([m[0] for m in marks])
            j = rng.choice(len(marks), p=weights / weights.sum())
            _, y, i, part = marks[j]
            return y, i, part
        bc = self.nu
        if omega < 0.0:
            raise GrowfragError("binary spine kernel sampling requires omega >= 0")
        bound = 1.0 + 2.0**-omega
        while True:
            x = _sample_trunc_power(rng, bc.beta, 0.0, 0.5)
            p1 = 1.0 - x
            w1 = p1**omega
            w2 = x**omega if x > thr else 0.0
            if rng.random() * bound <= w1 + w2:
                break
        part = kb_image(MassPartition((p1, x)), thr)
        if rng.random() * (w1 + w2) <= w1:
            return p1, 1, part
        return x, 2, part

    def spine_kill_rate(self, omega: float, trunc: int) -> float:
        """Rate at which the truncated spine is killed: mass of sub-threshold marks."""
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                s += w * sum(x**omega for x in p.entries[1:] if x <= thr)
            return s
        bc = self.nu
        val = bc.c * series.power_integral(omega - bc.beta, 0.0, min(thr, 0.5))
        if val == math.inf:
            raise Diverges(f"spine kill rate diverges for omega = {omega}")
        return val

    def immigration_rate(self, omega: float, trunc: int) -> float:
        """Rate of spine jumps accompanied by immigration (>= 2 surviving children)."""
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                if len(p) > 1 and p.entries[1] > thr:
                    s += w * (
                        p.entries[0] ** omega + sum(x**omega for x in p.entries[1:] if x > thr)
                    )
            return s
        bc = self.nu
        if thr >= 0.5:
            return 0.0
        if thr <= 0.0:
            raise GrowfragError("immigration rate requires a truncation level")
        part1 = series.integrate_power_weight(series.binom_series(omega), bc.beta, thr, 0.5)
        part2 = series.power_integral(omega - bc.beta, thr, 0.5)
        return bc.c * (part1 + part2)

    def immigration_kernel(self, omega: float, trunc: int, rng):
        """Draw a spine-jump mark conditioned on immigration: (y, i, partner)."""
        mu = self.immigration_rate(omega, trunc)
        if mu <= 0.0:
            raise ZeroRate(f"immigration rate is zero at level index {trunc}")
        thr = self.threshold(trunc)
        if isinstance(self.nu, FiniteAtomic):
            marks = _finite_mark_table(self.nu, omega, thr, branching_only=True)
            weights = np.array([m[0] for m in marks])
            j = rng.choice(len(marks), p=weights / weights.sum())
            _, y, i, part = marks[j]
            return y, i, part
        bc = self.nu
        if omega < 0.0:
            raise GrowfragError("binary immigration sampling requires omega >= 0")

        def h(p):
            return p**omega + (1.0 - p) ** omega

        bound = max(h(0.5), h(1.0 - thr))
        while True:
            x = _sample_trunc_power(rng, bc.beta, thr, 0.5)
            p1 = 1.0 - x
            if rng.random() * bound <= h(p1):
                break
        part = MassPartition((p1, x))
        if rng.random() * h(p1) <= p1**omega:
            return p1, 1, part
        return x, 2, part

    # -- the spine exponent, Levy-Khintchine route ---------------------------

    def spine_center(self, omega: float, trunc=None) -> float:
        """Centre of the tilted spine process in its Levy-Khintchine display."""
        thr = self.threshold(trunc)
        base = self.a + omega * self.sigma**2
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                p1 = p.entries[0]
                term = 1.0 - p1 + p1**omega * _ell(p1)
                for x in p.entries[1:]:
                    if x > thr:
                        term += x**omega * _ell(x)
                s += w * term
            return base + s
        bc = self.nu
        coeffs = series.series_mul(series.binom_series(omega), series.log1m_series())
        coeffs[1] += 1.0  # the (1 - p1) = x term
        t1 = series.integrate_power_weight(coeffs, bc.beta, 0.0, 0.5, drop=2)
        lo2 = max(_E_INV, thr)
        t2 = series.power_log_integral(omega - bc.beta, lo2, 0.5) if lo2 < 0.5 else 0.0
        return base + bc.c * (t1 + t2)

    def spine_exponent_lk(self, omega: float, q: float, trunc=None) -> float:
        """The tilted spine Laplace exponent assembled from its own LK display.

        Independent route against cumulant(q + omega) - cumulant(omega); their
        agreement is one of the identities the harness certifies.
        """
        thr = self.threshold(trunc)
        gauss = 0.5 * self.sigma**2 * q * q + self.spine_center(omega, trunc) * q
        if isinstance(self.nu, FiniteAtomic):
            s = 0.0
            for w, p in self.nu.atoms:
                p1 = p.entries[0]
                term = p1**omega * (p1**q - 1.0 - q * _ell(p1))
                for x in p.entries[1:]:
                    if x > thr:
                        term += x**omega * (x**q - 1.0 - q * _ell(x))
                s += w * term
            return gauss + s
        bc = self.nu
        coeffs = (
            series.binom_series(omega + q)
            - series.binom_series(omega)
            - q * series.series_mul(series.binom_series(omega), series.log1m_series())
        )
        j1 = series.integrate_power_weight(coeffs, bc.beta, 0.0, 0.5, drop=2)
        lo_x = min(thr, 0.5)
        j2a = series.power_integral(omega + q - bc.beta, lo_x, 0.5)
        j2b = series.power_integral(omega - bc.beta, lo_x, 0.5)
        lo2 = max(_E_INV, thr)
        j2c = series.power_log_integral(omega - bc.beta, lo2, 0.5) if lo2 < 0.5 else 0.0
        parts = (j1, j2a, j2b)
        if any(v == math.inf for v in parts):
            return math.inf
        return gauss + bc.c * (j1 + j2a - j2b - q * j2c)


def _ell(y: float) -> float:
    """Jump-compensation cutoff: log(y) when |log y| <= 1, else 0."""
    return math.log(y) if y >= _E_INV else 0.0


# -- bridge to the Levy-process layer ----------------------------------------


def branch_moment(model: DislocationModel, q: float, trunc: int) -> float:
    """integral over branch partitions of (sum of surviving p_i^q) - 1."""
    thr = model.threshold(trunc)
    if isinstance(model.nu, FiniteAtomic):
        s = 0.0
        for w, p in model.nu.atoms:
            if len(p) > 1 and p.entries[1] > thr:
                s += w * (
                    p.entries[0] ** q + sum(x**q for x in p.entries[1:] if x > thr) - 1.0
                )
        return s
    bc = model.nu
    if thr >= 0.5:
        return 0.0
    coeffs = series.binom_series(q)
    coeffs[0] -= 1.0
    val = series.integrate_power_weight(coeffs, bc.beta, thr, 0.5)
    val += series.power_integral(q - bc.beta, thr, 0.5)
    return bc.c * val


@lru_cache(maxsize=64)
def single_particle_params(model: DislocationModel, trunc: int):
    """Levy exponent parameters of one particle's motion between branch events.

    The branch part of the truncated measure contributes only the
    (1 - p1)-compensation drift; partitions truncated to a single fragment
    become ordinary negative jumps of the motion.
    """
    from . import levy

    thr = model.threshold(trunc)
    jumps = []
    if isinstance(model.nu, FiniteAtomic):
        center = model.a
        rates, sizes = [], []
        for w, p in model.nu.atoms:
            p1 = p.entries[0]
            if len(p) > 1 and p.entries[1] > thr:
                center += w * (1.0 - p1)
            else:
                rates.append(w)
                sizes.append(math.log(p1))
                center += w * (1.0 - p1 + math.log(p1) * (p1 > _E_INV))
        if rates:
            jumps.append(levy.AtomicJumps(tuple(rates), tuple(sizes)))
    else:
        bc = model.nu
        center = model.a
        if thr < 0.5:
            center += bc.c * series.power_integral(1.0 - bc.beta, thr, 0.5)
        tail = levy.PowerTailJumps(c=bc.c, beta=bc.beta, tilt=0.0, p_lo=max(0.5, 1.0 - thr))
        center += tail.compensation_offset()
        jumps.append(tail)
    return levy.LevyExponentParams(center=center, gaussian=model.sigma, jumps=tuple(jumps))


def spine_motion_params(model: DislocationModel, omega: float, trunc: int):
    """Tilted single-particle motion: the spine between immigration events."""
    from . import levy

    return levy.esscher(single_particle_params(model, trunc), omega)


def spine_process_params(model: DislocationModel, omega: float, trunc: int):
    """Exponent parameters of the full tilted spine (motion plus marked jumps).

    Only available for finite-atomic measures; the binary family's branch
    jumps do not fit the power-tail component and the harness only needs
    this object for finite-activity cross-checks.
    """
    from . import levy

    if not isinstance(model.nu, FiniteAtomic):
        raise GrowfragError("full spine exponent parameters require a finite-atomic measure")
    base = spine_motion_params(model, omega, trunc)
    thr = model.threshold(trunc)
    marks = []
    for w, p in model.nu.atoms:
        part = kb_image(p, thr)
        if part.n_children >= 2:
            for y in part.entries:
                marks.append((w * y**omega, math.log(y)))
    if not marks:
        return base
    center = base.center + sum(r * x for r, x in marks if x > -1.0)
    jumps = base.jumps + (
        levy.AtomicJumps(tuple(r for r, _ in marks), tuple(x for _, x in marks)),
    )
    return levy.LevyExponentParams(center=center, gaussian=base.gaussian, jumps=jumps)


@lru_cache(maxsize=64)
def _finite_mark_table(nu: FiniteAtomic, omega: float, thr: float, branching_only: bool = False):
    """Mark table [(weight, y, index, partner)] for the finite-atomic spine kernel."""
    marks = []
    for w, p in nu.atoms:
        part = kb_image(p, thr)
        if branching_only and part.n_children < 2:
            continue
        for i, y in enumerate(part.entries, start=1):
            marks.append((w * y**omega, y, i, part))
    if not marks:
        raise ZeroRate("no spine-jump marks survive the truncation")
    return tuple(marks)


def _sample_trunc_power(rng, beta: float, x_lo: float, x_hi: float) -> float:
    """Sample from density proportional to x**(-beta) on (x_lo, x_hi]."""
    u = rng.random()
    if abs(beta - 1.0) < 1e-12:
        if x_lo <= 0.0:
            raise ZeroRate("x^(-1) density is not normalizable down to 0")
        return x_lo * (x_hi / x_lo) ** u
    e = 1.0 - beta
    lo_p = x_lo**e if x_lo > 0.0 else 0.0
    if x_lo <= 0.0 and e <= 0.0:
        raise ZeroRate("power density is not normalizable down to 0")
    return (lo_p + u * (x_hi**e - lo_p)) ** (1.0 / e)
