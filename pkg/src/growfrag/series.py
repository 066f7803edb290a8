"""Power-series evaluation of integrals against an algebraic endpoint weight.

All dislocation-measure integrals for the power-law binary family reduce to

    integral over [lo, hi] of f(x) * x**(-beta) dx,   0 <= lo < hi <= 1/2,

where f is analytic on [0, 1/2] with a known power series around 0.  Since
hi <= 1/2 the truncated series converges geometrically (factor 1/2 per term),
so these evaluations are exact to machine precision -- runtime adaptive
quadrature cannot reliably hit the 1e-12 identity tolerances the harness
asserts.  Coefficients may be complex (complex-step differentiation).
"""

import cmath
import math

import numpy as np

N_TERMS = 160


def binom_series(s, n=N_TERMS):
    """Coefficients a_k of (1-x)^s = sum_k a_k x^k; s may be complex."""
    out = np.empty(n, dtype=complex if isinstance(s, complex) else float)
    out[0] = 1.0
    for k in range(1, n):
        out[k] = out[k - 1] * (-(s - (k - 1)) / k)
    return out


def log1m_series(n=N_TERMS):
    """Coefficients of log(1-x)."""
    out = np.zeros(n)
    out[1:] = -1.0 / np.arange(1, n)
    return out


def series_mul(a, b):
    """Truncated Cauchy product of two coefficient arrays."""
    n = max(len(a), len(b))
    return np.convolve(a, b)[:n]


def _power(x, e):
    if isinstance(e, complex):
        if x == 0.0:
            return 0.0 + 0.0j
        return cmath.exp(e * math.log(x))
    return x**e


def integrate_power_weight(coeffs, beta, lo, hi, drop=0):
    """integral over [lo, hi] of (sum_k c_k x^k) x^(-beta) dx.

    Coefficients with index below ``drop`` are analytically zero for the
    integrand at hand and are discarded: keeping their floating-point noise
    would inject spurious (possibly divergent) endpoint contributions.
    Returns inf when a non-vanishing term makes the integral diverge at 0.
    """
    total = 0.0j if np.iscomplexobj(coeffs) else 0.0
    for k in range(drop, len(coeffs)):
        ck = coeffs[k]
        if ck == 0:
            continue
        e = k + 1 - beta
        re = e.real if isinstance(e, complex) else e
        if lo == 0.0 and re <= 0.0:
            return math.inf
        if abs(e) < 1e-9:
            # removable singularity: (hi^e - lo^e)/e -> log(hi/lo)
            l_hi, l_lo = math.log(hi), math.log(lo)
            total += ck * (l_hi - l_lo) * (1.0 + e * (l_hi + l_lo) / 2.0)
        else:
            total += ck * (_power(hi, e) - _power(lo, e)) / e
    return total


def power_integral(e, lo, hi):
    """integral over [lo, hi] of x^e dx (lo may be 0 when Re e > -1)."""
    s = e + 1
    re = s.real if isinstance(s, complex) else s
    if lo == 0.0 and re <= 0.0:
        return math.inf
    if abs(s) < 1e-9:
        return math.log(hi / lo) * (1.0 + s * (math.log(hi) + math.log(lo)) / 2.0)
    return (_power(hi, s) - _power(lo, s)) / s


def power_log_integral(e, lo, hi):
    """integral over [lo, hi] of x^e log(x) dx, for 0 < lo < hi."""
    s = e + 1
    if abs(s) < 1e-9:
        # near e = -1: primitive is (log x)^2 / 2 at leading order
        return (math.log(hi) ** 2 - math.log(lo) ** 2) / 2.0
    return (_power(hi, s) * (math.log(hi) - 1.0 / s) - _power(lo, s) * (math.log(lo) - 1.0 / s)) / s
