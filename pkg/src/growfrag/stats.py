"""Monte Carlo aggregation: weighted means, weighted two-sample KS, diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import TooFewSamples

MIN_EFFECTIVE_N = 30


@dataclass
class SampleSet:
    values: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != self.values.shape:
                raise ValueError("weights must match values")
            if np.any(self.weights <= 0.0):
                raise ValueError("weights must be strictly positive")

    def __len__(self):
        return len(self.values)

    def effective_n(self) -> float:
        if self.weights is None:
            return float(len(self.values))
        s = self.weights.sum()
        return float(s * s / np.square(self.weights).sum())


def mean_se(s: SampleSet):
    """Weighted mean and its standard error (linearized, ESS-corrected)."""
    n = len(s)
    if n < 2:
        raise TooFewSamples("need at least two samples")
    if s.weights is None:
        m = float(s.values.mean())
        se = float(s.values.std(ddof=1) / math.sqrt(n))
        return m, se
    w = s.weights / s.weights.sum()
    m = float(np.dot(w, s.values))
    se = float(math.sqrt(np.dot(np.square(w), np.square(s.values - m))))
    return m, se


def _weighted_ecdf(s: SampleSet, grid: np.ndarray) -> np.ndarray:
    order = np.argsort(s.values, kind="stable")
    v = s.values[order]
    w = np.ones(len(v)) if s.weights is None else s.weights[order]
    cum = np.cumsum(w) / w.sum()
    idx = np.searchsorted(v, grid, side="right")
    return np.concatenate([[0.0], cum])[idx]


def ks_two_sample(a: SampleSet, b: SampleSet):
    """Weighted two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    Effective sample sizes replace the raw counts in the p-value formula.
    Grid points closer than the floating-point resolution of the data are
    merged: the samples approximate real-valued laws, and without the merge
    a lattice-valued law would compare unequal to itself purely through
    round-off ordering inside each atom's micro-cluster.
    """
    if len(a) == 0 or len(b) == 0:
        raise TooFewSamples("both sample sets must be nonempty")
    na, nb = a.effective_n(), b.effective_n()
    en = na * nb / (na + nb)
    if min(na, nb) < MIN_EFFECTIVE_N:
        raise TooFewSamples(f"effective sample size {min(na, nb):.1f} below {MIN_EFFECTIVE_N}")
    grid = np.unique(np.concatenate([a.values, b.values]))
    if len(grid) > 1:
        scale = max(1.0, abs(float(grid[0])), abs(float(grid[-1])))
        keep = np.diff(grid) > 1e-9 * scale
        grid = grid[np.append(keep, True)]  # right edge of each cluster
    d = float(np.abs(_weighted_ecdf(a, grid) - _weighted_ecdf(b, grid)).max())
    root = math.sqrt(en)
    p = float(kolmogorov((root + 0.12 + 0.11 / root) * d))
    return d, p


def running_mean(values: np.ndarray, checkpoints) -> list:
    """Sample mean after the first k values, for each checkpoint k."""
    out = []
    cs = np.cumsum(values)
    for k in checkpoints:
        k = min(int(k), len(values))
        out.append({"n": k, "mean": float(cs[k - 1] / k)})
    return out


def convergence_report(traces, kind: str) -> dict:
    """Quantile fans, sign fractions and trend flags for a family of traces.

    ``traces`` is a list of MartingaleTrace; ``kind`` selects the series
    ('W', 'dW' or 'dWa').
    """
    if len(traces) < 100:
        raise TooFewSamples("need at least 100 traces")
    times = traces[0].times
    data = np.array([getattr(tr, kind) for tr in traces], dtype=float)
    qs = [0.05, 0.25, 0.5, 0.75, 0.95]
    quantiles = {
        f"q{int(100 * q)}": [float(x) for x in np.quantile(data, q, axis=0)] for q in qs
    }
    medians = np.quantile(data, 0.5, axis=0)
    terminal = data[:, -1]
    n = len(terminal)
    checkpoints = [k for k in (1000, 2000, 5000, 10000) if k <= n] or [n]
    report = {
        "kind": kind,
        "times": [float(t) for t in times],
        "n_traces": n,
        "quantiles": quantiles,
        "median_strictly_decreasing": bool(np.all(np.diff(medians) < 0.0)),
        "median_abs_terminal_over_initial": float(
            abs(np.quantile(data[:, -1], 0.5)) / max(abs(np.quantile(data[:, 0], 0.5)), 1e-300)
        ),
        "terminal_nonpositive_fraction": float(np.mean(terminal <= 0.0)),
        "running_mean_neg_terminal": running_mean(-terminal, checkpoints),
    }
    return report
