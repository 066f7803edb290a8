"""Additive, derivative and stopped martingale functionals of snapshots.

All evaluations use the cumulant of the truncation level the population was
simulated at (pass ``level=None`` for the untruncated cumulant); at that
level the unit-mean / zero-mean / mean-a properties are exact, and they
coincide with the untruncated statements whenever the truncation keeps the
whole measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptySnapshot


def additive(snapshot, model, omega: float, t: float, level=None) -> float:
    """exp(-t kappa(omega)) * sum over particles of exp(omega * position)."""
    k = model.cumulant(omega, trunc=level)
    if not math.isfinite(k):
        raise DomainError(f"omega = {omega} outside dom kappa")
    return math.exp(-t * k) * sum(math.exp(omega * z) for _, _, z in snapshot)


def derivative(snapshot, model, omega: float, t: float, level=None) -> float:
    """The omega-derivative of the additive martingale.

    exp(-t kappa(omega)) * sum (position - t kappa'(omega)) exp(omega * position).
    """
    k = model.cumulant(omega, trunc=level)
    if not math.isfinite(k):
        raise DomainError(f"omega = {omega} outside dom kappa")
    kp = model.cumulant_derivative(omega, trunc=level)
    return math.exp(-t * k) * sum(
        (z - t * kp) * math.exp(omega * z) for _, _, z in snapshot
    )


def stopped_derivative(pop, omega: float, a: float, t: float | None = None, mesh: str = "fine") -> float:
    """Barrier-stopped derivative martingale evaluated from the armed flags.

    Only particles whose drift-adjusted ancestral path stayed strictly below
    ``a`` at the monitor points contribute; every term is then nonnegative.
    ``mesh`` selects the fine monitor set or the coarse (every second point)
    one; the coarse estimate dominates the fine one pathwise.
    """
    if pop.barrier_omega is None or pop.barrier_omega != omega:
        from .errors import BarrierNotArmed

        raise BarrierNotArmed(f"population not armed for omega = {omega}")
    t = pop.time if t is None else t
    k = pop.model.cumulant(omega, trunc=pop.level)
    kp = pop.barrier_kprime
    total = 0.0
    for p in pop.particles.values():
        running_max = p.barrier_max if mesh == "fine" else p.barrier_max_coarse
        if running_max < a:
            total += (a + t * kp - p.position) * math.exp(-t * k + omega * p.position)
    return total


def largest(snapshot) -> float:
    if not snapshot:
        raise EmptySnapshot("snapshot has no particles")
    return max(z for _, _, z in snapshot)


@dataclass
class MartingaleTrace:
    omega: float
    times: np.ndarray
    W: np.ndarray
    dW: np.ndarray
    dWa: np.ndarray | None
    count: np.ndarray
    max_pos: np.ndarray
    barrier_a: float | None = None


def trace_population(pop, omega: float, t_grid, barrier_a: float | None = None) -> MartingaleTrace:
    """Advance a fresh population through the grid, recording the martingales."""
    times = np.asarray(sorted(t_grid), dtype=float)
    W, dW, dWa, count, mx = [], [], [], [], []
    for t in times:
        pop.advance(float(t))
        snap = pop.snapshot()
        W.append(additive(snap, pop.model, omega, t, level=pop.level))
        dW.append(derivative(snap, pop.model, omega, t, level=pop.level))
        if barrier_a is not None:
            dWa.append(stopped_derivative(pop, omega, barrier_a, t))
        count.append(len(snap))
        mx.append(largest(snap))
    return MartingaleTrace(
        omega=omega,
        times=times,
        W=np.array(W),
        dW=np.array(dW),
        dWa=np.array(dWa) if barrier_a is not None else None,
        count=np.array(count, dtype=int),
        max_pos=np.array(mx),
        barrier_a=barrier_a,
    )
