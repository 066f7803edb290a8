"""Forward and backward constructions of the process with a distinguished line.

Forward: a tilted Levy path (the spine) whose marked jumps immigrate
independent copies of the plain truncated branching process, grafted at the
spine's pre-jump position plus the siblings' log offsets.  Backward: plain
simulation under the original measure, reweighted by the additive martingale
with a size-biased particle pick.  The two must agree in law; the harness
compares them statistically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .branching import Population
from .dislocation import DislocationModel, spine_motion_params, spine_process_params
from .errors import GrowfragError
from .genealogy import EVE, Label, label_sort_key
from .levy import LevyExponentParams, simulate_path
from .martingales import additive


@dataclass(frozen=True)
class ImmigrationEvent:
    time: float
    y: float
    index: int
    partition: tuple
    offsets: tuple  # (partition index j != spine index, log p_j)
    graft_ids: tuple = ()  # (partition index j, index into SpineOutcome.grafts)


@dataclass
class SpineOutcome:
    population: "AssembledPopulation"
    spine_label: Label
    xi_times: np.ndarray
    xi_values: np.ndarray
    grid_times: np.ndarray
    lambda_values: np.ndarray
    immigration_log: list
    omega: float
    level: int
    barrier_a: float
    tau_kill: float | None = None
    grafts: list | None = None

    @property
    def spine_position(self):
        return float(self.xi_values[-1])


@dataclass
class AssembledPopulation:
    model: DislocationModel
    level: int
    time: float
    particles: dict

    @property
    def size(self):
        return len(self.particles)

    def snapshot(self):
        rows = [(p.label, dict(p.k_counters), p.position) for p in self.particles.values()]
        rows.sort(key=lambda r: (-r[2], label_sort_key(r[0])))
        return rows


def _assign_child_labels(parent_label: Label, counters: dict, partition, ladder):
    """Labels for the children (entries past the first) of one branch event.

    Mutates ``counters`` to the post-event state and returns a map from the
    1-based partition index to the assigned label.
    """
    classes: dict[int, list[int]] = {}
    for j in range(2, partition.n_children + 1):
        classes.setdefault(ladder.level_of(partition.entries[j - 1]), []).append(j)
    labels = {}
    for lvl in sorted(classes):
        k = counters.get(lvl, 0) + 1
        counters[lvl] = k
        for i, j in enumerate(classes[lvl], start=1):
            labels[j] = parent_label.child(lvl, k, i)
    return labels


def forward_decorated(
    model: DislocationModel,
    omega: float,
    t: float,
    level: int,
    rng,
    *,
    t_grid=None,
    barrier_a: float = 0.0,
    cap: int = 1_000_000,
    small_jump_cutoff: float | None = None,
    report_kill: bool = False,
    center_perturb: float = 0.0,
) -> SpineOutcome:
    """One replica of the decorated spine process at a truncation level.

    The spine itself is never killed; with ``report_kill`` the (independent)
    exponential time at which the truncated-comparison variant would have
    killed it is drawn and reported alongside.
    """
    if small_jump_cutoff is None:
        small_jump_cutoff = model.ladder.threshold(model.ladder.max_index)
    motion = spine_motion_params(model, omega, level)
    if center_perturb:
        motion = LevyExponentParams(
            center=motion.center + center_perturb, gaussian=motion.gaussian, jumps=motion.jumps
        )
    kprime = model.cumulant_derivative(omega, trunc=level)
    grid = np.asarray(sorted(t_grid), dtype=float) if t_grid is not None else np.array([t])

    tau_kill = None
    if report_kill:
        theta = model.spine_kill_rate(omega, level)
        tau_kill = rng.exponential(1.0 / theta) if theta > 0.0 else math.inf

    mu = model.immigration_rate(omega, level)
    arrivals = []
    s = 0.0
    while mu > 0.0:
        s += rng.exponential(1.0 / mu)
        if s >= t:
            break
        arrivals.append(s)

    path = simulate_path(
        motion,
        t,
        None,
        rng,
        small_jump_cutoff=small_jump_cutoff,
        breakpoints=np.concatenate([np.asarray(arrivals), grid]),
    )

    spine_label = EVE
    spine_counters: dict[int, int] = {}
    grafts: list[Population] = []
    log_entries = []
    mark_jump = np.zeros_like(path.values)
    budget_used = 1

    for s in arrivals:
        idx = int(np.searchsorted(path.times, s))
        y, i, part = model.immigration_kernel(omega, level, rng)
        # mark jumps accumulated so far exclude the current event: this is xi(s-)
        xi_pre = float(path.values[idx]) + float(mark_jump[:idx].sum())
        labels = _assign_child_labels(spine_label, spine_counters, part, model.ladder)
        offsets = tuple(
            (j, math.log(part.entries[j - 1])) for j in range(2, part.n_children + 1)
        )
        if i == 1:
            graft_specs = [(j, labels[j], off, None) for j, off in offsets]
        else:
            graft_specs = [(1, spine_label, math.log(part.entries[0]), dict(spine_counters))]
            graft_specs += [(j, labels[j], off, None) for j, off in offsets if j != i]
            spine_label = labels[i]
            spine_counters = {}
        graft_ids = []
        for j, lab, off, inherited in graft_specs:
            g = Population(
                model,
                level,
                rng,
                cap=max(cap - budget_used, 1),
                small_jump_cutoff=small_jump_cutoff,
                root_label=lab,
                root_position=xi_pre + off,
                start_time=s,
                root_counters=inherited,
            )
            g.advance(t)
            graft_ids.append((j, len(grafts)))
            grafts.append(g)
            budget_used += g.size
        mark_jump[idx] += math.log(y)
        log_entries.append(
            ImmigrationEvent(
                time=s,
                y=y,
                index=i,
                partition=part.entries,
                offsets=tuple((j, off) for j, off in offsets if j != i),
                graft_ids=tuple(graft_ids),
            )
        )

    xi_values = path.values + np.cumsum(mark_jump)
    xi_times = path.times

    particles = {}
    for g in grafts:
        particles.update(g.particles)
    from .branching import Particle

    spine_part = Particle(
        label=spine_label,
        birth_time=arrivals[-1] if arrivals else 0.0,
        position=float(xi_values[-1]),
        clock=t,
        k_counters=spine_counters,
    )
    if spine_part.label in particles:
        raise GrowfragError("spine label collided with a grafted particle")
    particles[spine_part.label] = spine_part

    grid_idx = np.searchsorted(xi_times, grid)
    lam = barrier_a + grid * kprime - xi_values[grid_idx]
    return SpineOutcome(
        population=AssembledPopulation(model=model, level=level, time=t, particles=particles),
        spine_label=spine_label,
        xi_times=xi_times,
        xi_values=xi_values,
        grid_times=grid,
        lambda_values=lam,
        immigration_log=log_entries,
        omega=omega,
        level=level,
        barrier_a=barrier_a,
        tau_kill=tau_kill,
        grafts=grafts,
    )


def truncate_outcome(outcome: SpineOutcome, m: int):
    """Thin a decorated-spine replica down to truncation level m, from scratch.

    Walks the immigration log recounting labels under the coarser threshold:
    sub-threshold spine picks erase the spine (and every later graft), other
    sub-threshold children are dropped with their grafts, and the surviving
    grafts are projected with :func:`growfrag.branching.truncate_view`.
    Must coincide with the plain max-level filter of the assembled
    population; that agreement is the pathwise nesting check.
    """
    from .branching import PopulationView, truncate_view
    from .dislocation import MassPartition, kb_image

    ladder = outcome.population.model.ladder
    thr = ladder.threshold(m)
    rows = []
    spine_label = EVE
    counters: dict[int, int] = {}
    killed = False
    for ev in outcome.immigration_log:
        part_m = kb_image(MassPartition(ev.partition), thr)
        survivors = [1] + [j for j in range(2, len(ev.partition) + 1) if ev.partition[j - 1] > thr]
        posmap = {j: jm + 1 for jm, j in enumerate(survivors)}
        labels_m = _assign_child_labels(spine_label, counters, part_m, ladder)
        spine_killed_here = ev.index >= 2 and ev.y <= thr
        for j, gidx in ev.graft_ids:
            if j == 1 and ev.index >= 2:
                rows.extend(truncate_view(outcome.grafts[gidx], m).rows)
            elif j in posmap:
                rows.extend(truncate_view(outcome.grafts[gidx], m).rows)
        if spine_killed_here:
            killed = True
            break
        if ev.index >= 2:
            spine_label = labels_m[posmap[ev.index]]
            counters = {}
    if not killed:
        rows.append((spine_label, dict(counters), float(outcome.xi_values[-1])))
    rows.sort(key=lambda r: (-r[2], label_sort_key(r[0])))
    return PopulationView(time=outcome.population.time, level=m, rows=rows), (not killed)


@dataclass(frozen=True)
class TiltedEstimate:
    value: float
    std_error: float
    n: int
    omega: float
    t: float


def backward_tilted_estimate(
    model, omega, t, functional, n_replicas, rng, level, *, variant="plain", cap=1_000_000
) -> TiltedEstimate:
    """Monte Carlo estimate of the tilted-measure mean of a spine functional.

    ``functional(snapshot, label)`` is averaged under the tilted measure.
    The plain variant sums the functional over particles with exponential
    weights; the sampled variant size-biases one particle and weights by the
    additive martingale (same estimand, different variance).
    """
    vals = np.empty(n_replicas)
    for r, stream in enumerate(rng.spawn(n_replicas)):
        pop = Population(model, level, stream, cap=cap)
        pop.advance(t)
        snap = pop.snapshot()
        w = additive(snap, model, omega, t, level=level)
        if variant == "plain":
            k = model.cumulant(omega, trunc=level)
            vals[r] = sum(
                functional(snap, lab) * math.exp(omega * z - t * k) for lab, _, z in snap
            )
        elif variant == "sampled":
            probs = np.array([math.exp(omega * z) for _, _, z in snap])
            pick = stream.choice(len(snap), p=probs / probs.sum())
            vals[r] = w * functional(snap, snap[pick][0])
        else:
            raise ValueError(f"unknown variant {variant!r}")
    mean, se = stats.mean_se(stats.SampleSet(vals))
    return TiltedEstimate(value=mean, std_error=se, n=n_replicas, omega=omega, t=t)


def many_to_one_check(
    model, omega, f, t, n_replicas, rng, level, *, closed_form=None, cap=1_000_000
):
    """Compare both sides of the population-to-spine reduction formula.

    Left: mean over plain replicas of the sum of f over particle positions.
    Right: the closed form when given, otherwise a Monte Carlo average of
    exp(t kappa(omega)) f(xi(t)) exp(-omega xi(t)) over tilted spine paths.
    """
    left = np.empty(n_replicas)
    streams = rng.spawn(2 * n_replicas)
    for r in range(n_replicas):
        pop = Population(model, level, streams[r], cap=cap)
        pop.advance(t)
        left[r] = sum(f(z) for _, _, z in pop.snapshot())
    lmean, lse = stats.mean_se(stats.SampleSet(left))

    if closed_form is not None:
        rmean, rse = float(closed_form), 0.0
    else:
        params = spine_process_params(model, omega, level)
        cutoff = model.ladder.threshold(model.ladder.max_index)
        scale = math.exp(t * model.cumulant(omega, trunc=level))
        right = np.empty(n_replicas)
        for r in range(n_replicas):
            xi = simulate_path(
                params, t, None, streams[n_replicas + r], small_jump_cutoff=cutoff
            ).terminal()
            right[r] = scale * f(xi) * math.exp(-omega * xi)
        rmean, rse = stats.mean_se(stats.SampleSet(right))

    denom = math.hypot(lse, rse)
    z = (lmean - rmean) / denom if denom > 0 else 0.0
    return {
        "left": {"estimate": lmean, "se": lse},
        "right": {"estimate": rmean, "se": rse, "closed_form": closed_form is not None},
        "z": z,
    }


def spine_law_check(
    model,
    omega,
    t,
    n_replicas,
    rng,
    level,
    *,
    center_perturb: float = 0.0,
    alpha: float = 0.01,
    cap: int = 1_000_000,
):
    """The forward/backward distributional panel.

    Six comparisons: a weighted two-sample KS on the spine position, z-tests
    on the means of (spine position, particle count, additive martingale,
    max position), and a KS on the offset of the best non-spine particle.
    ``center_perturb`` shifts the forward spine drift for power controls.
    """
    streams = rng.spawn(2 * n_replicas)
    b_pos, b_count, b_W, b_max, b_off, b_offw = [], [], [], [], [], []
    for r in range(n_replicas):
        stream = streams[r]
        pop = Population(model, level, stream, cap=cap)
        pop.advance(t)
        snap = pop.snapshot()
        w = additive(snap, model, omega, t, level=level)
        probs = np.array([math.exp(omega * z) for _, _, z in snap])
        pick = int(stream.choice(len(snap), p=probs / probs.sum()))
        zpick = snap[pick][2]
        b_pos.append(zpick)
        b_count.append(len(snap))
        b_W.append(w)
        b_max.append(max(z for _, _, z in snap))
        if len(snap) > 1:
            b_off.append(max(z for j, (_, _, z) in enumerate(snap) if j != pick) - zpick)
            b_offw.append(w)
    b_weights = np.array(b_W)

    f_pos, f_count, f_W, f_max, f_off = [], [], [], [], []
    for r in range(n_replicas):
        out = forward_decorated(
            model,
            omega,
            t,
            level,
            streams[n_replicas + r],
            cap=cap,
            center_perturb=center_perturb,
        )
        snap = out.population.snapshot()
        f_pos.append(out.spine_position)
        f_count.append(len(snap))
        f_W.append(additive(snap, model, omega, t, level=level))
        f_max.append(max(z for _, _, z in snap))
        if len(snap) > 1:
            others = [
                p.position
                for lab, p in out.population.particles.items()
                if lab != out.spine_label
            ]
            f_off.append(max(others) - out.spine_position)

    tests = []

    def ks_test(name, a, b):
        if len(a) < stats.MIN_EFFECTIVE_N or len(b) < stats.MIN_EFFECTIVE_N:
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
        stat, p = stats.ks_two_sample(a, b)
        tests.append(
            {"name": name, "statistic": stat, "p_value": p, "threshold": alpha, "pass": p > alpha}
        )

    def z_test(name, a, b):
        m1, s1 = stats.mean_se(a)
        m2, s2 = stats.mean_se(b)
        denom = math.hypot(s1, s2)
        z = (m1 - m2) / denom if denom > 0 else 0.0
        tests.append(
            {"name": name, "statistic": z, "p_value": None, "threshold": 3.0, "pass": abs(z) < 3.0}
        )

    ks_test(
        "ks_spine_position",
        stats.SampleSet(np.array(b_pos), b_weights),
        stats.SampleSet(np.array(f_pos)),
    )
    z_test("z_spine_position", stats.SampleSet(np.array(b_pos), b_weights), stats.SampleSet(np.array(f_pos)))
    z_test("z_count", stats.SampleSet(np.array(b_count, dtype=float), b_weights), stats.SampleSet(np.array(f_count, dtype=float)))
    z_test("z_additive", stats.SampleSet(np.array(b_W), b_weights), stats.SampleSet(np.array(f_W)))
    z_test("z_max_position", stats.SampleSet(np.array(b_max), b_weights), stats.SampleSet(np.array(f_max)))
    ks_test(
        "ks_nonspine_offset",
        stats.SampleSet(np.array(b_off), np.array(b_offw)),
        stats.SampleSet(np.array(f_off)),
    )
    return {"tests": tests, "n": n_replicas, "omega": omega, "t": t}
