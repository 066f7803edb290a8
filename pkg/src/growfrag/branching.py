"""Event-driven construction of the truncated labelled branching Levy process.

Each particle carries a spectrally negative Levy motion between its branch
events (exponent of one truncated particle); at a branch the parent jumps to
the position of the largest piece and keeps its label, while every other
surviving piece becomes a child labelled (level, k, sibling index).  The
event log retains enough information to replay the genealogy under a
coarser truncation, which is how nested truncations are checked pathwise.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .dislocation import DislocationModel, MassPartition, single_particle_params
from .errors import BarrierNotArmed, GrowfragError, PopulationCap
from .genealogy import EVE, Label, label_sort_key
from .levy import MotionSampler

DEFAULT_CAP = 1_000_000


@dataclass
class Particle:
    label: Label
    birth_time: float
    position: float
    clock: float
    k_counters: dict = field(default_factory=dict)
    branch_count: int = 0
    next_branch: float = math.inf
    barrier_max: float = -math.inf
    barrier_max_coarse: float = -math.inf


@dataclass(frozen=True)
class EventRecord:
    time: float
    parent: Label
    partition: MassPartition
    position_before: float


class Population:
    """Live truncated branching Levy process, confined to one worker."""

    def __init__(
        self,
        model: DislocationModel,
        level: int,
        rng,
        *,
        cap: int = DEFAULT_CAP,
        barrier_omega: float | None = None,
        monitor_mesh: float = 0.01,
        small_jump_cutoff: float | None = None,
        root_label: Label = EVE,
        root_position: float = 0.0,
        start_time: float = 0.0,
        root_counters: dict | None = None,
    ):
        self.model = model
        self.level = level
        self.rng = rng
        self.cap = cap
        self.time = start_time
        self.event_log: list[EventRecord] = []
        self.monitor_mesh = monitor_mesh
        self.barrier_omega = barrier_omega
        if barrier_omega is not None:
            self.barrier_kprime = model.cumulant_derivative(barrier_omega, trunc=level)
        else:
            self.barrier_kprime = None
        if small_jump_cutoff is None:
            small_jump_cutoff = model.ladder.threshold(model.ladder.max_index)
        self.small_jump_cutoff = small_jump_cutoff
        self.motion = MotionSampler(single_particle_params(model, level), small_jump_cutoff)
        self.branch_rate = model.branch_rate(level)
        self.particles: dict[Label, Particle] = {}
        self._heap: list = []
        self._seq = 0
        root = Particle(
            label=root_label,
            birth_time=start_time,
            position=root_position,
            clock=start_time,
            k_counters=dict(root_counters or {}),
        )
        if barrier_omega is not None:
            adj = root_position - self.barrier_kprime * start_time
            root.barrier_max = adj
            root.barrier_max_coarse = adj
        self._insert(root)

    # -- bookkeeping ---------------------------------------------------------

    def _insert(self, part: Particle):
        if part.label in self.particles:
            raise GrowfragError(f"duplicate label {part.label}")
        self.particles[part.label] = part
        if len(self.particles) > self.cap:
            raise PopulationCap(
                f"population exceeded cap {self.cap}", population=self, cap_time=self.time
            )
        if self.branch_rate > 0.0:
            part.next_branch = part.clock + self.rng.exponential(1.0 / self.branch_rate)
            heapq.heappush(self._heap, (part.next_branch, self._seq, part.label))
            self._seq += 1

    @property
    def size(self):
        return len(self.particles)

    def _monitor_points(self, t_from: float, t_to: float):
        """(time, on_coarse_mesh) pairs: multiples of the fine mesh in (t_from, t_to]
        plus the segment end.  The coarse mesh is every second fine point; event
        times and segment ends belong to both meshes, so the coarse monitor set
        is a subset of the fine one and the bias comparison is pathwise."""
        if self.barrier_omega is None:
            return ((t_to, True),)
        h = self.monitor_mesh
        first = math.floor(t_from / h) + 1
        pts = [(k * h, k % 2 == 0) for k in range(first, math.floor(t_to / h) + 1)]
        if not pts or pts[-1][0] < t_to:
            pts.append((t_to, True))
        else:
            pts[-1] = (pts[-1][0], True)
        return pts

    def _advance_particle(self, part: Particle, t_to: float):
        if t_to <= part.clock:
            return
        if self.motion.is_trivial and self.barrier_omega is None:
            part.clock = t_to
            return
        for t, coarse in self._monitor_points(part.clock, t_to):
            part.position += self.motion.increment(self.rng, t - part.clock)
            part.clock = t
            if self.barrier_omega is not None:
                adj = part.position - self.barrier_kprime * t
                if adj > part.barrier_max:
                    part.barrier_max = adj
                if coarse and adj > part.barrier_max_coarse:
                    part.barrier_max_coarse = adj

    # -- evolution -------------------------------------------------------------

    def advance(self, t_target: float):
        """Run the process up to t_target (events plus motion)."""
        if t_target < self.time:
            raise ValueError("cannot advance backwards")
        while self._heap and self._heap[0][0] <= t_target:
            t_event, _, label = heapq.heappop(self._heap)
            part = self.particles[label]
            self.time = t_event
            self._advance_particle(part, t_event)
            self._branch(part, t_event)
        for part in list(self.particles.values()):
            self._advance_particle(part, t_target)
        self.time = t_target
        return self

    def _branch(self, parent: Particle, t: float):
        delta = self.model.sample_branch_event(self.level, self.rng)
        pos_before = parent.position
        self.event_log.append(EventRecord(t, parent.label, delta, pos_before))
        parent.branch_count += 1
        self.spawn_children(parent, delta, t, pos_before)
        parent.position = pos_before + math.log(delta.entries[0])
        parent.next_branch = t + self.rng.exponential(1.0 / self.branch_rate)
        heapq.heappush(self._heap, (parent.next_branch, self._seq, parent.label))
        self._seq += 1

    def spawn_children(self, parent: Particle, delta: MassPartition, t: float, pos_before: float):
        """Create the children of a branch event (all entries of delta past the first)."""
        ladder = self.model.ladder
        classes: dict[int, list[float]] = {}
        for x in delta.entries[1:]:
            classes.setdefault(ladder.level_of(x), []).append(x)
        for m in sorted(classes):
            k = parent.k_counters.get(m, 0) + 1
            parent.k_counters[m] = k
            for i, x in enumerate(classes[m], start=1):
                child = Particle(
                    label=parent.label.child(m, k, i),
                    birth_time=t,
                    position=pos_before + math.log(x),
                    clock=t,
                )
                if self.barrier_omega is not None:
                    adj = child.position - self.barrier_kprime * t
                    child.barrier_max = max(parent.barrier_max, adj)
                    child.barrier_max_coarse = max(parent.barrier_max_coarse, adj)
                self._insert(child)

    # -- observation -------------------------------------------------------------

    def snapshot(self):
        """Deterministic view: (label, k_counters, position), position-major order."""
        rows = [
            (p.label, dict(p.k_counters), p.position) for p in self.particles.values()
        ]
        rows.sort(key=lambda r: (-r[2], label_sort_key(r[0])))
        return rows

    def positions(self):
        return [p.position for p in self.particles.values()]

    def barrier_flags(self, a: float):
        """Per-particle indicator that the drift-adjusted ancestral path stayed below a."""
        if self.barrier_omega is None:
            raise BarrierNotArmed("population was not armed with a barrier omega")
        return {lab: p.barrier_max < a for lab, p in self.particles.items()}


def truncate_view(pop: Population, m: int) -> "PopulationView":
    """Project a level-n population down to level m <= n."""
    if m > pop.level:
        raise ValueError("can only truncate to a coarser level")
    rows = []
    for lab, p in pop.particles.items():
        if lab.max_level <= m:
            masked = {l: c for l, c in p.k_counters.items() if l <= m}
            rows.append((lab, masked, p.position))
    rows.sort(key=lambda r: (-r[2], label_sort_key(r[0])))
    return PopulationView(time=pop.time, level=m, rows=rows)


@dataclass(frozen=True)
class PopulationView:
    time: float
    level: int
    rows: list

    def snapshot(self):
        return self.rows


def replay_view(pop: Population, m: int) -> PopulationView:
    """Rebuild the level-m genealogy from the event log alone.

    Labels and counters are recomputed from scratch with births above level m
    suppressed; positions are looked up from the particle store (truncation
    leaves them untouched).  Agreement with :func:`truncate_view` is the
    pathwise statement of truncation consistency.
    """
    ladder = pop.model.ladder
    root_label = min(pop.particles, key=lambda lab: len(lab.triples))
    counters: dict[Label, dict[int, int]] = {root_label: {}}
    for ev in pop.event_log:
        if ev.parent not in counters:
            continue  # parent itself was suppressed at level m
        ks = counters[ev.parent]
        classes: dict[int, list[float]] = {}
        for x in ev.partition.entries[1:]:
            lvl = ladder.level_of(x)
            if lvl <= m:
                classes.setdefault(lvl, []).append(x)
        for lvl in sorted(classes):
            k = ks.get(lvl, 0) + 1
            ks[lvl] = k
            for i, _ in enumerate(classes[lvl], start=1):
                counters[ev.parent.child(lvl, k, i)] = {}
    rows = [
        (lab, dict(ks), pop.particles[lab].position) for lab, ks in counters.items()
    ]
    rows.sort(key=lambda r: (-r[2], label_sort_key(r[0])))
    return PopulationView(time=pop.time, level=m, rows=rows)
