"""Daily three-phase loop over person and location partitions.

Each simulated day runs

1. PSC (person state communication): person partitions send the changed
   (state, effective susceptibility, effective infectivity) of their people
   to the location partitions those people visit; location partitions store
   them in their visitor cache.
2. ECC (exposure computation and communication): every location partition
   sweeps its locations' events for the weekday and streams exposure records
   to the owning person partitions, then posts a completion token.
3. PSU (person state update): once all tokens are in, person partitions sum
   each susceptible person's propensities, draw infections, advance dwell
   timers; seeding is applied and the day's counts are reduced.

Intervention triggers are evaluated after PSU; their effects apply from the
next day.

All randomness is keyed (see :mod:`episim.rng`) and propensities are summed in
a fixed record order, so the stats series is identical for any thread count,
partition count, and for both PSC modes and short-circuit settings.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from . import rng as keyed
from .des import RECORD_DTYPE, sweep_partition
from .disease import DiseaseModel, entry_states
from .interventions import Entities, InterventionManager, InterventionSpec
from .models import ContactModelParams, TransmissionParams, contact_probabilities, segment_sums
from .partitioner import PartitionMap, partition_population
from .population import DAYS_PER_WEEK, Population, visit_events

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeedingSchedule:
    per_day: int = 2
    day_from: int = 1
    day_to: int = 10

    def __post_init__(self):
        if self.per_day < 0 or self.day_from > self.day_to + 1:
            raise ValueError("seeding needs per_day >= 0 and day_from <= day_to")

    @classmethod
    def parse(cls, text: str) -> "SeedingSchedule":
        """``count,day_from,day_to``."""
        try:
            count, lo, hi = (int(x) for x in text.split(","))
        except ValueError:
            raise ValueError(f"bad seeding {text!r}; use count,day_from,day_to") from None
        return cls(count, lo, hi)


@dataclass
class RunConfig:
    days: int
    seed: int = 0
    partitions: int = 1
    threads: int = 1
    seeding: SeedingSchedule = field(default_factory=SeedingSchedule)
    contact: ContactModelParams = field(default_factory=ContactModelParams)
    transmission: TransmissionParams = field(default_factory=TransmissionParams)
    interventions: Sequence[InterventionSpec] = ()
    short_circuit: bool = True
    psc_mode: str = "delta"

    def __post_init__(self):
        if self.days < 0:
            raise ValueError("days must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")
        if self.psc_mode not in ("delta", "full"):
            raise ValueError("psc_mode must be 'delta' or 'full'")


@dataclass
class DayStats:
    day: int
    state_counts: tuple[int, ...]
    new_infections: int
    seeded: int
    cumulative_infections: int
    infectious: int
    exposures: int
    traversed_edges: int
    locations_evaluated: int
    psc_messages: int
    t_psc: float = 0.0
    t_ecc: float = 0.0
    t_psu: float = 0.0


# -- PSC kernels --------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def pack_updates(people, person_offsets, person_slots, cache_partition, num_partitions,
                 states, beta_s, beta_i, sigma, iota):
    """Messages (slot, state, s_eff, i_eff) for ``people``, grouped by destination.

    ``s_eff = beta_s * sigma[state]`` and ``i_eff = beta_i * iota[state]``. Returns the message arrays and ``bounds`` such that messages for location
    partition j occupy ``bounds[j]:bounds[j+1]``; within a destination they
    keep the order of ``people``.
    """
    bounds = np.zeros(num_partitions + 1, dtype=np.int64)
    for p in people:
        for k in range(person_offsets[p], person_offsets[p + 1]):
            bounds[cache_partition[person_slots[k]] + 1] += 1
    for j in range(num_partitions):
        bounds[j + 1] += bounds[j]
    total = bounds[num_partitions]
    slots = np.empty(total, dtype=np.int64)
    st = np.empty(total, dtype=np.int32)
    se = np.empty(total, dtype=np.float64)
    ie = np.empty(total, dtype=np.float64)
    fill = bounds[:-1].copy()
    for p in people:
        x = states[p]
        s_eff = beta_s[p] * sigma[x]
        i_eff = beta_i[p] * iota[x]
        for k in range(person_offsets[p], person_offsets[p + 1]):
            slot = person_slots[k]
            j = cache_partition[slot]
            at = fill[j]
            slots[at] = slot
            st[at] = x
            se[at] = s_eff
            ie[at] = i_eff
            fill[j] = at + 1
    return slots, st, se, ie, bounds


@nb.njit(cache=True, nogil=True)
def apply_updates(slots, st, se, ie, lo, hi, model_sus, model_inf,
                  cache_state, cache_sus, cache_inf, cache_seff, cache_ieff):
    """Store messages ``lo[s]:hi[s]`` (one range per sender) into the cache."""
    count = 0
    for r in range(len(lo)):
        for k in range(lo[r], hi[r]):
            slot = slots[k]
            x = st[k]
            cache_state[slot] = x
            cache_sus[slot] = model_sus[x]
            cache_inf[slot] = model_inf[x]
            cache_seff[slot] = se[k]
            cache_ieff[slot] = ie[k]
        count += hi[r] - lo[r]
    return count


# -- visitor sets -----------------------------------------------------------------

class VisitorIndex:
    """Who visits which location partition, and where they sit in its cache.

    Cache entries are (location partition, person) pairs, sorted; partition j
    owns the contiguous range ``cache_offsets[j]:cache_offsets[j+1]``.
    """

    def __init__(self, pop: Population, pmap: PartitionMap):
        n = pop.num_people
        P = pmap.num_partitions
        vpart = pmap.location_to_partition[pop.visit_location].astype(np.int64)
        key = vpart * max(n, 1) + pop.visit_person
        pairs = np.unique(key)
        self.cache_partition = (pairs // max(n, 1)).astype(np.int64)
        self.cache_person = (pairs % max(n, 1)).astype(np.int64)
        self.cache_offsets = np.searchsorted(self.cache_partition, np.arange(P + 1))
        self.visit_cache = np.searchsorted(pairs, key).astype(np.int64)
        by_person = np.argsort(self.cache_person, kind="stable")
        self.person_slots = by_person
        self.person_offsets = np.searchsorted(self.cache_person[by_person], np.arange(n + 1))
        self.num_partitions = P
        self._person_partition = pmap.person_to_partition

    def __len__(self) -> int:
        return len(self.cache_person)

    def slots_of(self, people: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cache slots of ``people`` and, aligned, the person each slot belongs to."""
        people = np.asarray(people, dtype=np.int64)
        lo, hi = self.person_offsets[people], self.person_offsets[people + 1]
        lens = hi - lo
        total = int(lens.sum())
        if total == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        base = np.repeat(lo - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
        slots = self.person_slots[base + np.arange(total)]
        return slots, np.repeat(people, lens)

    def sets(self) -> dict[tuple[int, int], np.ndarray]:
        """V[i, j]: people of person partition i visiting location partition j."""
        out: dict[tuple[int, int], np.ndarray] = {}
        ipart = self._person_partition[self.cache_person]
        for i in range(self.num_partitions):
            for j in range(self.num_partitions):
                lo, hi = self.cache_offsets[j], self.cache_offsets[j + 1]
                sel = self.cache_person[lo:hi][ipart[lo:hi] == i]
                if len(sel):
                    out[(i, j)] = sel
        return out


def precompute_visitor_sets(pop: Population, pmap: PartitionMap) -> dict[tuple[int, int], np.ndarray]:
    return VisitorIndex(pop, pmap).sets()


def build_global_events(pop: Population):
    """Events of every visit, grouped by (weekday, location) block.

    Returns ``(time, kind, slot)`` where block [lo, hi) of visit ids owns
    events ``[2*lo, 2*hi)`` and ``slot`` is relative to ``lo``.
    """
    return visit_events(pop)


# -- the engine -------------------------------------------------------------------

class Simulation:
    def __init__(self, pop: Population, model: DiseaseModel, config: RunConfig,
                 partition_map: PartitionMap | None = None):
        self.pop = pop
        self.model = model
        self.config = config
        self.seed = keyed.as_seed(config.seed)
        t0 = time.perf_counter()
        self.pmap = partition_map or partition_population(pop, config.partitions)
        P = self.pmap.num_partitions
        self.P = P
        self.contact_prob = contact_probabilities(pop.max_occupancy, config.contact)
        pop.contact_probability[:] = self.contact_prob

        self.index = VisitorIndex(pop, self.pmap)
        nc = len(self.index)
        self.cache_state = np.full(nc, -1, dtype=np.int32)
        self.cache_sus = np.zeros(nc, dtype=np.bool_)
        self.cache_inf = np.zeros(nc, dtype=np.bool_)
        self.cache_seff = np.zeros(nc)
        self.cache_ieff = np.zeros(nc)
        self.cache_person = self.index.cache_person

        self.ev_time, self.ev_kind, self.ev_slot = build_global_events(pop)
        self.visit_ids = np.arange(pop.num_visits, dtype=np.int64)
        self.visit_start = pop.visit_start.astype(np.int64)
        self.people_of = [self.pmap.people_of(i) for i in range(P)]
        self._day_lists = self._location_lists()
        self._buffers = [np.zeros(1024, dtype=RECORD_DTYPE) for _ in range(P)]

        n = pop.num_people
        self.states = entry_states(model, pop.person_columns(), n)
        self.next_state = np.full(n, -1, dtype=np.int32)
        self.days_left = np.zeros(n, dtype=np.int32)
        self._enter(np.arange(n), self.states.copy(), day=0)
        self._changed: list[list[np.ndarray]] = [[] for _ in range(self.P)]  # per person partition
        self._cold = True  # empty caches: everyone goes out on day 1

        self.entities = Entities(pop, self.states, model.state_names, config.seed)
        self.interventions = InterventionManager(config.interventions, self.entities)
        self._visit_active = self.entities.visit_active
        self._suppressed_version = 0

        self.cumulative = 0
        self.infection_log: list[tuple[int, int, str]] = []  # (day, person index, "exposure"|"seed")
        self.inbox: list[list[np.ndarray]] = []
        self.tokens: list[bool] = []
        self._pool: ThreadPoolExecutor | None = None
        self._warm_kernels()
        self.setup_seconds = time.perf_counter() - t0

    # -- setup helpers ----------------------------------------------------------

    def _location_lists(self):
        """Per (partition, weekday): locations with visits and their visit blocks."""
        m = self.pop.num_locations
        off = self.pop.visit_offsets
        lists = []
        for j in range(self.P):
            locs = self.pmap.locations_of(j).astype(np.int64)
            per_day = []
            for d in range(DAYS_PER_WEEK):
                lo = off[d * m + locs]
                hi = off[d * m + locs + 1]
                keep = hi > lo
                size = int((hi - lo)[keep].max()) if keep.any() else 0
                per_day.append((locs[keep], lo[keep].astype(np.int64), hi[keep].astype(np.int64), size))
            lists.append(per_day)
        return lists

    def _warm_kernels(self) -> None:
        """Load the compiled kernels now so day 1 timings exclude dispatch setup."""
        idx = self.index
        none = np.zeros(0, np.int64)
        msg = pack_updates(none, idx.person_offsets, idx.person_slots, idx.cache_partition, self.P,
                           self.states, self.entities.beta_s, self.entities.beta_i,
                           self.model.sigma, self.model.iota)
        apply_updates(*msg[:4], msg[4][:1], msg[4][:1], self.model.susceptible, self.model.infectious,
                      self.cache_state, self.cache_sus, self.cache_inf, self.cache_seff, self.cache_ieff)
        sweep_partition(none, none, none, self.ev_time, self.ev_kind, self.ev_slot, self.visit_ids,
                        self.visit_start, idx.visit_cache, self._visit_active, self.cache_sus,
                        self.cache_inf, self.cache_seff, self.cache_ieff, self.cache_person,
                        self.contact_prob, self.config.transmission.tau, self.seed, 1,
                        self.config.short_circuit, self._buffers[0], len(self._buffers[0]), 1)
        segment_sums(np.zeros(0), np.zeros(1, np.int64))

    def _map(self, fn: Callable[[int], object], count: int) -> list:
        if self.config.threads == 1 or count == 1:
            return [fn(k) for k in range(count)]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.config.threads)
        return list(self._pool.map(fn, range(count)))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    # -- health state -------------------------------------------------------------

    def _enter(self, people: np.ndarray, new_states: np.ndarray, day: int) -> None:
        """Move ``people`` into ``new_states`` and schedule their next transition."""
        if not len(people):
            return
        self.states[people] = new_states
        timed = self.model.has_transitions[new_states]
        p = people[timed]
        if len(p):
            u1 = keyed.keyed_uniform_array(self.seed, keyed.TRANSITION, day, p)
            u2 = keyed.keyed_uniform_array(self.seed, keyed.DWELL, day, p)
            nxt, dwell = self.model.draw_transitions(new_states[timed], u1, u2)
            self.next_state[p] = nxt
            self.days_left[p] = dwell
        q = people[~timed]
        self.next_state[q] = -1
        self.days_left[q] = 0

    # -- phases ---------------------------------------------------------------------

    def phase_psc(self, day: int) -> int:
        """Push changed person data into location caches; returns messages sent."""
        full = self.config.psc_mode == "full" or self._cold
        model = self.model
        beta_s, beta_i = self.entities.beta_s, self.entities.beta_i
        idx = self.index

        def send(i: int):
            if full:
                people = self.people_of[i]
            elif self._changed[i]:
                people = np.unique(np.concatenate(self._changed[i]))
            else:
                people = np.zeros(0, np.int64)
            return pack_updates(people, idx.person_offsets, idx.person_slots, idx.cache_partition,
                                self.P, self.states, beta_s, beta_i, model.sigma, model.iota)

        outboxes = self._map(send, self.P)
        # the "network": sender i's messages for j sit at base[i] + bounds_i[j]
        wire = [np.concatenate([box[k] for box in outboxes]) for k in range(4)]
        base = np.cumsum([0] + [len(box[0]) for box in outboxes[:-1]])
        bounds = np.stack([box[4] for box in outboxes]) + base[:, None]

        def receive(j: int) -> int:
            return apply_updates(*wire, bounds[:, j], bounds[:, j + 1],
                                 model.susceptible, model.infectious, self.cache_state,
                                 self.cache_sus, self.cache_inf, self.cache_seff, self.cache_ieff)

        sent = sum(self._map(receive, self.P))
        self._changed = [[] for _ in range(self.P)]
        self._cold = False
        return sent

    def phase_ecc(self, day: int) -> tuple[int, int, int]:
        """Run the DES on every location; returns (records, locations evaluated, edges)."""
        dow = (day - 1) % DAYS_PER_WEEK
        if self.entities.suppression_version != self._suppressed_version:
            self._visit_active = self.entities.visit_active
            self._suppressed_version = self.entities.suppression_version
        P = self.P
        self.inbox = [[None] * P for _ in range(P)]
        self.tokens = [False] * P
        tau = self.config.transmission.tau

        def sweep(j: int):
            locs, lo, hi, size = self._day_lists[j][dow]
            while True:
                buf = self._buffers[j]
                n, evaluated, edges = sweep_partition(
                    locs, lo, hi, self.ev_time, self.ev_kind, self.ev_slot,
                    self.visit_ids, self.visit_start, self.index.visit_cache, self._visit_active,
                    self.cache_sus, self.cache_inf, self.cache_seff, self.cache_ieff, self.cache_person,
                    self.contact_prob, tau, self.seed, day, self.config.short_circuit,
                    buf, len(buf), max(size, 1))
                if n <= len(buf):
                    break
                self._buffers[j] = np.zeros(max(n, 2 * len(buf)), dtype=RECORD_DTYPE)
            dest = self.pmap.person_to_partition[buf["target"][:n]]
            order = np.argsort(dest, kind="stable")
            records = buf[:n][order]
            cut = np.searchsorted(dest[order], np.arange(P + 1))
            for i in range(P):
                self.inbox[i][j] = records[cut[i]:cut[i + 1]]
            self.tokens[j] = True  # completion token
            return n, evaluated, edges

        results = self._map(sweep, P)
        return tuple(int(sum(r[k] for r in results)) for k in range(3))

    def phase_psu(self, day: int) -> tuple[int, int]:
        """Infections and timed transitions; returns (new infections, seeded)."""
        if not all(self.tokens):
            raise RuntimeError("PSU started before every location partition finished ECC")
        model = self.model

        def update(i: int):
            recs = np.concatenate(self.inbox[i]) if self.P else np.zeros(0, RECORD_DTYPE)
            infected = np.zeros(0, np.int64)
            if len(recs):
                order = np.lexsort((recs["target_visit"], recs["source_visit"], recs["location"],
                                    recs["source_arrival"], recs["source"], recs["target"]))
                recs = recs[order]
                targets, starts = np.unique(recs["target"], return_index=True)
                starts = np.append(starts, len(recs))
                total = segment_sums(recs["propensity"], starts)
                u = keyed.keyed_uniform_array(self.seed, keyed.INFECTION, day, targets)
                hit = (u < -np.expm1(-total)) & model.susceptible[self.states[targets]]
                infected = targets[hit]
            people = self.people_of[i]
            timed = people[self.days_left[people] > 0]
            if len(infected):
                timed = timed[~np.isin(timed, infected)]
            self.days_left[timed] -= 1
            fire = timed[self.days_left[timed] == 0]
            self._enter(infected, model.infection_target[self.states[infected]], day)
            self._enter(fire, self.next_state[fire], day)
            self._changed[i] += [infected, fire]
            return infected

        results = self._map(update, self.P)
        infected = np.sort(np.concatenate(results))
        seeds = self._seed(day)
        for p in infected.tolist():
            self.infection_log.append((day, p, "exposure"))
        for p in seeds.tolist():
            self.infection_log.append((day, p, "seed"))
        return len(infected), len(seeds)

    def _seed(self, day: int) -> np.ndarray:
        s = self.config.seeding
        if not (s.day_from <= day <= s.day_to) or s.per_day == 0:
            return np.zeros(0, np.int64)
        cand = np.flatnonzero(self.model.susceptible[self.states])
        k = min(s.per_day, len(cand))
        # partial Fisher-Yates with keyed draws: uniform without replacement
        u = keyed.keyed_uniform_array(self.seed, keyed.SEEDING, day, np.arange(k))
        cand = cand.copy()
        for t in range(k):
            r = t + min(int(u[t] * (len(cand) - t)), len(cand) - t - 1)
            cand[t], cand[r] = cand[r], cand[t]
        chosen = np.sort(cand[:k])
        self._enter(chosen, self.model.infection_target[self.states[chosen]], day)
        self._mark_changed(chosen)
        return chosen

    def _mark_changed(self, people: np.ndarray) -> None:
        part = self.pmap.person_to_partition[people]
        for i in np.unique(part):
            self._changed[i].append(people[part == i])

    # -- driver -----------------------------------------------------------------------

    def step(self, day: int) -> DayStats:
        t0 = time.perf_counter()
        messages = self.phase_psc(day)
        t1 = time.perf_counter()
        exposures, evaluated, edges = self.phase_ecc(day)
        t2 = time.perf_counter()
        new_inf, seeded = self.phase_psu(day)
        counts = np.bincount(self.states, minlength=len(self.model))
        infectious = int(counts[self.model.infectious].sum())
        t3 = time.perf_counter()
        self.cumulative += new_inf + seeded
        self.interventions.end_of_day(day, infectious)
        if self.entities.changed_people:
            self._mark_changed(np.fromiter(self.entities.changed_people, dtype=np.int64))
            self.entities.changed_people.clear()
        return DayStats(day, tuple(int(c) for c in counts), new_inf + seeded, seeded, self.cumulative,
                        infectious, exposures, edges, evaluated, messages, t1 - t0, t2 - t1, t3 - t2)

    def run(self, sink: Callable[[DayStats], None] | None = None) -> list[DayStats]:
        stats = []
        try:
            for day in range(1, self.config.days + 1):
                s = self.step(day)
                stats.append(s)
                if sink is not None:
                    sink(s)
                log.debug("day %d: %d new infections, %d exposures", day, s.new_infections, s.exposures)
        finally:
            self.close()
        return stats


def run(pop: Population, model: DiseaseModel, config: RunConfig,
        sink: Callable[[DayStats], None] | None = None) -> list[DayStats]:
    """Build a :class:`Simulation` and run it for ``config.days`` days."""
    if config.days == 0:
        return []
    return Simulation(pop, model, config).run(sink)


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
