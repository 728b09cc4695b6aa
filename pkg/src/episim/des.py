"""Per-location discrete event simulation of one day.

Each visit becomes an arrival and a departure event. Events are ordered by
(time, kind, person, visit) with departures ahead of arrivals at equal times,
so visits that merely touch never overlap. The sweep keeps the susceptible
and infectious occupants in two lists; when someone leaves, every occupant of
the opposite list is a candidate contact, drawn with the location's contact
probability. A contact yields an exposure for the susceptible member with
duration T = departure time - later of the two arrivals.

Contact draws use the keyed stream (seed, CONTACT, day, location, low visit
id, high visit id), so the outcome for a pair is independent of the order in
which events, locations or partitions are processed. That is what lets the
all-pairs oracle below reproduce the sweep exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .models import ExposureRecord
from .rng import CONTACT, KeyedStream, as_seed, keyed_uniform, keyed_uniform_array

DEPARTURE = 0
ARRIVAL = 1

RECORD_DTYPE = np.dtype([
    ("target", np.int64),
    ("source", np.int64),
    ("location", np.int64),
    ("duration", np.float64),
    ("propensity", np.float64),
    ("source_arrival", np.int64),
    ("source_visit", np.int64),
    ("target_visit", np.int64),
])


@dataclass(frozen=True)
class VisitEvent:
    kind: int
    time: int
    person: int
    visit: int


@dataclass
class EventQueue:
    """Time-ordered events; ``visit`` indexes the visit arrays the queue was built from."""

    time: np.ndarray
    kind: np.ndarray
    visit: np.ndarray
    person: np.ndarray

    def __len__(self) -> int:
        return len(self.time)

    def events(self) -> list[VisitEvent]:
        return [VisitEvent(int(k), int(t), int(p), int(v))
                for t, k, v, p in zip(self.time, self.kind, self.visit, self.person)]


@dataclass
class LocationVisits:
    """The visits to one location on one day.

    ``visit_id`` are the population-wide visit ids used in contact keys;
    ``person`` indexes the snapshot arrays.
    """

    location: int
    visit_id: np.ndarray
    person: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def from_rows(cls, location: int, rows, first_visit_id: int = 0) -> "LocationVisits":
        """Rows of (person, start, end); visit ids numbered from ``first_visit_id``."""
        a = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        return cls(location, np.arange(first_visit_id, first_visit_id + len(a), dtype=np.int64),
                   a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy())

    def __len__(self) -> int:
        return len(self.visit_id)


@dataclass
class Snapshot:
    """Per-person state as seen by a location: role flags and effective multipliers.

    ``s_eff = beta_susceptibility * sigma(state)``, ``i_eff = beta_infectivity * iota(state)``.
    """

    susceptible: np.ndarray
    infectious: np.ndarray
    s_eff: np.ndarray
    i_eff: np.ndarray

    @classmethod
    def from_states(cls, model, states, beta_s=None, beta_i=None) -> "Snapshot":
        states = np.asarray(states)
        bs = np.ones(len(states)) if beta_s is None else np.asarray(beta_s, dtype=np.float64)
        bi = np.ones(len(states)) if beta_i is None else np.asarray(beta_i, dtype=np.float64)
        return cls(model.susceptible[states].copy(), model.infectious[states].copy(),
                   bs * model.sigma[states], bi * model.iota[states])

    @classmethod
    def from_roles(cls, roles: str, s_eff=None, i_eff=None) -> "Snapshot":
        """Shorthand for tests: one character per person, ``S``, ``I`` or ``-``."""
        sus = np.array([r == "S" for r in roles])
        inf = np.array([r == "I" for r in roles])
        s = sus.astype(np.float64) if s_eff is None else np.asarray(s_eff, dtype=np.float64)
        i = inf.astype(np.float64) if i_eff is None else np.asarray(i_eff, dtype=np.float64)
        return cls(sus, inf, s, i)


def build_event_queue(visits: LocationVisits) -> EventQueue:
    n = len(visits)
    time = np.concatenate([visits.start, visits.end]).astype(np.int64)
    kind = np.concatenate([np.full(n, ARRIVAL, np.int8), np.full(n, DEPARTURE, np.int8)])
    slot = np.concatenate([np.arange(n), np.arange(n)]).astype(np.int64)
    person = np.concatenate([visits.person, visits.person]).astype(np.int64)
    order = np.lexsort((visits.visit_id[slot] if n else slot, person, kind, time))
    return EventQueue(time[order], kind[order], slot[order], person[order])


def has_infectious_visitor(visits: LocationVisits, snapshot: Snapshot, active=None) -> bool:
    if len(visits) == 0:
        return False
    inf = snapshot.infectious[visits.person]
    if active is not None:
        inf = inf & np.asarray(active, dtype=bool)
    return bool(inf.any())


# -- the sweep -----------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def _sweep_location(ev_time, ev_kind, ev_slot, lo, hi,
                    slot_visit, slot_cache, slot_start, slot_active,
                    cache_sus, cache_inf, cache_seff, cache_ieff, cache_person,
                    c, tau, seed, day, loc_key,
                    out, n, cap, list_s, pos_s, list_i, pos_i):
    """Process events ``lo:hi`` of one location; returns (n_records_total, candidate_pairs).

    Slots are indices into the ``slot_*`` arrays; ``pos_*`` must be -1 for
    every slot touched (restored on exit). Records beyond ``cap`` are counted
    but not written.
    """
    ns = 0
    ni = 0
    edges = 0
    for e in range(lo, hi):
        slot = ev_slot[e]
        if not slot_active[slot]:
            continue
        ci = slot_cache[slot]
        if cache_sus[ci]:
            susceptible_side = True
        elif cache_inf[ci]:
            susceptible_side = False
        else:
            continue
        if ev_kind[e] == 1:
            if susceptible_side:
                list_s[ns] = slot
                pos_s[slot] = ns
                ns += 1
            else:
                list_i[ni] = slot
                pos_i[slot] = ni
                ni += 1
            continue
        # departure: remove, then scan the opposite list
        if susceptible_side:
            p = pos_s[slot]
            if p < 0:
                raise ValueError("departure without matching arrival")
            ns -= 1
            last = list_s[ns]
            list_s[p] = last
            pos_s[last] = p
            pos_s[slot] = -1
            others = list_i
            n_others = ni
        else:
            p = pos_i[slot]
            if p < 0:
                raise ValueError("departure without matching arrival")
            ni -= 1
            last = list_i[ni]
            list_i[p] = last
            pos_i[last] = p
            pos_i[slot] = -1
            others = list_s
            n_others = ns
        t = ev_time[e]
        v_self = slot_visit[slot]
        for k in range(n_others):
            other = others[k]
            edges += 1
            v_other = slot_visit[other]
            if v_self < v_other:
                u = keyed_uniform(seed, CONTACT, day, loc_key, v_self, v_other)
            else:
                u = keyed_uniform(seed, CONTACT, day, loc_key, v_other, v_self)
            if u >= c:
                continue
            if susceptible_side:
                tgt = slot
                src = other
            else:
                tgt = other
                src = slot
            a_t = slot_start[tgt]
            a_s = slot_start[src]
            duration = float(t - (a_t if a_t > a_s else a_s))
            if n < cap:
                out[n]["target"] = cache_person[slot_cache[tgt]]
                out[n]["source"] = cache_person[slot_cache[src]]
                out[n]["location"] = loc_key
                out[n]["duration"] = duration
                out[n]["propensity"] = duration * tau * cache_seff[slot_cache[tgt]] * cache_ieff[slot_cache[src]]
                out[n]["source_arrival"] = a_s
                out[n]["source_visit"] = slot_visit[src]
                out[n]["target_visit"] = slot_visit[tgt]
            n += 1
    if ns != 0 or ni != 0:
        raise ValueError("arrival without matching departure")
    return n, edges


def compute_exposures(queue: EventQueue, visits: LocationVisits, snapshot: Snapshot,
                      contact_prob: float, tau: float, stream: KeyedStream) -> list[ExposureRecord]:
    """Run the sweep for one location-day. ``stream`` is keyed (seed, CONTACT, day, location)."""
    records = compute_exposure_array(queue, visits, snapshot, contact_prob, tau, stream)
    return records_to_list(records)


def compute_exposure_array(queue, visits, snapshot, contact_prob, tau, stream, active=None):
    if stream.site != CONTACT or len(stream.prefix) != 2:
        raise ValueError("contact stream must be keyed (seed, CONTACT, day, location)")
    day, loc_key = stream.prefix
    n = len(visits)
    if len(queue) != 2 * n:
        raise ValueError("event queue does not hold one arrival and one departure per visit")
    slot_active = np.ones(n, bool) if active is None else np.asarray(active, dtype=bool)
    person = np.asarray(visits.person, dtype=np.int64)
    cap = 64
    while True:
        out = np.zeros(cap, dtype=RECORD_DTYPE)
        scratch = [np.zeros(n, np.int64), np.full(n, -1, np.int64), np.zeros(n, np.int64), np.full(n, -1, np.int64)]
        total, _ = _sweep_location(
            queue.time.astype(np.int64), queue.kind.astype(np.int8), queue.visit.astype(np.int64), 0, len(queue),
            visits.visit_id.astype(np.int64), person, visits.start.astype(np.int64), slot_active,
            snapshot.susceptible.astype(np.bool_), snapshot.infectious.astype(np.bool_),
            snapshot.s_eff.astype(np.float64), snapshot.i_eff.astype(np.float64),
            np.arange(len(snapshot.susceptible), dtype=np.int64),
            float(contact_prob), float(tau), stream.seed, int(day), int(loc_key),
            out, 0, cap, *scratch)
        if total <= cap:
            return out[:total]
        cap = total


def records_to_list(records: np.ndarray) -> list[ExposureRecord]:
    return [ExposureRecord(int(r["target"]), int(r["source"]), float(r["duration"]),
                           float(r["propensity"]), int(r["location"]), int(r["source_arrival"]),
                           int(r["source_visit"]), int(r["target_visit"])) for r in records]


def exposures_brute_force(visits: LocationVisits, snapshot: Snapshot, contact_prob: float,
                          tau: float, stream: KeyedStream, active=None) -> list[ExposureRecord]:
    """All-pairs reference: every (susceptible, infectious) visit pair with positive overlap."""
    return records_to_list(exposures_brute_force_array(visits, snapshot, contact_prob, tau, stream, active))


def exposures_brute_force_array(visits, snapshot, contact_prob, tau, stream, active=None) -> np.ndarray:
    if len(visits) > 10_000:
        raise ValueError("brute-force oracle is limited to 10^4 visits")
    day, loc_key = stream.prefix
    person = np.asarray(visits.person)
    keep = np.ones(len(visits), bool) if active is None else np.asarray(active, dtype=bool)
    s_idx = np.flatnonzero(keep & snapshot.susceptible[person])
    i_idx = np.flatnonzero(keep & snapshot.infectious[person])
    if not len(s_idx) or not len(i_idx):
        return np.zeros(0, dtype=RECORD_DTYPE)
    S, I = np.meshgrid(s_idx, i_idx, indexing="ij")
    S, I = S.ravel(), I.ravel()
    start, end = np.asarray(visits.start, np.int64), np.asarray(visits.end, np.int64)
    overlap = np.minimum(end[S], end[I]) - np.maximum(start[S], start[I])
    pos = overlap > 0
    S, I, overlap = S[pos], I[pos], overlap[pos]
    vs, vi = visits.visit_id[S].astype(np.int64), visits.visit_id[I].astype(np.int64)
    u = keyed_uniform_array(int(stream.seed), CONTACT, day, loc_key, np.minimum(vs, vi), np.maximum(vs, vi))
    hit = u < contact_prob
    S, I, overlap = S[hit], I[hit], overlap[hit].astype(np.float64)
    out = np.zeros(len(S), dtype=RECORD_DTYPE)
    out["target"] = person[S]
    out["source"] = person[I]
    out["location"] = loc_key
    out["duration"] = overlap
    out["propensity"] = overlap * tau * snapshot.s_eff[person[S]] * snapshot.i_eff[person[I]]
    out["source_arrival"] = start[I]
    out["source_visit"] = visits.visit_id[I]
    out["target_visit"] = visits.visit_id[S]
    return out


def canonical(records: np.ndarray) -> np.ndarray:
    """Records sorted by every field, for exact multiset comparison."""
    order = np.lexsort(tuple(records[f] for f in reversed(RECORD_DTYPE.names)))
    return records[order]


# -- batched sweep used by the engine ---------------------------------------------

@nb.njit(cache=True, nogil=True)
def sweep_partition(locations, block_lo, block_hi, ev_time, ev_kind, ev_slot,
                    visit_ids, visit_start, visit_cache, visit_active,
                    cache_sus, cache_inf, cache_seff, cache_ieff, cache_person,
                    contact_prob, tau, seed, day, short_circuit, out, cap, max_block):
    """Sweep every listed location; returns (records, locations evaluated, candidate pairs).

    ``block_lo[k]:block_hi[k]`` is the visit-id range of ``locations[k]`` for
    the day. Its events live at ``ev_*[2*lo:2*hi]`` with ``ev_slot`` relative
    to ``lo``.
    """
    n = 0
    edges = 0
    evaluated = 0
    list_s = np.zeros(max_block, np.int64)
    pos_s = np.full(max_block, -1, np.int64)
    list_i = np.zeros(max_block, np.int64)
    pos_i = np.full(max_block, -1, np.int64)
    for k in range(len(locations)):
        lo = block_lo[k]
        hi = block_hi[k]
        if hi <= lo:
            continue
        if short_circuit:
            any_inf = False
            for v in range(lo, hi):
                if visit_active[v] and cache_inf[visit_cache[v]]:
                    any_inf = True
                    break
            if not any_inf:
                continue
        evaluated += 1
        loc = locations[k]
        n, e = _sweep_location(ev_time, ev_kind, ev_slot, 2 * lo, 2 * hi,
                               visit_ids[lo:hi], visit_cache[lo:hi], visit_start[lo:hi], visit_active[lo:hi],
                               cache_sus, cache_inf, cache_seff, cache_ieff, cache_person,
                               contact_prob[loc], tau, seed, day, loc,
                               out, n, cap, list_s, pos_s, list_i, pos_i)
        edges += e
    return n, evaluated, edges
