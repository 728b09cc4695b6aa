import numpy as np
import pytest

from episim import rng as keyed
from episim.des import (
    LocationVisits, Snapshot, build_event_queue, canonical, compute_exposure_array,
)
from episim.disease import parse_disease_model
from episim.engine import (
    RunConfig, SeedingSchedule, Simulation, VisitorIndex, precompute_visitor_sets, run,
)
from episim.models import ContactModelParams, TransmissionParams
from episim.partitioner import PartitionMap
from episim.population import Population, compute_max_occupancy, population_from_visits

SI = {"name": "SI", "exposed_state": "I", "entry": [{"state": "S"}],
      "states": [{"name": "S", "susceptibility": 1.0}, {"name": "I", "infectivity": 1.0}]}


def _stats_key(stats):
    return [(s.day, s.state_counts, s.new_infections, s.seeded, s.cumulative_infections, s.infectious,
             s.exposures, s.traversed_edges) for s in stats]


def _pmap(loc_part, person_part):
    loc_part, person_part = np.asarray(loc_part), np.asarray(person_part)
    P = int(max(loc_part.max(), person_part.max())) + 1
    return PartitionMap(loc_part, person_part, np.zeros(P), P)


def test_visitor_sets_small_cases():
    pop = population_from_visits([(0, 2, 0, 0, 10), (1, 0, 1, 0, 10)], 3, 3)
    pm = _pmap([0, 1, 2], [0, 1, 0])
    sets = precompute_visitor_sets(pop, pm)
    assert {k: list(v) for k, v in sets.items()} == {(0, 2): [0], (1, 0): [1]}
    assert all(2 not in v for v in sets.values())  # person without visits


def test_visitor_sets_brute_force(rng):
    rows = [(int(rng.integers(0, 40)), int(rng.integers(0, 12)), int(rng.integers(0, 7)), 0, 10)
            for _ in range(150)]
    pop = population_from_visits(rows, 40, 12)
    pm = _pmap(rng.integers(0, 2, 12), rng.integers(0, 2, 40))
    sets = precompute_visitor_sets(pop, pm)
    for i in range(2):
        for j in range(2):
            want = sorted({p for p, l, *_ in rows if pm.person_to_partition[p] == i and pm.location_to_partition[l] == j})
            assert list(sets.get((i, j), [])) == want


def test_slots_of_matches_cache():
    pop = population_from_visits([(0, 0, 0, 0, 10), (0, 1, 0, 0, 10), (1, 1, 2, 5, 9)], 3, 2)
    idx = VisitorIndex(pop, _pmap([0, 1], [0, 0, 1]))
    slots, who = idx.slots_of(np.array([0, 1, 2]))
    assert list(who) == [0, 0, 1]
    assert list(idx.cache_person[slots]) == [0, 0, 1]
    assert list(idx.cache_person[idx.visit_cache]) == list(pop.visit_person)


def test_zero_days(pop10k, seir):
    assert run(pop10k, seir, RunConfig(days=0)) == []
    with pytest.raises(ValueError):
        RunConfig(days=-1)
    with pytest.raises(ValueError):
        RunConfig(days=1, threads=0)


def test_conservation_and_monotone(pop10k, seir):
    stats = run(pop10k, seir, RunConfig(days=40, seed=4, partitions=3, threads=2))
    prev = 0
    for s in stats:
        assert sum(s.state_counts) == pop10k.num_people
        assert s.cumulative_infections >= prev
        prev = s.cumulative_infections
    assert [s.day for s in stats] == list(range(1, 41))


def test_thread_and_partition_invariance(pop10k, seir):
    ref = _stats_key(run(pop10k, seir, RunConfig(days=15, seed=9)))
    for P, T in [(2, 2), (5, 8), (16, 3)]:
        assert _stats_key(run(pop10k, seir, RunConfig(days=15, seed=9, partitions=P, threads=T))) == ref


def test_optimisations_are_exact(pop10k, seir):
    ref = run(pop10k, seir, RunConfig(days=15, seed=2, partitions=4))
    full = run(pop10k, seir, RunConfig(days=15, seed=2, partitions=4, psc_mode="full"))
    nosc = run(pop10k, seir, RunConfig(days=15, seed=2, partitions=4, short_circuit=False))
    assert _stats_key(ref) == _stats_key(full) == _stats_key(nosc)
    assert all(a.locations_evaluated < b.locations_evaluated for a, b in zip(ref, nosc))


def test_psc_messages(pop10k, seir):
    cfg = RunConfig(days=3, seed=0, seeding=SeedingSchedule(0, 1, 0))
    stats = Simulation(pop10k, seir, cfg).run()
    visitors = len(np.unique(pop10k.visit_person))
    assert stats[0].psc_messages == visitors  # day 1: everyone who visits anything
    assert stats[1].psc_messages == 0 and stats[2].psc_messages == 0
    assert all(s.exposures == 0 and s.locations_evaluated == 0 for s in stats)
    assert stats[1].state_counts == stats[0].state_counts


def test_psc_updates_only_changed_caches():
    pop = population_from_visits([(0, 1, 0, 0, 10), (0, 3, 0, 0, 10), (1, 2, 0, 0, 10)], 2, 4)
    model = parse_disease_model(SI)
    sim = Simulation(pop, model, RunConfig(days=1, seeding=SeedingSchedule(0, 1, 0)),
                     partition_map=_pmap([0, 1, 2, 3], [0, 0]))
    sim.phase_psc(1)
    sim._enter(np.array([0]), np.array([1], np.int32), 1)
    sim._mark_changed(np.array([0]))
    before = sim.cache_state.copy()
    assert sim.phase_psc(2) == 2
    changed = np.flatnonzero(sim.cache_state != before)
    assert sorted(sim.index.cache_partition[changed]) == [1, 3]


def test_ecc_matches_direct_des_call():
    rows = [(0, 0, 0, 0, 1000), (1, 0, 0, 200, 900), (2, 0, 0, 500, 2000), (3, 0, 0, 950, 1200)]
    pop = population_from_visits(rows, 4, 1)
    compute_max_occupancy(pop)
    model = parse_disease_model({**SI, "entry": [{"when": "age == 1", "state": "I"}, {"state": "S"}]})
    pop_i = Population(pop.person_ids, np.array([1, 0, 0, 0]), pop.home, pop.location_ids, pop.geo,
                       pop.visit_person, pop.visit_location, pop.visit_dow, pop.visit_start, pop.visit_end)
    compute_max_occupancy(pop_i)
    cfg = RunConfig(days=1, seed=3, seeding=SeedingSchedule(0, 1, 0),
                    contact=ContactModelParams(mode="global", probability=0.8))
    sim = Simulation(pop_i, model, cfg)
    sim.phase_psc(1)
    sim.phase_ecc(1)
    got = np.concatenate([r for row in sim.inbox for r in row])
    visits = LocationVisits(0, np.arange(4), pop_i.visit_person.astype(np.int64),
                            pop_i.visit_start.astype(np.int64), pop_i.visit_end.astype(np.int64))
    snap = Snapshot.from_states(model, sim.states)
    want = compute_exposure_array(build_event_queue(visits), visits, snap, 0.8, 0.05,
                                  keyed.KeyedStream(3, keyed.CONTACT, 1, 0))
    assert len(want) > 0
    assert np.array_equal(canonical(got), canonical(want))


def test_two_locations_one_inbox():
    rows = [(0, 0, 0, 0, 100), (1, 0, 0, 0, 100), (0, 1, 0, 200, 300), (2, 1, 0, 200, 300)]
    pop = Population(np.arange(3), np.array([0, 1, 1]), np.array([0, 0, 0]), np.arange(2),
                     np.zeros((2, 4), np.int64), *(np.array(c) for c in zip(*rows)))
    compute_max_occupancy(pop)
    model = parse_disease_model({**SI, "entry": [{"when": "age == 1", "state": "I"}, {"state": "S"}]})
    sim = Simulation(pop, model, RunConfig(days=1, seeding=SeedingSchedule(0, 1, 0)),
                     partition_map=_pmap([0, 1], [1, 0, 0]))
    sim.phase_psc(1)
    sim.phase_ecc(1)
    inbox = np.concatenate(sim.inbox[1])
    assert sorted(inbox["location"].tolist()) == [0, 1]
    assert set(inbox["target"].tolist()) == {0}


def test_certain_infection_at_high_propensity():
    # one hour together at tau 0.05: rho = 180, infection probability 1 - e^-180
    pop = Population(np.arange(2), np.array([1, 0]), np.zeros(2, np.int64), np.arange(1),
                     np.zeros((1, 4), np.int64), np.array([0, 1]), np.array([0, 0]), np.array([0, 0]),
                     np.array([0, 0]), np.array([3600, 3600]))
    compute_max_occupancy(pop)
    model = parse_disease_model({**SI, "entry": [{"when": "age == 1", "state": "I"}, {"state": "S"}]})
    for seed in range(20):
        stats = run(pop, model, RunConfig(days=1, seed=seed, seeding=SeedingSchedule(0, 1, 0)))
        assert stats[0].new_infections == 1 and stats[0].exposures == 1


def test_seeding_schedule(pop10k, seir):
    sim = Simulation(pop10k, seir, RunConfig(days=14, seed=5))
    stats = sim.run()
    seeds = [d for d, _, cause in sim.infection_log if cause == "seed"]
    per_day = np.bincount(seeds, minlength=15)
    assert list(per_day[1:11]) == [2] * 10 and per_day[11:].sum() == 0
    assert [s.seeded for s in stats] == [2] * 10 + [0] * 4


def test_seeding_exhaustion():
    pop = population_from_visits([], 3, 1)
    model = parse_disease_model(SI)
    stats = run(pop, model, RunConfig(days=3, seeding=SeedingSchedule(2, 1, 3)))
    assert [s.seeded for s in stats] == [2, 1, 0]


def test_infections_need_exposure_or_seed(pop10k, seir):
    sim = Simulation(pop10k, seir, RunConfig(days=25, seed=8, partitions=3))
    exposed_today = {}
    orig = sim.phase_ecc

    def spy(day):
        out = orig(day)
        exposed_today[day] = {int(t) for row in sim.inbox for part in row for t in part["target"]}
        return out

    sim.phase_ecc = spy
    sim.run()
    for day, person, cause in sim.infection_log:
        if cause == "exposure":
            assert person in exposed_today[day]
    assert any(c == "exposure" for *_, c in sim.infection_log)


def test_dwell_countdown_starts_next_day():
    pop = population_from_visits([], 1, 1)
    model = parse_disease_model({
        "name": "x", "exposed_state": "E", "entry": [{"state": "S"}],
        "states": [{"name": "S", "susceptibility": 1.0},
                   {"name": "E", "transitions": [{"to": "R", "prob": 1.0, "dwell": {"fixed": 3}}]},
                   {"name": "R"}]})
    stats = run(pop, model, RunConfig(days=5, seeding=SeedingSchedule(1, 1, 1)))
    # seeded on day 1, spends days 2, 3, 4 counting down, leaves E at the end of day 4
    assert [s.state_counts for s in stats] == [(0, 1, 0)] * 3 + [(0, 0, 1)] * 2


def test_seir_curve_rises_then_falls(pop10k, seir):
    cfg = RunConfig(days=120, seed=1, transmission=TransmissionParams(1e-4))
    infectious = [s.infectious for s in run(pop10k, seir, cfg)]
    peak = int(np.argmax(infectious))
    assert 30 <= peak <= 90
    assert infectious[-1] < 0.2 * infectious[peak] and infectious[0] < 0.1 * infectious[peak]
