from collections import Counter

import numpy as np
import pytest
import yaml
from scipy import stats

from episim.disease import (
    DiseaseModelError, DiseaseState, DwellDistribution, builtin_model_path, entry_state,
    entry_states, is_infectious, is_susceptible, load_disease_model, parse_disease_model,
    sample_transition,
)


def _doc(extra_states=(), i_transitions=None, entry=None):
    return {
        "name": "t", "exposed_state": "E",
        "entry": entry or [{"state": "S"}],
        "states": [
            {"name": "S", "susceptibility": 1.0},
            {"name": "E", "transitions": [{"to": "I", "prob": 1.0, "dwell": {"fixed": 3}}]},
            {"name": "I", "infectivity": 1.0,
             "transitions": i_transitions or [{"to": "R", "prob": 0.95, "dwell": {"fixed": 7}},
                                              {"to": "D", "prob": 0.05, "dwell": {"fixed": 7}}]},
            {"name": "R"}, {"name": "D"}, *extra_states,
        ],
    }


def test_seir_file():
    m = load_disease_model(builtin_model_path("seir.disease"))
    assert m.state_names == ("S", "E", "I", "R")
    assert m.draw_transition(m.state_index("E"), 0.3, 0.9) == (m.state_index("I"), 3)
    assert m.draw_transition(m.state_index("I"), 0.3, 0.9) == (m.state_index("R"), 7)
    assert m.exposed_state == m.state_index("E")


def test_probabilities_must_sum_to_one():
    doc = _doc(i_transitions=[{"to": "R", "prob": 0.9, "dwell": 7}])
    with pytest.raises(DiseaseModelError, match="sum"):
        parse_disease_model(doc)


def test_unknown_state_reference():
    with pytest.raises(DiseaseModelError, match="Q"):
        parse_disease_model(_doc(i_transitions=[{"to": "Q", "prob": 1.0}]))


def test_dual_role_state_rejected():
    doc = _doc(extra_states=[{"name": "X", "susceptibility": 0.5, "infectivity": 0.5}])
    with pytest.raises(DiseaseModelError, match="both"):
        parse_disease_model(doc)


def test_catch_all_required():
    with pytest.raises(DiseaseModelError, match="catch-all"):
        parse_disease_model(_doc(entry=[{"when": "age < 18", "state": "S"}]))


def test_load_errors_name_file(tmp_path):
    p = tmp_path / "bad.disease"
    p.write_text(yaml.safe_dump(_doc(i_transitions=[{"to": "R", "prob": 0.5}])))
    with pytest.raises(DiseaseModelError, match="bad.disease"):
        load_disease_model(p)


def test_branching_frequencies_chi_square():
    m = parse_disease_model(_doc())
    rng = np.random.default_rng(0)
    i = m.state_index("I")
    draws = Counter(sample_transition(m, i, rng)[0] for _ in range(100_000))
    r, d = draws[m.state_index("R")], draws[m.state_index("D")]
    assert abs(r / 1e5 - 0.95) < 0.01
    assert stats.chisquare([r, d], [95_000, 5_000]).pvalue > 0.001


def test_vectorised_matches_scalar():
    doc = _doc(i_transitions=[{"to": "R", "prob": 0.6, "dwell": {"uniform": [2, 4]}},
                              {"to": "D", "prob": 0.4, "dwell": {"discrete": {"values": [1, 5], "weights": [0.3, 0.7]}}}])
    m = parse_disease_model(doc)
    rng = np.random.default_rng(1)
    states = rng.integers(0, len(m), 2000)
    u1, u2 = rng.random(2000), rng.random(2000)
    nxt, days = m.draw_transitions(states, u1, u2)
    for k in range(2000):
        if m.has_transitions[states[k]]:
            assert (nxt[k], days[k]) == m.draw_transition(states[k], u1[k], u2[k])
        else:
            assert (nxt[k], days[k]) == (-1, 0)


def test_uniform_dwell_mean():
    dist = DwellDistribution.uniform(2, 4)
    rng = np.random.default_rng(2)
    mean = np.mean([dist.sample(u) for u in rng.random(100_000)])
    assert abs(mean - 3.0) < 0.05


def test_dwell_validation():
    with pytest.raises(DiseaseModelError):
        DwellDistribution.fixed(0).validate()
    with pytest.raises(DiseaseModelError):
        DwellDistribution.discrete([1, 2], [0.5, 0.4]).validate()


def test_terminal_state_has_no_transition():
    m = parse_disease_model(_doc())
    with pytest.raises(DiseaseModelError):
        sample_transition(m, m.state_index("R"), np.random.default_rng(0))


def test_entry_rules():
    doc = _doc(entry=[{"when": "age < 18", "state": "S"}, {"when": "*", "state": "R"}])
    m = parse_disease_model(doc)
    assert entry_state(m, {"age": 10}) == m.state_index("S")
    assert entry_state(m, {"age": 40}) == m.state_index("R")
    cols = {"age": np.array([3, 18, 70])}
    assert list(entry_states(m, cols, 3)) == [m.state_index("S"), m.state_index("R"), m.state_index("R")]
    only = parse_disease_model(_doc())
    assert entry_state(only, {"age": 99}) == only.state_index("S")


def test_role_predicates():
    assert is_susceptible(DiseaseState("S", 1.0, 0.0, ()))
    assert not is_infectious(DiseaseState("S", 1.0, 0.0, ()))
    assert is_infectious(DiseaseState("I", 0.0, 0.8, ()))
    assert not is_susceptible(DiseaseState("I", 0.0, 0.8, ()))
    r = DiseaseState("R", 0.0, 0.0, ())
    assert not is_susceptible(r) and not is_infectious(r)


def _reachable(m, start):
    seen, todo = {start}, [start]
    while todo:
        s = todo.pop()
        nxt = [t.target for t in m.states[s].transitions]
        if m.susceptible[s]:
            nxt.append(int(m.infection_target[s]))
        for t in nxt:
            if t not in seen:
                seen.add(t)
                todo.append(t)
    return seen


def test_age_branching_model_has_18_states_per_entry():
    m = load_disease_model(builtin_model_path("age_branching.disease"))
    entries = [r.state for r in m.entry_rules]
    assert len(set(entries)) == 5
    for e in entries:
        assert len(_reachable(m, e)) == 18
    branching = [s for s in m.states if len(s.transitions) > 1]
    assert branching
