"""Disease progression as a stochastic finite state automaton.

States carry a susceptibility and an infectivity; a person is susceptible when
the former is positive and infectious when the latter is. Non-terminal states
list weighted transitions, each with a dwell-time distribution in whole days.

Models are written in YAML::

    name: SEIR
    exposed_state: E
    entry:
      - when: age < 18
        state: S
      - state: S            # final rule must be a catch-all
    states:
      - name: S
        susceptibility: 1.0
      - name: E
        transitions:
          - {to: I, prob: 1.0, dwell: {fixed: 3}}
      - name: I
        infectivity: 1.0
        transitions:
          - {to: R, prob: 1.0, dwell: {uniform: [5, 9]}}
      - name: R

A susceptible state may set ``on_infection: <state>`` to override
``exposed_state`` for people infected out of it (age-specific branches).

Dwell forms: ``{fixed: k}``, ``{uniform: [lo, hi]}`` (inclusive) and
``{discrete: {values: [...], weights: [...]}}``. Countdown starts the day after
a state is entered, so a dwell of k days means k full simulated days spent in
the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .predicates import Predicate, PredicateError

PROB_TOLERANCE = 1e-9


class DiseaseModelError(ValueError):
    pass


@dataclass(frozen=True)
class DwellDistribution:
    kind: str
    values: tuple[int, ...]
    weights: tuple[float, ...]

    @classmethod
    def fixed(cls, days: int) -> "DwellDistribution":
        return cls("fixed", (int(days),), (1.0,))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "DwellDistribution":
        n = hi - lo + 1
        return cls("uniform", tuple(range(lo, hi + 1)), tuple([1.0 / n] * n) if n > 0 else ())

    @classmethod
    def discrete(cls, values: Sequence[int], weights: Sequence[float]) -> "DwellDistribution":
        return cls("discrete", tuple(int(v) for v in values), tuple(float(w) for w in weights))

    def validate(self) -> None:
        if not self.values:
            raise DiseaseModelError(f"{self.kind} dwell has empty support")
        if min(self.values) < 1:
            raise DiseaseModelError(f"dwell support must be >= 1 day, got {min(self.values)}")
        if len(self.weights) != len(self.values):
            raise DiseaseModelError("dwell values and weights differ in length")
        if any(w < 0 or not math.isfinite(w) for w in self.weights):
            raise DiseaseModelError("dwell weights must be finite and >= 0")
        if abs(sum(self.weights) - 1.0) > PROB_TOLERANCE:
            raise DiseaseModelError(f"dwell weights sum to {sum(self.weights)}, not 1")

    def sample(self, u: float) -> int:
        """Inverse-CDF draw from a uniform ``u`` in [0, 1)."""
        if self.kind == "fixed":
            return self.values[0]
        if self.kind == "uniform":
            n = len(self.values)
            return self.values[min(int(u * n), n - 1)]
        return self.values[_pick(np.cumsum(self.weights), u)]

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))


def _pick(cumulative: np.ndarray, u: float) -> int:
    k = int(np.searchsorted(cumulative, u, side="right"))
    return min(k, len(cumulative) - 1)


@dataclass(frozen=True)
class Transition:
    target: int
    probability: float
    dwell: DwellDistribution


@dataclass(frozen=True)
class DiseaseState:
    name: str
    susceptibility: float = 0.0
    infectivity: float = 0.0
    transitions: tuple[Transition, ...] = ()
    on_infection: int | None = None

    @property
    def is_terminal(self) -> bool:
        return not self.transitions


def is_susceptible(state: DiseaseState) -> bool:
    return state.susceptibility > 0


def is_infectious(state: DiseaseState) -> bool:
    return state.infectivity > 0


@dataclass(frozen=True)
class EntryRule:
    predicate: Predicate
    state: int


class DiseaseModel:
    """Validated automaton plus flat lookup tables for vectorised sampling."""

    def __init__(self, states: Sequence[DiseaseState], entry_rules: Sequence[EntryRule],
                 exposed_state: int, name: str = ""):
        self.name = name
        self.states = tuple(states)
        self.entry_rules = tuple(entry_rules)
        self.exposed_state = int(exposed_state)
        self._validate()
        self.state_names = tuple(s.name for s in self.states)
        self.sigma = np.array([s.susceptibility for s in self.states], dtype=np.float64)
        self.iota = np.array([s.infectivity for s in self.states], dtype=np.float64)
        self.susceptible = self.sigma > 0
        self.infectious = self.iota > 0
        self.has_transitions = np.array([bool(s.transitions) for s in self.states])
        # state entered on infection, per current state
        self.infection_target = np.array(
            [self.exposed_state if s.on_infection is None else s.on_infection for s in self.states],
            dtype=np.int32)
        self._cum = [np.cumsum([t.probability for t in s.transitions]) for s in self.states]
        self._dwell_cum = [[np.cumsum(t.dwell.weights) for t in s.transitions] for s in self.states]

    def _validate(self) -> None:
        n = len(self.states)
        if n == 0:
            raise DiseaseModelError("disease model has no states")
        names = [s.name for s in self.states]
        if len(set(names)) != n:
            raise DiseaseModelError("duplicate state name")
        for s in self.states:
            for v, label in ((s.susceptibility, "susceptibility"), (s.infectivity, "infectivity")):
                if not math.isfinite(v) or v < 0:
                    raise DiseaseModelError(f"state {s.name}: {label} must be finite and >= 0")
            if s.susceptibility > 0 and s.infectivity > 0:
                raise DiseaseModelError(
                    f"state {s.name} is both susceptible and infectious; exposure scanning "
                    "treats the two roles exclusively")
            if s.transitions:
                total = sum(t.probability for t in s.transitions)
                if abs(total - 1.0) > PROB_TOLERANCE:
                    raise DiseaseModelError(f"state {s.name}: transition probabilities sum to {total}")
            for t in s.transitions:
                if not 0 <= t.target < n:
                    raise DiseaseModelError(f"state {s.name}: transition to unknown state")
                if t.probability < 0:
                    raise DiseaseModelError(f"state {s.name}: negative transition probability")
                t.dwell.validate()
        for s in self.states:
            if s.on_infection is not None and not 0 <= s.on_infection < n:
                raise DiseaseModelError(f"state {s.name}: on_infection names an unknown state")
        if not 0 <= self.exposed_state < n:
            raise DiseaseModelError("exposed_state is not a state of the model")
        if not self.entry_rules or not self.entry_rules[-1].predicate.is_catch_all:
            raise DiseaseModelError("entry rules must end with a catch-all rule")
        for r in self.entry_rules:
            if not 0 <= r.state < n:
                raise DiseaseModelError("entry rule names an unknown state")

    def __len__(self) -> int:
        return len(self.states)

    def state_index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def draw_transition(self, state: int, u_next: float, u_dwell: float) -> tuple[int, int]:
        """Next state and dwell days given two uniforms (inverse-CDF on both)."""
        s = self.states[state]
        if not s.transitions:
            raise DiseaseModelError(f"state {s.name} is terminal; no transition to sample")
        k = _pick(self._cum[state], u_next)
        t = s.transitions[k]
        if t.dwell.kind == "discrete":
            days = t.dwell.values[_pick(self._dwell_cum[state][k], u_dwell)]
        else:
            days = t.dwell.sample(u_dwell)
        return t.target, days

    def draw_transitions(self, states: np.ndarray, u_next: np.ndarray, u_dwell: np.ndarray):
        """Vectorised :meth:`draw_transition`; terminal states give (-1, 0)."""
        states = np.asarray(states)
        nxt = np.full(len(states), -1, dtype=np.int32)
        days = np.zeros(len(states), dtype=np.int32)
        for s in np.unique(states):
            sel = np.flatnonzero(states == s)
            st = self.states[s]
            if not st.transitions:
                continue
            k = np.minimum(np.searchsorted(self._cum[s], u_next[sel], side="right"), len(st.transitions) - 1)
            for e, t in enumerate(st.transitions):
                sub = sel[k == e]
                if not len(sub):
                    continue
                nxt[sub] = t.target
                vals = np.asarray(t.dwell.values)
                if t.dwell.kind == "uniform":
                    idx = np.minimum((u_dwell[sub] * len(vals)).astype(np.int64), len(vals) - 1)
                else:
                    idx = np.minimum(np.searchsorted(self._dwell_cum[s][e], u_dwell[sub], side="right"),
                                     len(vals) - 1)
                days[sub] = vals[idx]
        return nxt, days


def sample_transition(model: DiseaseModel, state: int, rng) -> tuple[int, int]:
    """Draw (next state, dwell days) out of ``state`` using ``rng.random()``."""
    return model.draw_transition(state, rng.random(), rng.random())


def entry_state(model: DiseaseModel, person: Mapping[str, Any]) -> int:
    """Index of the first entry rule matching the person's attributes."""
    for rule in model.entry_rules:
        if rule.predicate(person):
            return rule.state
    return model.entry_rules[-1].state


def entry_states(model: DiseaseModel, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    """Vectorised :func:`entry_state` over columnar person attributes."""
    out = np.full(n, -1, dtype=np.int32)
    for rule in model.entry_rules:
        hit = (out < 0) & rule.predicate.mask(columns, n)
        out[hit] = rule.state
    return out


# -- file format ---------------------------------------------------------------

def _parse_dwell(spec: Any, where: str) -> DwellDistribution:
    if isinstance(spec, int):
        return DwellDistribution.fixed(spec)
    if not isinstance(spec, Mapping) or len(spec) != 1:
        raise DiseaseModelError(f"{where}: dwell must be one of fixed/uniform/discrete")
    (kind, arg), = spec.items()
    if kind == "fixed":
        return DwellDistribution.fixed(int(arg))
    if kind == "uniform":
        lo, hi = (int(x) for x in arg)
        if hi < lo:
            raise DiseaseModelError(f"{where}: uniform dwell needs lo <= hi")
        return DwellDistribution.uniform(lo, hi)
    if kind == "discrete":
        return DwellDistribution.discrete(arg["values"], arg["weights"])
    raise DiseaseModelError(f"{where}: unknown dwell kind {kind!r}")


def parse_disease_model(doc: Mapping[str, Any]) -> DiseaseModel:
    try:
        raw_states = list(doc["states"])
        names = [str(s["name"]) for s in raw_states]
    except (KeyError, TypeError) as exc:
        raise DiseaseModelError(f"disease model needs a list of named states ({exc})") from None
    index = {name: i for i, name in enumerate(names)}

    def lookup(name, where):
        if str(name) not in index:
            raise DiseaseModelError(f"{where}: unknown state {name!r}")
        return index[str(name)]

    states = []
    for raw in raw_states:
        where = f"state {raw['name']}"
        transitions = []
        for t in raw.get("transitions") or ():
            transitions.append(Transition(lookup(t["to"], where), float(t["prob"]),
                                          _parse_dwell(t.get("dwell", 1), where)))
        on_inf = raw.get("on_infection")
        states.append(DiseaseState(str(raw["name"]), float(raw.get("susceptibility", 0.0)),
                                   float(raw.get("infectivity", 0.0)), tuple(transitions),
                                   None if on_inf is None else lookup(on_inf, where)))
    rules = []
    for raw in doc.get("entry") or ():
        try:
            pred = Predicate.parse(raw.get("when"))
        except PredicateError as exc:
            raise DiseaseModelError(f"entry rule: {exc}") from None
        rules.append(EntryRule(pred, lookup(raw["state"], "entry rule")))
    if "exposed_state" not in doc:
        raise DiseaseModelError("disease model must name its exposed_state")
    exposed = lookup(doc["exposed_state"], "exposed_state")
    return DiseaseModel(states, rules, exposed, name=str(doc.get("name", "")))


def load_disease_model(path) -> DiseaseModel:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise DiseaseModelError(f"{path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise DiseaseModelError(f"{path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise DiseaseModelError(f"{path}: expected a mapping at top level")
    try:
        return parse_disease_model(doc)
    except DiseaseModelError as exc:
        raise DiseaseModelError(f"{path}: {exc}") from None


def builtin_model_path(name: str) -> Path:
    """Path of a disease or intervention file shipped in ``episim/data``."""
    path = Path(__file__).parent / "data" / name
    if not path.exists() and "." not in name:
        path = path.with_name(name + ".disease")
    if not path.exists():
        raise FileNotFoundError(path)
    return path
