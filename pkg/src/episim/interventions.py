"""Interventions: a trigger, a selector and an action.

Triggers are evaluated once per day, after the day's state update, against the
day number and the population-wide infectious count. Activations and
deactivations take effect from the next day. Actions either suppress visits
(of selected locations or people) or scale the per-person susceptibility or
infectivity multipliers. Reversible actions restore exactly what they
changed; irreversible ones (vaccination) persist after deactivation.

File format (YAML, one entry per intervention)::

    interventions:
      - name: school_closure
        reversible: true
        trigger: {infectious_above: 100, deactivate_below: 90, day_from: 5, day_to: 60}
        selector: {target: location, where: "is_school == 1"}
        action: {kind: suppress_visits, fraction: 1.0}

Trigger keys (all optional): ``infectious_above`` activates once the count
reaches the threshold; ``deactivate_below`` deactivates when the count drops
under it; ``day_from``/``day_to`` bound the active window. Selector keys:
``target`` (``person`` or ``location``), ``where`` (predicate over
attributes) and, for people, ``states`` (list of disease-state names).
Several active scale actions on one person compose multiplicatively in
activation order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from .predicates import Predicate, PredicateError
from .rng import SUPPRESSION, keyed_uniform_array

ACTIONS = ("suppress_visits", "scale_susceptibility", "scale_infectivity")


class InterventionError(ValueError):
    pass


@dataclass(frozen=True)
class Trigger:
    infectious_above: float | None = None
    deactivate_below: float | None = None
    day_from: int | None = None
    day_to: int | None = None

    def in_window(self, day: int) -> bool:
        if self.day_from is not None and day < self.day_from:
            return False
        if self.day_to is not None and day > self.day_to:
            return False
        return True

    def wants_active(self, active: bool, day: int, infectious: int) -> bool:
        if not self.in_window(day):
            return False
        if not active:
            return self.infectious_above is None or infectious >= self.infectious_above
        if self.deactivate_below is not None and infectious < self.deactivate_below:
            return False
        return True


@dataclass(frozen=True)
class Selector:
    target: str = "person"
    where: Predicate = field(default_factory=Predicate)
    states: tuple[str, ...] = ()


@dataclass(frozen=True)
class Action:
    kind: str
    fraction: float = 1.0
    factor: float = 1.0


@dataclass(frozen=True)
class InterventionSpec:
    name: str
    trigger: Trigger
    selector: Selector
    action: Action
    reversible: bool = True

    def __post_init__(self):
        a = self.action
        if a.kind not in ACTIONS:
            raise InterventionError(f"{self.name}: unknown action {a.kind!r}")
        if a.kind == "suppress_visits" and not 0.0 <= a.fraction <= 1.0:
            raise InterventionError(f"{self.name}: fraction must lie in [0, 1]")
        if a.kind != "suppress_visits" and not a.factor >= 0:
            raise InterventionError(f"{self.name}: factor must be >= 0")
        if a.kind != "suppress_visits" and self.selector.target != "person":
            raise InterventionError(f"{self.name}: {a.kind} applies to people only")
        if self.selector.target not in ("person", "location"):
            raise InterventionError(f"{self.name}: selector target must be person or location")

    @property
    def key(self) -> int:
        return zlib.crc32(self.name.encode())


@dataclass
class InterventionState:
    """What an applied action changed, sufficient to undo it."""

    active: bool = False
    affected: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    saved: np.ndarray = field(default_factory=lambda: np.zeros(0))
    activated_on: int | None = None


class Entities:
    """Mutable per-run view the actions work on.

    ``suppressed`` counts, per visit, how many active interventions removed
    it; a visit is active when its count is zero.
    """

    def __init__(self, pop, states: np.ndarray, state_names: Sequence[str], seed: int):
        self.pop = pop
        self.states = states
        self.state_names = tuple(state_names)
        self.seed = seed
        self.beta_s = pop.beta_susceptibility.copy()
        self.beta_i = pop.beta_infectivity.copy()
        self.suppressed = np.zeros(pop.num_visits, dtype=np.int32)
        self.suppression_version = 0  # bumped whenever ``suppressed`` changes
        self.changed_people: set[int] = set()
        self._person_visits = None
        self._location_visits = None

    @property
    def visit_active(self) -> np.ndarray:
        return self.suppressed == 0

    def visits_of_people(self, people: np.ndarray) -> np.ndarray:
        if self._person_visits is None:
            order = np.argsort(self.pop.visit_person, kind="stable")
            starts = np.searchsorted(self.pop.visit_person[order], np.arange(self.pop.num_people + 1))
            self._person_visits = (order, starts)
        order, starts = self._person_visits
        return _gather(order, starts, people)

    def visits_of_locations(self, locations: np.ndarray) -> np.ndarray:
        if self._location_visits is None:
            order = np.argsort(self.pop.visit_location, kind="stable")
            starts = np.searchsorted(self.pop.visit_location[order], np.arange(self.pop.num_locations + 1))
            self._location_visits = (order, starts)
        order, starts = self._location_visits
        return _gather(order, starts, locations)


def _gather(order, starts, keys) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    if not len(keys):
        return np.zeros(0, np.int64)
    lens = starts[keys + 1] - starts[keys]
    idx = np.repeat(starts[keys] - np.cumsum(np.concatenate([[0], lens[:-1]])), lens) + np.arange(lens.sum())
    return np.sort(order[idx]).astype(np.int64)


def select(spec: InterventionSpec, entities: Entities) -> np.ndarray:
    """Indices of the people or locations the selector picks (read-only)."""
    pop = entities.pop
    sel = spec.selector
    if sel.target == "location":
        return np.flatnonzero(sel.where.mask(pop.location_columns(), pop.num_locations))
    mask = sel.where.mask(pop.person_columns(), pop.num_people)
    if sel.states:
        wanted = [i for i, n in enumerate(entities.state_names) if n in sel.states]
        mask &= np.isin(entities.states, wanted)
    return np.flatnonzero(mask)


def evaluate_triggers(specs: Sequence[InterventionSpec], states: Sequence[InterventionState],
                      day: int, infectious_count: int) -> list[bool]:
    """Desired active flag per spec after ``day``."""
    return [spec.trigger.wants_active(st.active, day, infectious_count) for spec, st in zip(specs, states)]


def apply_action(spec: InterventionSpec, entities: Entities, day: int) -> InterventionState:
    """Apply ``spec`` to whatever its selector picks now; returns the undo record."""
    chosen = select(spec, entities)
    kind = spec.action.kind
    if kind == "suppress_visits":
        if spec.selector.target == "location":
            visits = entities.visits_of_locations(chosen)
        else:
            visits = entities.visits_of_people(chosen)
        if len(visits) and spec.action.fraction < 1.0:
            u = keyed_uniform_array(entities.seed, SUPPRESSION, day, spec.key, visits)
            visits = visits[u < spec.action.fraction]
        entities.suppressed[visits] += 1
        entities.suppression_version += 1
        return InterventionState(True, visits, np.zeros(0), day)
    beta = entities.beta_s if kind == "scale_susceptibility" else entities.beta_i
    saved = beta[chosen].copy()
    beta[chosen] = saved * spec.action.factor
    entities.changed_people.update(chosen.tolist())
    return InterventionState(True, chosen.astype(np.int64), saved, day)


def revert_action(spec: InterventionSpec, state: InterventionState, entities: Entities,
                  later: Sequence[tuple[InterventionSpec, InterventionState]] = ()) -> None:
    """Undo an applied action.

    ``later`` lists still-active scale actions of the same kind applied after
    this one; their factors are re-applied on top of the restored values so
    composition stays exact.
    """
    if not spec.reversible:
        raise InterventionError(f"{spec.name} is not reversible")
    if not len(state.affected):
        state.active = False
        return
    kind = spec.action.kind
    if kind == "suppress_visits":
        entities.suppressed[state.affected] -= 1
        entities.suppression_version += 1
    else:
        beta = entities.beta_s if kind == "scale_susceptibility" else entities.beta_i
        idx = state.affected
        beta[idx] = state.saved
        for other_spec, other in later:
            if other_spec.action.kind != kind:
                continue
            common, i_here, i_other = np.intersect1d(idx, other.affected, return_indices=True)
            if not len(common):
                continue
            other.saved[i_other] = beta[common]
            beta[common] = beta[common] * other_spec.action.factor
        entities.changed_people.update(idx.tolist())
    state.active = False
    state.affected = np.zeros(0, np.int64)
    state.saved = np.zeros(0)


class InterventionManager:
    """Holds specs and their states; applies trigger decisions between days."""

    def __init__(self, specs: Sequence[InterventionSpec], entities: Entities):
        self.specs = list(specs)
        self.entities = entities
        self.states = [InterventionState() for _ in self.specs]
        self.order: list[int] = []  # activation order of applied specs
        self.log: list[tuple[int, str, str]] = []

    def end_of_day(self, day: int, infectious_count: int) -> None:
        wants = evaluate_triggers(self.specs, self.states, day, infectious_count)
        for k, (spec, want) in enumerate(zip(self.specs, wants)):
            st = self.states[k]
            if want and not st.active:
                if st.activated_on is not None and not spec.reversible:
                    continue  # irreversible actions fire once
                self.states[k] = apply_action(spec, self.entities, day)
                self.order.append(k)
                self.log.append((day, spec.name, "activate"))
            elif not want and st.active:
                if spec.reversible:
                    pos = self.order.index(k)
                    later = [(self.specs[j], self.states[j]) for j in self.order[pos + 1:]]
                    revert_action(spec, st, self.entities, later)
                    self.order.pop(pos)
                else:
                    st.active = False
                self.log.append((day, spec.name, "deactivate"))


# -- file format ---------------------------------------------------------------

def _parse_spec(raw: Mapping[str, Any]) -> InterventionSpec:
    try:
        name = str(raw["name"])
        trig = raw.get("trigger") or {}
        sel = raw.get("selector") or {}
        act = raw["action"]
    except (KeyError, TypeError) as exc:
        raise InterventionError(f"intervention entry missing {exc}") from None
    unknown = set(trig) - {"infectious_above", "deactivate_below", "day_from", "day_to"}
    if unknown:
        raise InterventionError(f"{name}: unknown trigger keys {sorted(unknown)}")
    try:
        where = Predicate.parse(sel.get("where"))
    except PredicateError as exc:
        raise InterventionError(f"{name}: {exc}") from None
    kind = str(act.get("kind", ""))
    reversible = bool(raw.get("reversible", True))
    return InterventionSpec(
        name=name,
        trigger=Trigger(trig.get("infectious_above"), trig.get("deactivate_below"),
                        trig.get("day_from"), trig.get("day_to")),
        selector=Selector(str(sel.get("target", "person")), where, tuple(sel.get("states") or ())),
        action=Action(kind, float(act.get("fraction", 1.0)), float(act.get("factor", 1.0))),
        reversible=reversible,
    )


def parse_interventions(doc: Mapping[str, Any]) -> list[InterventionSpec]:
    specs = [_parse_spec(raw) for raw in (doc.get("interventions") or ())]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InterventionError("intervention names must be unique")
    return specs


def load_interventions(path) -> list[InterventionSpec]:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise InterventionError(f"{path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise InterventionError(f"{path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise InterventionError(f"{path}: expected a mapping with an 'interventions' list")
    try:
        return parse_interventions(doc)
    except InterventionError as exc:
        raise InterventionError(f"{path}: {exc}") from None
