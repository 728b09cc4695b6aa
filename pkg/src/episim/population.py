"""People, locations and weekly visit schedules.

A :class:`Population` is the bipartite person-location graph the simulation
runs on. It is stored column-wise (numpy arrays) because realistic inputs run
to millions of visits; :class:`Person`, :class:`Location` and :class:`Visit`
are row views for small-scale use and tests.

Visits are kept in canonical order, sorted by (day of week, location, start,
end, person). A visit's id is its position in that order, and the visits of a
(day, location) pair form a contiguous block addressed by ``visit_offsets``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numba as nb
import numpy as np

SECONDS_PER_DAY = 86400
DAYS_PER_WEEK = 7
CENSUS_GEO = ("state", "county", "tract", "blockgroup")
GRID_GEO = ("row", "col")

PEOPLE_COLUMNS = ("id", "age", "home_location", "beta_susceptibility", "beta_infectivity")
LOCATION_COLUMNS = ("id",) + CENSUS_GEO + ("max_occupancy",)
VISIT_COLUMNS = ("person", "location", "day_of_week", "start", "end")


class PopulationError(ValueError):
    """Malformed or inconsistent population data."""


@dataclass(frozen=True)
class Person:
    id: int
    home_location: int
    age: int
    attributes: Mapping[str, Any] = field(default_factory=dict)
    beta_susceptibility: float = 1.0
    beta_infectivity: float = 1.0


@dataclass(frozen=True)
class Location:
    id: int
    geo: tuple[int, ...]
    max_occupancy: int = 0
    contact_probability: float = 1.0
    attributes: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Visit:
    person: int
    location: int
    day_of_week: int
    start: int
    end: int


class Population:
    """Column store for people, locations and visits (all cross-referenced by index).

    Constructor arguments use *indices* for cross references: ``home`` and
    ``visit_location`` index into the location arrays, ``visit_person`` into
    the person arrays. File loaders translate external ids.
    """

    def __init__(
        self,
        person_ids,
        age,
        home,
        location_ids,
        geo,
        visit_person,
        visit_location,
        visit_dow,
        visit_start,
        visit_end,
        beta_susceptibility=None,
        beta_infectivity=None,
        person_attrs: Mapping[str, np.ndarray] | None = None,
        location_attrs: Mapping[str, np.ndarray] | None = None,
        max_occupancy=None,
        geo_names: tuple[str, ...] = CENSUS_GEO,
    ):
        self.person_ids = np.asarray(person_ids, dtype=np.int64)
        n = len(self.person_ids)
        self.age = np.asarray(age, dtype=np.int64)
        self.home = np.asarray(home, dtype=np.int32)
        self.beta_susceptibility = (
            np.ones(n) if beta_susceptibility is None else np.asarray(beta_susceptibility, dtype=np.float64)
        )
        self.beta_infectivity = (
            np.ones(n) if beta_infectivity is None else np.asarray(beta_infectivity, dtype=np.float64)
        )
        self.person_attrs = {k: np.asarray(v) for k, v in (person_attrs or {}).items()}

        self.location_ids = np.asarray(location_ids, dtype=np.int64)
        m = len(self.location_ids)
        self.geo = np.asarray(geo, dtype=np.int64).reshape(m, len(geo_names))
        self.geo_names = tuple(geo_names)
        self.location_attrs = {k: np.asarray(v) for k, v in (location_attrs or {}).items()}
        self.max_occupancy = (
            np.zeros(m, dtype=np.int64) if max_occupancy is None else np.asarray(max_occupancy, dtype=np.int64).copy()
        )
        self.contact_probability = np.ones(m, dtype=np.float64)

        vp = np.asarray(visit_person, dtype=np.int32)
        vl = np.asarray(visit_location, dtype=np.int32)
        vd = np.asarray(visit_dow, dtype=np.int8)
        vs = np.asarray(visit_start, dtype=np.int32)
        ve = np.asarray(visit_end, dtype=np.int32)
        self._validate(vp, vl, vd, vs, ve)
        order = np.lexsort((vp, ve, vs, vl, vd))
        self.visit_person = vp[order]
        self.visit_location = vl[order]
        self.visit_dow = vd[order]
        self.visit_start = vs[order]
        self.visit_end = ve[order]
        for a in (self.visit_person, self.visit_location, self.visit_dow, self.visit_start, self.visit_end):
            a.setflags(write=False)
        block = self.visit_dow.astype(np.int64) * m + self.visit_location
        counts = np.bincount(block, minlength=DAYS_PER_WEEK * m) if m else np.zeros(0, np.int64)
        offsets = np.zeros(DAYS_PER_WEEK * m + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        self.visit_offsets = offsets

    def _validate(self, vp, vl, vd, vs, ve) -> None:
        n, m = self.num_people, self.num_locations
        for name, arr in (("age", self.age), ("home", self.home),
                          ("beta_susceptibility", self.beta_susceptibility),
                          ("beta_infectivity", self.beta_infectivity)):
            if len(arr) != n:
                raise PopulationError(f"person column {name!r} has {len(arr)} rows, expected {n}")
        if len(np.unique(self.person_ids)) != n:
            raise PopulationError("duplicate person id")
        if len(np.unique(self.location_ids)) != m:
            raise PopulationError("duplicate location id")
        if n and (self.home.min() < 0 or self.home.max() >= m):
            bad = int(np.flatnonzero((self.home < 0) | (self.home >= m))[0])
            raise PopulationError(f"person {self.person_ids[bad]} has unknown home location")
        for name, beta in (("beta_susceptibility", self.beta_susceptibility),
                           ("beta_infectivity", self.beta_infectivity)):
            if not np.all(np.isfinite(beta)) or np.any(beta < 0):
                raise PopulationError(f"{name} must be finite and non-negative")
        if not (len(vp) == len(vl) == len(vd) == len(vs) == len(ve)):
            raise PopulationError("visit columns differ in length")
        if len(vp) == 0:
            return
        if vp.min() < 0 or vp.max() >= n:
            raise PopulationError("visit references unknown person")
        if vl.min() < 0 or vl.max() >= m:
            raise PopulationError("visit references unknown location")
        if vd.min() < 0 or vd.max() >= DAYS_PER_WEEK:
            raise PopulationError("day_of_week outside 0..6")
        if vs.min() < 0 or ve.max() > SECONDS_PER_DAY or np.any(vs >= ve):
            raise PopulationError("visit times must satisfy 0 <= start < end <= 86400")

    # -- sizes and lookups -------------------------------------------------

    @property
    def num_people(self) -> int:
        return len(self.person_ids)

    @property
    def num_locations(self) -> int:
        return len(self.location_ids)

    @property
    def num_visits(self) -> int:
        return len(self.visit_person)

    def visit_block(self, location: int, day_of_week: int) -> slice:
        """Slice of visit ids at ``location`` (index) on ``day_of_week``."""
        k = day_of_week * self.num_locations + location
        return slice(int(self.visit_offsets[k]), int(self.visit_offsets[k + 1]))

    def visits_per_location(self) -> np.ndarray:
        """Weekly visit count per location (the partitioner's load proxy)."""
        return np.bincount(self.visit_location, minlength=self.num_locations).astype(np.int64)

    def person_index(self, person_id: int) -> int:
        idx = np.flatnonzero(self.person_ids == person_id)
        if not len(idx):
            raise KeyError(person_id)
        return int(idx[0])

    def location_index(self, location_id: int) -> int:
        idx = np.flatnonzero(self.location_ids == location_id)
        if not len(idx):
            raise KeyError(location_id)
        return int(idx[0])

    def person_columns(self) -> dict[str, np.ndarray]:
        cols = dict(self.person_attrs)
        cols.update(id=self.person_ids, age=self.age, home_location=self.location_ids[self.home])
        return cols

    def location_columns(self) -> dict[str, np.ndarray]:
        cols = dict(self.location_attrs)
        for i, name in enumerate(self.geo_names):
            cols[name] = self.geo[:, i]
        cols.update(id=self.location_ids, max_occupancy=self.max_occupancy)
        return cols

    def person_attributes(self, index: int) -> dict[str, Any]:
        return {k: v[index].item() if hasattr(v[index], "item") else v[index]
                for k, v in self.person_columns().items()}

    # -- row views -----------------------------------------------------------

    @property
    def people(self) -> list[Person]:
        out = []
        for i in range(self.num_people):
            attrs = {k: _py(v[i]) for k, v in self.person_attrs.items()}
            out.append(Person(int(self.person_ids[i]), int(self.location_ids[self.home[i]]),
                              int(self.age[i]), attrs, float(self.beta_susceptibility[i]),
                              float(self.beta_infectivity[i])))
        return out

    @property
    def locations(self) -> list[Location]:
        out = []
        for j in range(self.num_locations):
            attrs = {k: _py(v[j]) for k, v in self.location_attrs.items()}
            out.append(Location(int(self.location_ids[j]), tuple(int(g) for g in self.geo[j]),
                                int(self.max_occupancy[j]), float(self.contact_probability[j]), attrs))
        return out

    @property
    def visits(self) -> list[Visit]:
        pid, lid = self.person_ids, self.location_ids
        return [Visit(int(pid[p]), int(lid[l]), int(d), int(s), int(e))
                for p, l, d, s, e in zip(self.visit_person, self.visit_location,
                                         self.visit_dow, self.visit_start, self.visit_end)]

    def fingerprint(self) -> str:
        """SHA-256 over every array; equal populations give equal digests."""
        import hashlib

        h = hashlib.sha256()
        arrays = [self.person_ids, self.age, self.home, self.beta_susceptibility, self.beta_infectivity,
                  self.location_ids, self.geo, self.max_occupancy, self.visit_person,
                  self.visit_location, self.visit_dow, self.visit_start, self.visit_end]
        for name in sorted(self.person_attrs):
            arrays.append(self.person_attrs[name])
        for name in sorted(self.location_attrs):
            arrays.append(self.location_attrs[name])
        for a in arrays:
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def _py(v):
    return v.item() if hasattr(v, "item") else v


# -- tabular input ------------------------------------------------------------

def _scalar(text: str) -> Any:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _attr_column(values: list) -> np.ndarray:
    if all(isinstance(v, int) for v in values):
        return np.asarray(values, dtype=np.int64)
    if all(isinstance(v, (int, float)) for v in values):
        return np.asarray(values, dtype=np.float64)
    return np.asarray([str(v) for v in values], dtype=object)


def _read_table(path, required: tuple[str, ...]):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise PopulationError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PopulationError(f"{path}:1: empty file, expected header {','.join(required)}")
        if tuple(header[: len(required)]) != required:
            raise PopulationError(f"{path}:1: header must start with {','.join(required)}")
        rows = []
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise PopulationError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, [c.strip() for c in row]))
    return header, rows


def _parse(path, line, value, cast, column):
    try:
        return cast(value)
    except ValueError:
        raise PopulationError(f"{path}:{line}: bad {column} value {value!r}") from None


def load_population(people_path, locations_path, visits_path) -> Population:
    """Read the three CSV files into a cross-linked :class:`Population`.

    Errors name the file and line of the offending row.
    """
    lheader, lrows = _read_table(locations_path, LOCATION_COLUMNS)
    loc_ids, geo, maxocc = [], [], []
    lattr_names = lheader[len(LOCATION_COLUMNS):]
    lattrs: dict[str, list] = {a: [] for a in lattr_names}
    loc_index: dict[int, int] = {}
    for line, row in lrows:
        lid = _parse(locations_path, line, row[0], int, "id")
        if lid in loc_index:
            raise PopulationError(f"{locations_path}:{line}: duplicate location id {lid}")
        loc_index[lid] = len(loc_ids)
        loc_ids.append(lid)
        geo.append([_parse(locations_path, line, v, int, c) for v, c in zip(row[1:5], CENSUS_GEO)])
        maxocc.append(_parse(locations_path, line, row[5], int, "max_occupancy"))
        for name, v in zip(lattr_names, row[len(LOCATION_COLUMNS):]):
            lattrs[name].append(_scalar(v))

    pheader, prows = _read_table(people_path, PEOPLE_COLUMNS)
    pattr_names = pheader[len(PEOPLE_COLUMNS):]
    pattrs: dict[str, list] = {a: [] for a in pattr_names}
    pids, ages, homes, bs, bi = [], [], [], [], []
    person_index: dict[int, int] = {}
    for line, row in prows:
        pid = _parse(people_path, line, row[0], int, "id")
        if pid in person_index:
            raise PopulationError(f"{people_path}:{line}: duplicate person id {pid}")
        home = _parse(people_path, line, row[2], int, "home_location")
        if home not in loc_index:
            raise PopulationError(f"{people_path}:{line}: unknown home location id {home}")
        b_s = _parse(people_path, line, row[3], float, "beta_susceptibility")
        b_i = _parse(people_path, line, row[4], float, "beta_infectivity")
        if not (math.isfinite(b_s) and math.isfinite(b_i) and b_s >= 0 and b_i >= 0):
            raise PopulationError(f"{people_path}:{line}: beta multipliers must be finite and >= 0")
        person_index[pid] = len(pids)
        pids.append(pid)
        ages.append(_parse(people_path, line, row[1], int, "age"))
        homes.append(loc_index[home])
        bs.append(b_s)
        bi.append(b_i)
        for name, v in zip(pattr_names, row[len(PEOPLE_COLUMNS):]):
            pattrs[name].append(_scalar(v))

    _, vrows = _read_table(visits_path, VISIT_COLUMNS)
    nv = len(vrows)
    vp = np.empty(nv, np.int32)
    vl = np.empty(nv, np.int32)
    vd = np.empty(nv, np.int8)
    vs = np.empty(nv, np.int32)
    ve = np.empty(nv, np.int32)
    for k, (line, row) in enumerate(vrows):
        p, l, d, s, e = (_parse(visits_path, line, v, int, c) for v, c in zip(row, VISIT_COLUMNS))
        if p not in person_index:
            raise PopulationError(f"{visits_path}:{line}: unknown person id {p}")
        if l not in loc_index:
            raise PopulationError(f"{visits_path}:{line}: unknown location id {l}")
        if not 0 <= d < DAYS_PER_WEEK:
            raise PopulationError(f"{visits_path}:{line}: day_of_week {d} outside 0..6")
        if not (0 <= s < e <= SECONDS_PER_DAY):
            raise PopulationError(
                f"{visits_path}:{line}: need 0 <= start < end <= 86400, got start={s} end={e}")
        vp[k], vl[k], vd[k], vs[k], ve[k] = person_index[p], loc_index[l], d, s, e

    return Population(
        pids, ages, homes, loc_ids, np.asarray(geo, dtype=np.int64).reshape(-1, 4),
        vp, vl, vd, vs, ve,
        beta_susceptibility=bs, beta_infectivity=bi,
        person_attrs={k: _attr_column(v) for k, v in pattrs.items()},
        location_attrs={k: _attr_column(v) for k, v in lattrs.items()},
        max_occupancy=maxocc,
    )


def write_population(pop: Population, directory) -> tuple[Path, Path, Path]:
    """Write ``people.csv``, ``locations.csv`` and ``visits.csv`` into ``directory``.

    Grid populations are written with state=county=0, tract=row, blockgroup=col.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ppath, lpath, vpath = directory / "people.csv", directory / "locations.csv", directory / "visits.csv"
    pnames = sorted(pop.person_attrs)
    with open(ppath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PEOPLE_COLUMNS + tuple(pnames))
        for i in range(pop.num_people):
            w.writerow([pop.person_ids[i], pop.age[i], pop.location_ids[pop.home[i]],
                        repr(float(pop.beta_susceptibility[i])), repr(float(pop.beta_infectivity[i]))]
                       + [_py(pop.person_attrs[a][i]) for a in pnames])
    geo = pop.geo
    if geo.shape[1] == 2:
        geo = np.column_stack([np.zeros((len(geo), 2), np.int64), geo])
    lnames = sorted(pop.location_attrs)
    with open(lpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOCATION_COLUMNS + tuple(lnames))
        for j in range(pop.num_locations):
            w.writerow([pop.location_ids[j], *geo[j], pop.max_occupancy[j]]
                       + [_py(pop.location_attrs[a][j]) for a in lnames])
    with open(vpath, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VISIT_COLUMNS)
        cols = np.column_stack([pop.person_ids[pop.visit_person], pop.location_ids[pop.visit_location],
                                pop.visit_dow, pop.visit_start, pop.visit_end])
        w.writerows(cols.tolist())
    return ppath, lpath, vpath


# -- maximum occupancy ---------------------------------------------------------

@nb.njit(cache=True)
def block_events(offsets, start, end, person):
    """Arrival/departure events of every visit block, each block sorted on its own.

    Block b (visit ids ``offsets[b]:offsets[b+1]``) owns events
    ``2*offsets[b]:2*offsets[b+1]``, ordered by (time, departure before
    arrival, person, visit id). Returns (time, kind, slot) with kind 1 for an
    arrival and slot the visit id relative to the block start.
    """
    nv = len(start)
    ev_time = np.empty(2 * nv, np.int32)
    ev_kind = np.empty(2 * nv, np.int8)
    ev_slot = np.empty(2 * nv, np.int32)
    for b in range(len(offsets) - 1):
        lo, hi = offsets[b], offsets[b + 1]
        k = hi - lo
        if k == 0:
            continue
        keys = np.empty(2 * k, np.int64)
        for s in range(k):
            keys[s] = ((start[lo + s] * 2 + 1) << 32) | person[lo + s]
            keys[k + s] = ((end[lo + s] * 2) << 32) | person[lo + s]
        order = np.argsort(keys, kind="mergesort")  # stable: equal keys keep visit-id order
        for e in range(2 * k):
            o = order[e]
            at = 2 * lo + e
            if o < k:
                ev_time[at] = start[lo + o]
                ev_kind[at] = 1
                ev_slot[at] = o
            else:
                ev_time[at] = end[lo + o - k]
                ev_kind[at] = 0
                ev_slot[at] = o - k
    return ev_time, ev_kind, ev_slot


@nb.njit(cache=True)
def _block_peaks(offsets, ev_kind):
    peaks = np.zeros(len(offsets) - 1, np.int64)
    for b in range(len(offsets) - 1):
        level = 0
        best = 0
        for e in range(2 * offsets[b], 2 * offsets[b + 1]):
            level += 1 if ev_kind[e] == 1 else -1
            if level > best:
                best = level
        peaks[b] = best
    return peaks


def visit_events(pop: "Population"):
    return block_events(pop.visit_offsets.astype(np.int64), pop.visit_start.astype(np.int64),
                        pop.visit_end.astype(np.int64), pop.visit_person.astype(np.int64))


def max_occupancy_by_day(pop: Population, events=None) -> np.ndarray:
    """(7, num_locations) array of peak simultaneous occupancy per weekday.

    Sweep over arrival/departure breakpoints with departures ordered before
    arrivals at equal times, so touching visits [a, b] and [b, c] never count
    as co-present.
    """
    m = pop.num_locations
    if pop.num_visits == 0 or m == 0:
        return np.zeros((DAYS_PER_WEEK, m), dtype=np.int64)
    _, kind, _ = visit_events(pop) if events is None else events
    return _block_peaks(pop.visit_offsets.astype(np.int64), kind).reshape(DAYS_PER_WEEK, m)


def compute_max_occupancy(pop: Population) -> np.ndarray:
    """Peak simultaneous occupancy N per location over the week; stored on ``pop``."""
    occ = max_occupancy_by_day(pop).max(axis=0) if pop.num_locations else np.zeros(0, np.int64)
    pop.max_occupancy[:] = occ
    return occ


# -- synthetic grid populations -----------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    grid_width: int
    grid_height: int
    people_count: int
    lambda_visits: float = 4.6
    lambda_hops: float = 5.2
    visit_duration: float = 1800.0
    seed: int = 0
    location_count: int | None = None

    def __post_init__(self):
        cells = self.grid_width * self.grid_height
        if self.location_count is None:
            object.__setattr__(self, "location_count", cells)
        if self.location_count != cells:
            raise PopulationError(
                f"location_count {self.location_count} != grid {self.grid_width}x{self.grid_height}")
        if self.grid_width < 0 or self.grid_height < 0 or self.people_count < 0:
            raise PopulationError("grid dimensions and people_count must be non-negative")
        for name in ("lambda_visits", "lambda_hops", "visit_duration"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise PopulationError(f"{name} must be finite and >= 0")


# people / locations per core from the weak-scaling series, plus a desk-size preset
SYNTHETIC_PRESETS = {
    "1x-scaled": dict(grid_width=280, grid_height=250, people_count=280_000),
    "2x-scaled": dict(grid_width=400, grid_height=350, people_count=560_000),
    "4x-scaled": dict(grid_width=560, grid_height=500, people_count=1_120_000),
    "10k": dict(grid_width=50, grid_height=50, people_count=10_000),
}


def synthetic_preset(name: str, seed: int = 0, **overrides) -> SyntheticConfig:
    key = name if name in SYNTHETIC_PRESETS else f"{name}-scaled"
    if key not in SYNTHETIC_PRESETS:
        raise PopulationError(f"unknown synthetic preset {name!r}; choose from {sorted(SYNTHETIC_PRESETS)}")
    return SyntheticConfig(**{**SYNTHETIC_PRESETS[key], "seed": seed, **overrides})


def ring_offsets(width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid offsets grouped by toroidal Manhattan distance.

    Returns ``(dx, dy, starts)``: offsets with distance d occupy
    ``dx[starts[d]:starts[d+1]]``. Each cell of the torus appears exactly once.
    """
    xs = np.arange(-((width - 1) // 2), width // 2 + 1)
    ys = np.arange(-((height - 1) // 2), height // 2 + 1)
    dx, dy = np.meshgrid(xs, ys, indexing="ij")
    dx, dy = dx.ravel(), dy.ravel()
    dist = np.abs(dx) + np.abs(dy)
    order = np.lexsort((dy, dx, dist))
    dx, dy, dist = dx[order], dy[order], dist[order]
    counts = np.bincount(dist)
    starts = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return dx, dy, starts


def toroidal_distance(a_row, a_col, b_row, b_col, width: int, height: int):
    dr = np.abs(np.asarray(a_row) - np.asarray(b_row)) % height
    dc = np.abs(np.asarray(a_col) - np.asarray(b_col)) % width
    return np.minimum(dr, height - dr) + np.minimum(dc, width - dc)


SCHOOL_STRIDE = 50


def generate_synthetic(cfg: SyntheticConfig) -> Population:
    """Grid population: uniform homes, Poisson visit counts, Poisson hop distances.

    For every person and weekday, n ~ Poisson(lambda_visits) visits are drawn.
    Each targets a cell exactly d ~ Poisson(lambda_hops) toroidal Manhattan
    hops from home, uniform among the cells at that distance (d is clamped to
    the torus diameter). Starts are uniform over the day in whole seconds,
    durations exponential with mean ``visit_duration`` (at least one second)
    and clipped at midnight. Every ``SCHOOL_STRIDE``-th cell carries
    ``is_school = 1`` so location selectors have something to match.
    """
    if cfg.location_count == 0:
        raise PopulationError("synthetic population needs at least one location")
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    W, H = cfg.grid_width, cfg.grid_height
    n, m = cfg.people_count, cfg.location_count

    home = rng.integers(0, m, size=n, dtype=np.int64)
    age = rng.integers(0, 90, size=n, dtype=np.int64)
    counts = rng.poisson(cfg.lambda_visits, size=(n, DAYS_PER_WEEK))
    total = int(counts.sum())
    person = np.repeat(np.repeat(np.arange(n, dtype=np.int64), DAYS_PER_WEEK), counts.ravel())
    dow = np.repeat(np.tile(np.arange(DAYS_PER_WEEK, dtype=np.int8), n), counts.ravel())

    dx, dy, starts = ring_offsets(W, H)
    dmax = len(starts) - 2
    hops = np.minimum(rng.poisson(cfg.lambda_hops, size=total), dmax)
    ring_size = starts[hops + 1] - starts[hops]
    pick = starts[hops] + rng.integers(0, ring_size)
    hrow, hcol = np.divmod(home[person], W)
    row = (hrow + dy[pick]) % H
    col = (hcol + dx[pick]) % W
    loc = row * W + col

    start = rng.integers(0, SECONDS_PER_DAY, size=total, dtype=np.int64)
    dur = np.maximum(1, np.rint(rng.exponential(cfg.visit_duration, size=total))) if total else np.zeros(0)
    end = np.minimum(start + dur.astype(np.int64), SECONDS_PER_DAY)

    cells = np.arange(m, dtype=np.int64)
    grid = np.column_stack(np.divmod(cells, W))
    return Population(
        np.arange(n, dtype=np.int64), age, home, cells, grid,
        person, loc, dow, start, end,
        location_attrs={"is_school": (cells % SCHOOL_STRIDE == 0).astype(np.int64)},
        geo_names=GRID_GEO,
    )


def population_from_visits(visits: Iterable[tuple[int, int, int, int, int]], num_people: int,
                           num_locations: int, age=None) -> Population:
    """Small populations for tests and examples: ids equal indices, homes at location 0."""
    rows = list(visits)
    cols = np.asarray(rows, dtype=np.int64).reshape(-1, 5) if rows else np.zeros((0, 5), np.int64)
    return Population(
        np.arange(num_people), np.zeros(num_people, np.int64) if age is None else age,
        np.zeros(num_people, np.int64), np.arange(num_locations),
        np.zeros((num_locations, 4), np.int64),
        cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], cols[:, 4],
    )

