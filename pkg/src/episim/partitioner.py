"""Static, geography-preserving partitioning of locations and people.

Locations are sorted by their geographic key (state, county, tract, block
group; or grid row, col) and cut into contiguous runs of roughly equal load,
where a location's load is its weekly visit count. Locations heavier than the
average partition load get a partition of their own; the average is
recomputed over what remains until no location exceeds it. People follow
their home location.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PartitionError(ValueError):
    pass


@dataclass
class PartitionMap:
    location_to_partition: np.ndarray
    person_to_partition: np.ndarray
    partition_loads: np.ndarray
    num_partitions: int
    average_load: float = 0.0
    heavy_locations: np.ndarray | None = None

    def locations_of(self, partition: int) -> np.ndarray:
        return np.flatnonzero(self.location_to_partition == partition)

    def people_of(self, partition: int) -> np.ndarray:
        return np.flatnonzero(self.person_to_partition == partition)

    def write_report(self, path) -> None:
        """Per-partition CSV: partition, locations, people, load."""
        locs = np.bincount(self.location_to_partition, minlength=self.num_partitions)
        people = np.bincount(self.person_to_partition, minlength=self.num_partitions)
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["partition", "locations", "people", "load"])
            for p in range(self.num_partitions):
                w.writerow([p, int(locs[p]), int(people[p]), _num(self.partition_loads[p])])


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def geo_order(geo: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
    """Indices sorting locations by their geographic key columns (then id)."""
    geo = np.asarray(geo)
    keys = [np.arange(len(geo))] if ids is None else [np.asarray(ids)]
    keys += [geo[:, c] for c in reversed(range(geo.shape[1]))]
    return np.lexsort(keys)


def assign_locations(loads, num_partitions: int, order=None, return_details: bool = False):
    """Partition index per location.

    ``loads`` are per-location loads in the caller's indexing; ``order`` is
    the geographic order to cut along (default: index order). Returns the
    partition array, or ``(array, heavy mask, final average load)`` when
    ``return_details`` is set.
    """
    loads = np.asarray(loads)
    m = len(loads)
    if num_partitions < 1:
        raise PartitionError("need at least one partition")
    if num_partitions > m:
        raise PartitionError(f"{num_partitions} partitions requested for {m} locations")
    if np.any(loads < 0):
        raise PartitionError("loads must be non-negative")
    order = np.arange(m) if order is None else np.asarray(order)
    sl = loads[order]
    integral = sl.dtype.kind in "iu" or bool(np.all(np.mod(sl, 1) == 0))
    if integral:
        sl = sl.astype(np.int64)
    out = np.empty(m, dtype=np.int64)
    heavy = np.zeros(m, dtype=bool)  # in sorted positions

    total = sl.sum()
    if total == 0:
        out[order] = np.arange(m) % num_partitions
        avg = 0.0
        return (out, np.zeros(m, bool), avg) if return_details else out

    # isolate heavy locations; the average is recomputed over the remainder
    remaining_parts = num_partitions
    remaining_load = total
    while True:
        light = ~heavy
        n_light = int(light.sum())
        if remaining_parts <= 1 or n_light <= 1:
            break
        # lambda_j > Lambda  <=>  lambda_j * parts > load (exact for integers)
        over = np.flatnonzero(light & (sl * remaining_parts > remaining_load))
        if not len(over):
            break
        # never consume the last partition while light locations would remain
        allowed = remaining_parts - 1 if n_light > len(over) else remaining_parts
        if len(over) > allowed:
            over = over[np.lexsort((over, -sl[over]))][:allowed]
        heavy[over] = True
        remaining_parts -= len(over)
        remaining_load -= sl[over].sum()
        if remaining_parts == 0:
            break

    light_pos = np.flatnonzero(~heavy)
    avg = remaining_load / remaining_parts if remaining_parts else 0.0
    # cumulative fill over light locations, in geographic order
    light_part = np.zeros(len(light_pos), dtype=np.int64)
    if len(light_pos) and remaining_parts:
        before = np.concatenate([[0], np.cumsum(sl[light_pos])[:-1]])
        if remaining_load > 0:
            if integral:
                light_part = (before * remaining_parts) // remaining_load
            else:
                light_part = np.floor(before * remaining_parts / remaining_load).astype(np.int64)
        light_part = np.minimum(light_part, remaining_parts - 1)

    # number partitions in geographic order: heavy ones in place, light runs in sequence
    label = np.empty(m, dtype=np.int64)
    label[light_pos] = light_part
    seq = np.empty(m, dtype=np.int64)
    next_id = 0
    prev_light = -1
    for pos in range(m):
        if heavy[pos]:
            seq[pos] = next_id
            next_id += 1
        else:
            if label[pos] != prev_light:
                prev_light = label[pos]
                light_id = next_id
                next_id += 1
            seq[pos] = light_id
    out[order] = seq
    heavy_mask = np.zeros(m, dtype=bool)
    heavy_mask[order] = heavy
    if return_details:
        return out, heavy_mask, float(avg)
    return out


def assign_people(home_location: np.ndarray, location_to_partition: np.ndarray,
                  person_ids=None) -> np.ndarray:
    """Each person goes to the partition that holds their home location."""
    home = np.asarray(home_location)
    loc_part = np.asarray(location_to_partition)
    bad = (home < 0) | (home >= len(loc_part))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        who = i if person_ids is None else int(np.asarray(person_ids)[i])
        raise PartitionError(f"person {who}: home location {int(home[i])} is not mapped")
    return loc_part[home].astype(np.int64)


def partition_population(pop, num_partitions: int) -> PartitionMap:
    loads = pop.visits_per_location()
    loc_part, heavy, avg = assign_locations(loads, num_partitions, geo_order(pop.geo, pop.location_ids),
                                            return_details=True)
    person_part = assign_people(pop.home, loc_part, pop.person_ids)
    part_loads = np.bincount(loc_part, weights=loads, minlength=num_partitions)
    return PartitionMap(loc_part, person_part, part_loads, num_partitions, avg, heavy)
