"""Command-line driver: run simulations, write epidemic curves and benchmark reports.

Outputs (in ``--out``, default ``.``):

``curve.csv``
    One row per day: ``day``, one count column per disease state, then
    ``new_infections``, ``seeded``, ``cumulative_infections``, ``exposures``,
    ``traversed_edges``. With ``--replicates k`` the files are
    ``curve_r000.csv`` ... and replicate r uses seed ``seed + r``.
``bench.json`` (with ``--bench``)
    Wall times, per-phase totals, traversed edges and TEPS.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .disease import DiseaseModelError, builtin_model_path, load_disease_model
from .engine import DayStats, RunConfig, SeedingSchedule, Simulation, default_threads
from .interventions import InterventionError, load_interventions
from .models import ContactModelParams, ModelParamError, TransmissionParams
from .partitioner import PartitionError, partition_population
from .population import (
    PopulationError, SyntheticConfig, compute_max_occupancy, generate_synthetic,
    load_population, synthetic_preset,
)
from .predicates import PredicateError

log = logging.getLogger("episim")

CURVE_TAIL = ("new_infections", "seeded", "cumulative_infections", "exposures", "traversed_edges")
CONFIG_ERRORS = (PopulationError, DiseaseModelError, InterventionError, ModelParamError,
                 PartitionError, PredicateError, ValueError, FileNotFoundError)


class ConfigError(Exception):
    pass


@dataclass
class BenchmarkReport:
    total_seconds: float
    loop_seconds: float
    days: int
    psc_seconds: float
    ecc_seconds: float
    psu_seconds: float
    traversed_edges: int
    config: dict = field(default_factory=dict)

    @property
    def mean_seconds_per_day(self) -> float:
        return self.loop_seconds / self.days if self.days else 0.0

    @property
    def teps(self) -> float:
        return self.traversed_edges / self.loop_seconds if self.loop_seconds > 0 else 0.0

    @classmethod
    def from_stats(cls, stats: Sequence[DayStats], total: float, loop: float, config=None) -> "BenchmarkReport":
        return cls(total, loop, len(stats),
                   sum(s.t_psc for s in stats), sum(s.t_ecc for s in stats), sum(s.t_psu for s in stats),
                   sum(s.traversed_edges for s in stats), dict(config or {}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_seconds_per_day"] = self.mean_seconds_per_day
        d["teps"] = self.teps
        return d


def check_stats(stats: Sequence[DayStats], num_people: int | None = None) -> None:
    """Conservation and monotone cumulative infections; raises ValueError."""
    prev = 0
    for s in stats:
        if num_people is not None and sum(s.state_counts) != num_people:
            raise ValueError(f"day {s.day}: state counts sum to {sum(s.state_counts)}, not {num_people}")
        if s.cumulative_infections < prev:
            raise ValueError(f"day {s.day}: cumulative infections decreased")
        prev = s.cumulative_infections


def write_curve(stats: Sequence[DayStats], path, state_names: Sequence[str],
                num_people: int | None = None) -> None:
    check_stats(stats, num_people)
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("day", *state_names, *CURVE_TAIL))
            for s in stats:
                if len(s.state_counts) != len(state_names):
                    raise ValueError(f"day {s.day}: {len(s.state_counts)} counts for {len(state_names)} states")
                w.writerow((s.day, *s.state_counts, s.new_infections, s.seeded,
                            s.cumulative_infections, s.exposures, s.traversed_edges))
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc


def write_report(report: BenchmarkReport, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc


def parse_synthetic(text: str, seed: int) -> SyntheticConfig:
    """A preset name or ``WxH,people,lambda_visits,lambda_hops``."""
    if "," not in text:
        return synthetic_preset(text, seed=seed)
    try:
        dims, people, lv, lh = text.split(",")
        w, h = (int(x) for x in dims.lower().split("x"))
        return SyntheticConfig(w, h, int(people), float(lv), float(lh), seed=seed)
    except ValueError:
        raise ConfigError(f"bad --synthetic {text!r}; use a preset or WxH,people,lv,lh") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="episim", description="Agent-based epidemic simulation.")
    src = p.add_argument_group("population")
    src.add_argument("--people", help="people CSV")
    src.add_argument("--locations", help="locations CSV")
    src.add_argument("--visits", help="visits CSV")
    src.add_argument("--synthetic", help="preset (10k, 1x-scaled, 2x-scaled, 4x-scaled) or WxH,people,lv,lh")
    p.add_argument("--disease", default=None, help="disease model file or bundled name (default: seir)")
    p.add_argument("--interventions", help="intervention file")
    p.add_argument("--days", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partitions", type=int, default=1)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    p.add_argument("--contact-model", default="minmax:5,40,1000", help="minmax:A,B,alpha or global:p")
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--seeding", default="2,1,10", help="count,day_from,day_to")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--bench", action="store_true", help="write bench.json")
    p.add_argument("--partition-report", help="write per-partition load CSV here")
    p.add_argument("--no-short-circuit", action="store_true", help="evaluate every location every day")
    p.add_argument("--full-broadcast", action="store_true", help="send every person's state every day")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_inputs(args):
    if args.synthetic and any((args.people, args.locations, args.visits)):
        raise ConfigError("use either --synthetic or --people/--locations/--visits")
    if args.synthetic:
        pop = generate_synthetic(parse_synthetic(args.synthetic, args.seed))
        compute_max_occupancy(pop)
    elif args.people and args.locations and args.visits:
        pop = load_population(args.people, args.locations, args.visits)
        if pop.num_visits and not pop.max_occupancy.any():
            log.info("max_occupancy missing in locations file; computing it from visits")
            compute_max_occupancy(pop)
    else:
        raise ConfigError("need --synthetic or all of --people, --locations, --visits")
    disease = args.disease or "seir"
    if not Path(disease).exists() and "/" not in disease:
        disease = builtin_model_path(disease)  # bundled model name
    model = load_disease_model(disease)
    specs = load_interventions(args.interventions) if args.interventions else []
    return pop, model, specs


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t_start = time.perf_counter()
    try:
        if args.replicates < 1:
            raise ConfigError("--replicates must be >= 1")
        pop, model, specs = _load_inputs(args)
        base = RunConfig(
            days=args.days, seed=args.seed, partitions=args.partitions,
            threads=args.threads or default_threads(),
            seeding=SeedingSchedule.parse(args.seeding),
            contact=ContactModelParams.parse(args.contact_model),
            transmission=TransmissionParams(args.tau),
            interventions=specs,
            short_circuit=not args.no_short_circuit,
            psc_mode="full" if args.full_broadcast else "delta",
        )
        pmap = partition_population(pop, base.partitions)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, *CONFIG_ERRORS) as exc:
        print(f"episim: error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.partition_report:
            pmap.write_report(args.partition_report)
        all_stats = []
        loop = 0.0
        for r in range(args.replicates):
            cfg = RunConfig(**{**base.__dict__, "seed": args.seed + r})
            sim = Simulation(pop, model, cfg, pmap)
            t0 = time.perf_counter()
            stats = sim.run()
            loop += time.perf_counter() - t0
            name = "curve.csv" if args.replicates == 1 else f"curve_r{r:03d}.csv"
            write_curve(stats, out / name, model.state_names, pop.num_people)
            all_stats.extend(stats)
        if args.bench:
            report = BenchmarkReport.from_stats(
                all_stats, time.perf_counter() - t_start, loop,
                config={"people": pop.num_people, "locations": pop.num_locations, "visits": pop.num_visits,
                        "days": args.days, "replicates": args.replicates, "threads": base.threads,
                        "partitions": base.partitions, "tau": args.tau, "contact_model": args.contact_model,
                        "short_circuit": base.short_circuit, "psc_mode": base.psc_mode})
            write_report(report, out / "bench.json")
    except Exception as exc:  # runtime failure
        log.debug("run failed", exc_info=True)
        print(f"episim: runtime error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
