import csv
import json
from pathlib import Path

import pytest

from episim.cli import BenchmarkReport, main, write_curve
from episim.engine import DayStats

SAMPLE = Path(__file__).resolve().parents[1] / "src" / "episim" / "data" / "sample"
DATA = SAMPLE.parent


def _run(tmp_path, *extra, name="out"):
    out = tmp_path / name
    rc = main(["--synthetic", "20x20,800,4,2", "--threads", "1", "--out", str(out), *extra])
    return rc, out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_zero_days_header_only(tmp_path):
    rc, out = _run(tmp_path, "--days", "0")
    assert rc == 0
    rows = _rows(out / "curve.csv")
    assert rows == [["day", "S", "E", "I", "R", "new_infections", "seeded",
                     "cumulative_infections", "exposures", "traversed_edges"]]


def test_three_days_and_conservation(tmp_path):
    rc, out = _run(tmp_path, "--days", "3")
    assert rc == 0
    rows = _rows(out / "curve.csv")
    assert len(rows) == 4
    for r in rows[1:]:
        assert sum(int(x) for x in r[1:5]) == 800


def test_same_seed_identical_files(tmp_path):
    _, a = _run(tmp_path, "--days", "12", "--seed", "3", name="a")
    _, b = _run(tmp_path, "--days", "12", "--seed", "3", "--partitions", "3", name="b")
    assert (a / "curve.csv").read_bytes() == (b / "curve.csv").read_bytes()


def test_bench_report(tmp_path):
    rc, out = _run(tmp_path, "--days", "5", "--bench")
    assert rc == 0
    rep = json.loads((out / "bench.json").read_text())
    assert rep["days"] == 5
    assert rep["teps"] == rep["traversed_edges"] / rep["loop_seconds"]
    assert rep["mean_seconds_per_day"] == pytest.approx(rep["loop_seconds"] / 5)
    edges = sum(int(r[-1]) for r in _rows(out / "curve.csv")[1:])
    assert edges == rep["traversed_edges"]


def test_teps_exact():
    r = BenchmarkReport(10.0, 4.0, 2, 0.1, 3.0, 0.5, 1000)
    assert r.teps == 250.0 and r.mean_seconds_per_day == 2.0
    assert BenchmarkReport(1.0, 0.0, 0, 0, 0, 0, 5).teps == 0.0


def test_replicates(tmp_path):
    rc, out = _run(tmp_path, "--days", "4", "--replicates", "3")
    assert rc == 0
    names = sorted(p.name for p in out.glob("curve*.csv"))
    assert names == ["curve_r000.csv", "curve_r001.csv", "curve_r002.csv"]
    _, single = _run(tmp_path, "--days", "4", "--seed", "2", name="s")
    assert (single / "curve.csv").read_bytes() == (out / "curve_r002.csv").read_bytes()


def test_partition_report(tmp_path):
    rep = tmp_path / "parts.csv"
    rc, _ = _run(tmp_path, "--days", "1", "--partitions", "4", "--partition-report", str(rep))
    assert rc == 0
    rows = _rows(rep)
    assert rows[0] == ["partition", "locations", "people", "load"]
    assert len(rows) == 5
    assert sum(int(r[1]) for r in rows[1:]) == 400


def test_config_errors_exit_2(tmp_path, capsys):
    assert _run(tmp_path, "--days", "1", "--contact-model", "bogus:1")[0] == 2
    assert main(["--synthetic", "nope", "--out", str(tmp_path)]) == 2
    assert main(["--out", str(tmp_path)]) == 2
    assert _run(tmp_path, "--disease", str(tmp_path / "missing.disease"))[0] == 2
    assert _run(tmp_path, "--replicates", "0")[0] == 2
    assert "error" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc = main(["--synthetic", "10x10,100,3,2", "--days", "1", "--threads", "1",
               "--out", str(tmp_path), "--partition-report", str(blocker / "x.csv")])
    assert rc == 1


def test_sample_dataset_with_interventions(tmp_path):
    rc = main(["--people", str(SAMPLE / "people.csv"), "--locations", str(SAMPLE / "locations.csv"),
               "--visits", str(SAMPLE / "visits.csv"), "--interventions", str(DATA / "vaccination.ivn"),
               "--days", "20", "--seeding", "1,1,1", "--threads", "1", "--out", str(tmp_path)])
    assert rc == 0
    assert len(_rows(tmp_path / "curve.csv")) == 21


def test_writer_rejects_violations(tmp_path):
    ok = DayStats(1, (9, 1), 1, 1, 1, 1, 0, 0, 0, 0, 0.0, 0.0, 0.0)
    write_curve([ok], tmp_path / "ok.csv", ["S", "I"], 10)
    with pytest.raises(ValueError):
        write_curve([ok], tmp_path / "bad.csv", ["S", "I"], 11)
    back = DayStats(2, (10, 0), 0, 0, 0, 0, 0, 0, 0, 0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        write_curve([ok, back], tmp_path / "bad.csv", ["S", "I"], 10)


def test_bundled_disease_name(tmp_path):
    rc, out = _run(tmp_path, "--days", "2", "--disease", "sir")
    assert rc == 0
    assert _rows(out / "curve.csv")[0][1:4] == ["S", "I", "R"]
