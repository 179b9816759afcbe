import csv

import pytest

from cliqueanneal.bench import BenchCase, Bound, format_table, run_bench, run_case, suite_by_name
from cliqueanneal.cli import main
from cliqueanneal.graph import write_communities, write_edge_list
from cliqueanneal.pipeline import RunConfig, make_synthetic

RUNTIME = {"seconds", "t_avg"}


def test_empty_suite(tmp_path):
    assert run_bench([], tmp_path) == []
    assert format_table([]).count("\n") == 1
    assert (tmp_path / "bench.md").exists()
    assert list(csv.reader(open(tmp_path / "bench.csv")))[1:] == []


def test_default_suite_rows_and_files(tmp_path):
    rows = run_bench(suite_by_name("default"), tmp_path)
    by = {(r.case, r.metric): r for r in rows}
    assert by[("synth-100", "f1")].bound == ">= 0.85" and by[("synth-100", "f1")].criterion == "6"
    assert by[("synth-100", "s_avg")].bound == "<= 3" and by[("synth-100", "s_avg")].criterion == "7"
    assert all(r.passed == (r.value >= 0.85) for r in rows if r.bound == ">= 0.85")
    assert ("synth-100-np", "f1") in by
    md = (tmp_path / "bench.md").read_text()
    assert "| synth-100 | f1 |" in md
    table = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert len(table) == len(rows)


def test_bench_deterministic_except_runtime():
    case = BenchCase("small", "synth", {"n_comm": 30, "seed": 3}, [Bound("f1", ">=", 0.0, "6")], ["jaccard", "seconds"])
    a, b = run_case(case), run_case(case)
    strip = lambda rows: [(r.metric, r.value, r.passed) for r in rows if r.metric not in RUNTIME]
    assert strip(a) == strip(b)


def test_amazon_suite_skips_without_paths():
    rows = run_case(suite_by_name("amazon")[0])
    assert rows and all(r.value is None and r.passed and "skipped" in r.note for r in rows)
    with pytest.raises(ValueError):
        suite_by_name("nope")


def test_amazon_recipe_on_stand_in_files(tmp_path):
    # a synthetic stand-in for the SNAP files exercises the prep path end to end
    ds = make_synthetic(RunConfig(workers=1, n_comm=40, seed=2))
    write_edge_list(ds.graph, tmp_path / "g.txt")
    write_communities(ds.communities, tmp_path / "c.txt")
    case = suite_by_name("amazon", {"graph": tmp_path / "g.txt", "communities": tmp_path / "c.txt"})[0]
    case.overrides = {"n_sample": 30}
    rows = run_case(case)
    f1 = next(r for r in rows if r.metric == "f1")
    assert f1.value is not None and "0.9055" in f1.note and f1.bound == ""


def test_bench_cli(tmp_path, capsys):
    assert main(["bench", "--suite", "empty", "--results", str(tmp_path)]) == 0
    assert "| case |" in capsys.readouterr().out
