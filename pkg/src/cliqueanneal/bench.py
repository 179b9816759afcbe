"""Desk-scale benchmark harness with Markdown and CSV outputs."""

from __future__ import annotations

import csv
import operator
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .metrics import REFERENCE_AMAZON_F1
from .pipeline import PipelineOutput, RunConfig, make_prepared, make_synthetic, run_pipeline

OPS: dict[str, Callable[[float, float], bool]] = {">=": operator.ge, "<=": operator.le, "<": operator.lt}


@dataclass
class Bound:
    metric: str
    op: str
    value: float
    criterion: str


@dataclass
class BenchCase:
    name: str
    dataset: str  # "synth" or "prep"
    overrides: dict = field(default_factory=dict)
    bounds: list[Bound] = field(default_factory=list)
    report: list[str] = field(default_factory=list)  # metrics recorded without a bound
    paths: dict = field(default_factory=dict)


@dataclass
class BenchRow:
    case: str
    metric: str
    value: float | None
    bound: str
    criterion: str
    passed: bool
    note: str = ""


def _metrics(out: PipelineOutput) -> dict[str, float]:
    det = out.detect
    runs = det.result.runs if det.result is not None else []
    return {
        "f1": out.report.f1,
        "jaccard": out.report.jaccard,
        "onmi": out.report.onmi,
        "s_avg": det.result.avg_steps if det.result is not None else 0.0,
        "t_avg": det.seconds / len(runs) if runs else 0.0,
        "seconds": out.total_seconds,
        "n_pred": float(out.report.n_pred),
    }


def default_suite() -> list[BenchCase]:
    return [
        BenchCase(
            "synth-100", "synth",
            bounds=[
                Bound("f1", ">=", 0.85, "6"),
                Bound("jaccard", ">=", 0.75, "6"),
                Bound("seconds", "<", 300.0, "6"),
                Bound("s_avg", "<=", 3.0, "7"),
            ],
            report=["onmi", "t_avg", "n_pred"],
        ),
        BenchCase("synth-100-np", "synth", {"np_only": True}, report=["f1", "jaccard", "onmi"]),
    ]


def amazon_suite(paths: dict) -> list[BenchCase]:
    """Setting-1 recipe: filter/sample the SNAP Amazon communities, optionally
    hybridized with DBLP. Reports F1 next to the published 0.9055, no gate."""
    return [BenchCase("amazon-setting1", "prep", report=["f1", "jaccard", "onmi", "s_avg", "seconds"], paths=paths)]


def suite_by_name(name: str, paths: dict | None = None) -> list[BenchCase]:
    if name == "default":
        return default_suite()
    if name == "amazon":
        return amazon_suite(paths or {})
    if name == "empty":
        return []
    raise ValueError(f"unknown suite {name!r}")


def run_case(case: BenchCase, workers: int = 1) -> list[BenchRow]:
    cfg = RunConfig(workers=workers, **case.overrides)
    if case.dataset == "prep":
        if not (case.paths.get("graph") and case.paths.get("communities")):
            return [BenchRow(case.name, m, None, "", "9", True, "skipped: dataset paths not given") for m in case.report]
        ds = make_prepared(cfg, Path(case.paths["graph"]), Path(case.paths["communities"]), case.paths.get("graph2"))
    else:
        ds = make_synthetic(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        out = run_pipeline(ds, cfg, tmp)
    values = _metrics(out)
    rows = []
    for b in case.bounds:
        v = values[b.metric]
        rows.append(BenchRow(case.name, b.metric, v, f"{b.op} {b.value:g}", b.criterion, OPS[b.op](v, b.value)))
    for m in case.report:
        note = f"published reference {REFERENCE_AMAZON_F1}" if case.dataset == "prep" and m == "f1" else ""
        rows.append(BenchRow(case.name, m, values[m], "", "", True, note))
    return rows


def format_table(rows: list[BenchRow]) -> str:
    lines = ["| case | metric | value | bound | criterion | result | note |", "|---|---|---|---|---|---|---|"]
    for r in rows:
        val = "" if r.value is None else f"{r.value:.4f}"
        res = ("pass" if r.passed else "FAIL") if r.bound else "-"
        lines.append(f"| {r.case} | {r.metric} | {val} | {r.bound} | {r.criterion} | {res} | {r.note} |")
    return "\n".join(lines)


def run_bench(suite: list[BenchCase], results_dir: str | Path, workers: int = 1) -> list[BenchRow]:
    """Run cases serially and write ``bench.md`` and ``bench.csv``."""
    rows: list[BenchRow] = []
    for case in suite:
        rows.extend(run_case(case, workers))
    out = Path(results_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    (out / "bench.md").write_text(f"# Benchmark results ({stamp})\n\n{format_table(rows)}\n")
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["case", "metric", "value", "bound", "criterion", "passed", "note"])
        for r in rows:
            w.writerow([r.case, r.metric, "" if r.value is None else repr(r.value), r.bound, r.criterion, r.passed, r.note])
    return rows
