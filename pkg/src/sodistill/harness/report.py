"""Benchmark comparison tables: one row per run, one column per
(dataset, metric), top two entries of each column flagged."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from ..evalkit import MetricReport, PRCurve, plot_pr_curves

COLUMN_METRICS = ("S", "maxF", "meanF", "E", "MAE")
LOWER_IS_BETTER = frozenset({"MAE"})
MARK = {1: "*", 2: "+"}  # best, second best


class ReportMismatch(ValueError):
    pass


@dataclass
class ComparisonTable:
    columns: list[tuple[str, str]]  # (dataset, metric)
    rows: list[tuple[str, list[float]]]

    def ranks(self) -> list[list[int]]:
        """1 for the best value of a column, 2 for the second, 0 otherwise.

        Ties share a rank; "second" is the next distinct value.
        """
        out = [[0] * len(self.columns) for _ in self.rows]
        for j, (_, metric) in enumerate(self.columns):
            vals = sorted({vals[j] for _, vals in self.rows}, reverse=metric not in LOWER_IS_BETTER)
            for i, (_, row) in enumerate(self.rows):
                pos = vals.index(row[j])
                out[i][j] = pos + 1 if pos < 2 else 0
        return out

    def write_csv(self, path) -> None:
        ranks = self.ranks()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            names = [f"{d}:{m}" for d, m in self.columns]
            wr.writerow(["run"] + names + [f"{n}:rank" for n in names])
            for (run, vals), rk in zip(self.rows, ranks):
                wr.writerow([run] + [repr(float(v)) for v in vals] + rk)

    def format(self, digits: int = 3) -> str:
        ranks = self.ranks()
        header = ["run"] + [f"{d} {m}" for d, m in self.columns]
        body = []
        for (run, vals), rk in zip(self.rows, ranks):
            cells = [f"{v:.{digits}f}".lstrip("0") if 0 <= v < 1 else f"{v:.{digits}f}" for v in vals]
            body.append([run] + [c + MARK.get(r, " ") for c, r in zip(cells, rk)])
        widths = [max(len(r[k]) for r in [header] + body) for k in range(len(header))]

        def line(cells):
            return "  ".join(c.ljust(w) if k == 0 else c.rjust(w) for k, (c, w) in enumerate(zip(cells, widths)))

        rule = "-" * len(line(header))
        return "\n".join([line(header), rule] + [line(r) for r in body] + [rule, "* best  + second best"]) + "\n"


def compare(runs: Mapping[str, Sequence[MetricReport]], metrics: Sequence[str] = COLUMN_METRICS) -> ComparisonTable:
    """Tabulate runs; every run must report the same datasets."""
    if not runs:
        raise ValueError("at least one report is required")
    layouts = {run: [r.dataset for r in reps] for run, reps in runs.items()}
    first_run, first = next(iter(layouts.items()))
    for run, layout in layouts.items():
        if layout != first:
            raise ReportMismatch(f"column mismatch: {run} reports {layout}, {first_run} reports {first}")
    columns = [(ds, m) for ds in first for m in metrics]
    rows = []
    for run, reps in runs.items():
        rows.append((run, [float(getattr(r, m)) for r in reps for m in metrics]))
    return ComparisonTable(columns, rows)


def load_eval_report(path) -> tuple[str, list[MetricReport]]:
    blob = json.loads(Path(path).read_text())
    return blob["run"], [MetricReport.from_json(d) for d in blob["datasets"]]


def _curves_beside(path: Path, datasets) -> dict[str, PRCurve]:
    found = {}
    for ds in datasets:
        p = path.with_name(f"{path.stem}.{ds}.pr.csv")
        if p.exists():
            found[ds] = PRCurve.read_csv(p)
    return found


def build_report(report_paths: Sequence, out_dir) -> ComparisonTable:
    """Write ``table.csv``, ``table.txt`` and ``pr_<dataset>.png`` for the
    eval outputs in `report_paths` (JSON files from ``eval``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs: dict[str, list[MetricReport]] = {}
    curves: dict[str, dict[str, PRCurve]] = {}
    for p in map(Path, report_paths):
        run, reps = load_eval_report(p)
        if run in runs:
            run = f"{run}@{p.parent.name}"
        runs[run] = reps
        curves[run] = _curves_beside(p, [r.dataset for r in reps])
    table = compare(runs)
    table.write_csv(out / "table.csv")
    (out / "table.txt").write_text(table.format())
    for ds in dict.fromkeys(d for d, _ in table.columns):
        have = {run: c for run, c in curves.items() if ds in c}
        if have:
            plot_pr_curves(have, out / f"pr_{ds}.png", dataset=ds)
    return table
