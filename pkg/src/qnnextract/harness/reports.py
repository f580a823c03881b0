"""Result tables, CSV round-tripping and plot-data emission."""

from __future__ import annotations

import csv
import json
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

import numpy as np

from .config import RR_GRID

MIN_VERIFIED_SEEDS = 3


@dataclass(frozen=True)
class ResultRow:
    task: str
    scheme: str
    rr: float
    rounds: int
    seed: int
    accuracy: float
    clean_fraction: float
    query_labels: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")


COLUMNS = [f.name for f in fields(ResultRow)]
_CASTS = {f.name: f.type for f in fields(ResultRow)}
_PARSE = {"str": str, "float": float, "int": int}


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def add(self, row: ResultRow) -> None:
        self.rows.append(row)

    def extend(self, rows) -> None:
        self.rows.extend(rows)

    def sorted(self) -> "ResultTable":
        return ResultTable(sorted(self.rows, key=lambda r: (r.task, r.scheme, r.rounds, r.rr, r.seed)))

    def select(self, **match) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def mean_accuracy(self, **match) -> float:
        rows = self.select(**match)
        return float(np.mean([r.accuracy for r in rows])) if rows else float("nan")

    @property
    def seeds(self) -> list:
        return sorted({r.seed for r in self.rows})

    @property
    def tasks(self) -> list:
        return sorted({r.task for r in self.rows})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        out = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                out.add(ResultRow(**{k: _PARSE[_CASTS[k]](rec[k]) for k in COLUMNS}))
        return out

    def __len__(self) -> int:
        return len(self.rows)


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else f"{x:.4f}"


def verification_status(table: ResultTable) -> str:
    return "verified" if len(table.seeds) >= MIN_VERIFIED_SEEDS else "unverified"


def rr_matrix(table: ResultTable, rr_grid=RR_GRID) -> list:
    """Rows of task, Base, QLeak, one column per RR, seed-averaged; last row is the task mean."""
    header = ["task", "Base", "QLeak"] + [f"RR={rr:g}" for rr in rr_grid]
    body = []
    for task in table.tasks:
        cells = [table.mean_accuracy(task=task, scheme="base"),
                 table.mean_accuracy(task=task, scheme="qleak")]
        cells += [table.mean_accuracy(task=task, scheme="copyqnn", rr=float(rr)) for rr in rr_grid]
        body.append([task] + cells)
    if body:
        cols = np.array([row[1:] for row in body], dtype=np.float64)
        with np.errstate(all="ignore"):
            means = [float(np.nanmean(c)) if np.any(~np.isnan(c)) else float("nan") for c in cols.T]
        body.append(["mean"] + means)
    return [header] + body


def write_rr_matrix(table: ResultTable, path, rr_grid=RR_GRID) -> None:
    status = verification_status(table)
    mat = rr_matrix(table, rr_grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(mat[0] + ["seeds", "status"])
        for row in mat[1:]:
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]] + [len(table.seeds), status])


def write_series(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def variance_histogram(scores, correct, bins=20) -> list:
    """Counts per bin for two series: correctly labeled and mislabeled samples."""
    scores = np.asarray(scores, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    hi = float(scores.max()) if scores.size and scores.max() > 0 else 1.0
    edges = np.linspace(0.0, hi, bins + 1)
    rows = []
    for name, mask in (("correct", correct), ("mislabeled", ~correct)):
        counts, _ = np.histogram(scores[mask], bins=edges)
        rows += [(name, float(edges[k]), float(edges[k + 1]), int(c)) for k, c in enumerate(counts)]
    return rows


def emit_reports(table: ResultTable, out_dir, extras: dict | None = None, rr_grid=RR_GRID) -> dict:
    """Write results.csv, the RR matrix and any plot series in ``extras``.

    ``extras`` may hold ``variance`` (list of (task, seed, score, correct)),
    ``loss_curves`` (list of (curve, task, seed, epoch, loss)) and
    ``fluctuation`` (list of (task, seed, hour, accuracy)). Returns written paths.
    """
    out = Path(out_dir)
    plots = out / "plots"
    plots.mkdir(parents=True, exist_ok=True)
    extras = extras or {}
    table = table.sorted()
    paths = {"results": out / "results.csv", "matrix": out / "table_rr.csv"}
    table.to_csv(paths["results"])
    write_rr_matrix(table, paths["matrix"], rr_grid)

    var = extras.get("variance")
    if var:
        scores = [v[2] for v in var]
        correct = [v[3] for v in var]
        paths["variance_hist"] = plots / "variance_hist.csv"
        write_series(paths["variance_hist"], ["series", "bin_left", "bin_right", "count"],
                     variance_histogram(scores, correct))
        paths["variance_points"] = plots / "variance_points.csv"
        write_series(paths["variance_points"], ["task", "seed", "score", "correct"],
                     [(t, s, float(v), int(c)) for t, s, v, c in var])
    if extras.get("loss_curves"):
        paths["loss_curves"] = plots / "loss_curves.csv"
        write_series(paths["loss_curves"], ["curve", "task", "seed", "epoch", "loss"], extras["loss_curves"])
    if extras.get("fluctuation"):
        paths["fluctuation"] = plots / "accuracy_vs_hour.csv"
        write_series(paths["fluctuation"], ["task", "seed", "hour", "accuracy"], extras["fluctuation"])

    summary = {
        "status": verification_status(table),
        "seeds": table.seeds,
        "tasks": table.tasks,
        "rows": len(table),
        "query_labels": sorted({r.query_labels for r in table.rows}),
    }
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths
