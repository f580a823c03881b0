"""Command-line entry point: ``qnnextract <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .. import cleanse
from ..errors import StageError
from ..trainers import fit
from . import pipeline as pl
from .config import ExperimentConfig
from .reports import ResultTable, emit_reports

COMMANDS = ("train-victim", "query", "clean", "pretrain", "attack", "baseline", "sweep-rr",
            "sweep-rounds", "fluctuation", "report")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnnextract", description="QNN extraction experiments on a simulated noisy service")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="experiment config JSON (defaults built in)")
    p.add_argument("--seed", type=int, action="append", help="run only this seed (repeatable)")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel jobs")
    p.add_argument("--desk-scale", action=argparse.BooleanOptionalAction, default=None,
                   help="small train/test splits (default on); --no-desk-scale for 3000/1000")
    p.add_argument("--task", action="append", help="restrict to these tasks (repeatable)")
    p.add_argument("--rr", type=float, help="remember ratio for attack/clean")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed:
        changes["seeds"] = args.seed
    if args.out_dir:
        changes["out_dir"] = args.out_dir
    if args.jobs:
        changes["jobs"] = args.jobs
    if args.desk_scale is not None:
        changes["desk_scale"] = args.desk_scale
    if args.task:
        changes["tasks"] = args.task
    if args.rr is not None:
        changes["rr"] = args.rr
    return cfg.replace(**changes) if changes else cfg


def _each(cfg):
    for t in cfg.tasks:
        for s in cfg.seeds:
            yield t, s


def cmd_train_victim(cfg):
    ws = pl.Workspace(cfg)
    for t, s in _each(cfg):
        with pl.stage("train-victim"):
            v = ws.victim(t, s)
            task = ws.task(t, s)
            acc = fit.accuracy(v.predict_noiseless(fit.victim_inputs(task.test_x)), task.test_y)
        print(f"victim {t} seed {s}: noiseless test accuracy {acc:.4f}")


def cmd_query(cfg):
    ws = pl.Workspace(cfg)
    for t, s in _each(cfg):
        with pl.stage("query"):
            _, ledger = ws.query(t, s)
        print(f"query {t} seed {s}: {ledger.total_labels} labels")


def cmd_clean(cfg):
    ws = pl.Workspace(cfg)
    out = Path(cfg.out_dir) / "cleaning"
    out.mkdir(parents=True, exist_ok=True)
    n = int(cfg.query["n"])
    for t, s in _each(cfg):
        with pl.stage("clean"):
            tensor, _ = ws.query(t, s)
            truth = ws.task(t, s).pool_y[:n]
            cleanse.write_cleaning_report(out / f"{t}_s{s}_rr{cfg.rr:g}.csv", tensor, cfg.rr, truth)
            d = cleanse.clean_from_tensor(tensor, cfg.rr)
            cf_all = cleanse.clean_fraction(cleanse.derive_labels(tensor)[0], truth)
            cf = cleanse.clean_fraction(d.hard_labels, truth[d.indices])
        print(f"clean {t} seed {s}: kept {len(d)}/{n}, clean fraction {cf_all:.4f} -> {cf:.4f}")


def cmd_pretrain(cfg):
    ws = pl.Workspace(cfg)
    for src in sorted({cfg.source_for(t) for t in cfg.tasks}):
        for s in cfg.seeds:
            with pl.stage("pretrain"):
                ws.encoder(src, s)
            print(f"pretrained encoder on {src} seed {s}")


def _print_table(table: ResultTable):
    for r in table.rows:
        print(f"{r.task} {r.scheme:8s} rr={r.rr:g} m={r.rounds} seed={r.seed} acc={r.accuracy:.4f} "
              f"clean={r.clean_fraction:.4f} labels={r.query_labels}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        cfg.save(Path(cfg.out_dir) / "config.json")
        cmd = args.command
        if cmd == "train-victim":
            cmd_train_victim(cfg)
        elif cmd == "query":
            cmd_query(cfg)
        elif cmd == "clean":
            cmd_clean(cfg)
        elif cmd == "pretrain":
            cmd_pretrain(cfg)
        elif cmd == "attack":
            _print_table(pl.run_pipeline(cfg.replace(schemes=["copyqnn"])))
        elif cmd == "baseline":
            schemes = [s for s in cfg.schemes if s != "copyqnn"] or ["base", "qleak"]
            _print_table(pl.run_pipeline(cfg.replace(schemes=schemes)))
        elif cmd == "sweep-rr":
            _print_table(pl.sweep_rr(cfg))
        elif cmd == "sweep-rounds":
            table = pl.sweep_rounds(cfg)
            for m, acc in pl.rounds_means(table, cfg.rounds_grid).items():
                print(f"rounds {m}: mean copyqnn accuracy {acc:.4f}")
        elif cmd == "fluctuation":
            for t, s, h, a in pl.fluctuation(cfg):
                print(f"{t} seed {s} hour {h:5.2f}: accuracy {a:.4f}")
        elif cmd == "report":
            results = Path(cfg.out_dir) / "results.csv"
            if not results.exists():
                raise StageError("report", f"{results} not found; run attack or a sweep first")
            paths = emit_reports(ResultTable.from_csv(results), cfg.out_dir, None, cfg.rr_grid)
            print(f"wrote {paths['matrix']}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
