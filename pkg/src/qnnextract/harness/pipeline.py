"""End-to-end orchestration: victim -> queries -> cleaning -> substitutes.

Artifacts are cached under ``out_dir`` keyed by a fingerprint of the
config slice that produced them, so stage subcommands can be chained and
reruns with the same config reuse earlier work.
"""

from __future__ import annotations

import json
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .. import cleanse, datapipe
from .. import noisemodel as nm
from .. import qnnaas as qa
from ..errors import StageError
from ..simcore import load_circuit, save_circuit
from ..trainers import fit
from ..trainers.barlow import BarlowConfig
from .config import ExperimentConfig, fingerprint
from .reports import ResultRow, ResultTable, emit_reports, write_series


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure is tagged with its stage
        raise StageError(name, exc) from exc


def _atomic_write(path: Path, write) -> None:
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    write(tmp)
    os.replace(tmp, path)


def _find_idx(directory: Path, kind: str) -> list:
    pats = {"images": "*images*idx3*", "labels": "*labels*idx1*"}
    return sorted(p for p in directory.glob(pats[kind]) if not p.name.endswith(".tmp"))


_DATA_CACHE: dict = {}


def load_dataset(directory) -> tuple[np.ndarray, np.ndarray]:
    """All IDX image/label pairs in ``directory``, concatenated in name order."""
    directory = Path(directory)
    key = str(directory.resolve())
    if key not in _DATA_CACHE:
        imgs, labs = _find_idx(directory, "images"), _find_idx(directory, "labels")
        if not imgs or len(imgs) != len(labs):
            raise FileNotFoundError(f"no matching IDX image/label files in {directory}")
        parts = [datapipe.read_idx(i, l) for i, l in zip(imgs, labs)]
        _DATA_CACHE[key] = (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    return _DATA_CACHE[key]


class Workspace:
    """Stage runner bound to one config and output directory."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = Path(cfg.out_dir)
        for sub in ("victims", "queries", "encoders", "logs", "substitutes"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- data ---------------------------------------------------------------
    def task(self, name: str, seed: int) -> datapipe.BinaryTask:
        prefix, a, b = datapipe.parse_task_name(name)
        images, labels = load_dataset(self.cfg.datasets[prefix])
        return datapipe.make_binary_task(images, labels, a, b, seed=seed, name=name, **self.cfg.sizes)

    def _data_key(self, name):
        return [self.cfg.datasets[name[0]], self.cfg.sizes]

    # -- victim -------------------------------------------------------------
    def victim(self, name: str, seed: int):
        v = self.cfg.victim
        fp = fingerprint(self._data_key(name), v, seed)
        path = self.root / "victims" / f"{name}_s{seed}_{fp}.json"
        if path.exists():
            return qa.VictimModel.load(path)
        task = self.task(name, seed)
        log = fit.TrainLog()
        model = fit.train_victim(task, epochs=v["epochs"], batch=v["batch"], lr=v["lr"],
                                 wd=v["weight_decay"], seed=seed, num_layers=v["layers"], log=log)
        log.to_csv(self.root / "logs" / f"victim_{name}_s{seed}.csv")
        _atomic_write(path, model.save)
        return model

    # -- noise --------------------------------------------------------------
    def schedule(self, seed: int) -> nm.NoiseSchedule:
        n = self.cfg.noise
        raw = nm.default_schedule_config() if n.get("path") is None else json.loads(Path(n["path"]).read_text())
        if n.get("gate_error_scale") is not None:
            raw["gate_error_scale"] = float(n["gate_error_scale"])
        return nm.schedule_from_config(raw, num_qubits=4, jitter_sigma=n.get("jitter_sigma"), seed=seed)

    # -- queries ------------------------------------------------------------
    def query(self, name: str, seed: int, m: int | None = None):
        q = self.cfg.query
        m = int(q["m"] if m is None else m)
        fp = fingerprint(self._data_key(name), self.cfg.victim, self.cfg.noise, q["n"], q["phase"], m, seed)
        base = self.root / "queries" / f"{name}_s{seed}_m{m}_{fp}"
        npz, led = base.with_suffix(".npz"), base.with_suffix(".ledger.csv")
        if npz.exists() and led.exists():
            return qa.QueryTensor.load(npz), qa.QueryLedger.from_csv(led)
        victim = self.victim(name, seed)
        task = self.task(name, seed)
        xs = fit.victim_inputs(task.pool_x[: int(q["n"])])
        ledger = qa.QueryLedger()
        tensor = qa.multi_round_query(victim, xs, m, self.schedule(seed), self.cfg.noise.get("shots"),
                                      ledger, phase=float(q["phase"]))
        _atomic_write(led, ledger.to_csv)

        def _save(p):
            with open(p, "wb") as fh:
                tensor.save(fh)

        _atomic_write(npz, _save)
        return tensor, ledger

    # -- contrastive encoder -------------------------------------------------
    def encoder(self, source: str, seed: int):
        p = self.cfg.pretrain
        fp = fingerprint(self._data_key(source), p, seed)
        path = self.root / "encoders" / f"{source}_s{seed}_{fp}.json"
        hist_path = self.root / "logs" / f"pretrain_{source}_s{seed}.csv"
        if path.exists():
            return load_circuit(path)[0]
        task = self.task(source, seed)
        images = fit.substitute_inputs(np.concatenate([task.train_x, task.pool_x]))
        cfg = BarlowConfig(lam=p["lam"], batch_size=p["batch_size"], lr=p["lr"],
                           weight_decay=p["weight_decay"], epochs=p["epochs"])
        aug = datapipe.AugmentConfig(method=p["augment"], gaussian_blur=p["gaussian_blur"], rng_seed=seed)
        log = fit.TrainLog()
        qenc, _ = fit.pretrain_qenc(images, cfg, aug, seed=seed, num_qubits=p["qubits"],
                                    num_layers=p["layers"], log=log)
        log.to_csv(hist_path)
        _atomic_write(path, lambda q: save_circuit(qenc, q, frozen=True, source=source))
        return qenc


# --- one (task, seed) job ------------------------------------------------------

def _read_log(path) -> list:
    if not Path(path).exists():
        return []
    rows = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            e, loss = line.split(",")[:2]
            rows.append((int(e), float(loss)))
    return rows


def run_task(cfg: ExperimentConfig, task_name: str, seed: int, rr_list, m: int | None = None) -> dict:
    """Full pipeline for one task and seed; returns result rows and plot series."""
    ws = Workspace(cfg)
    m = int(cfg.query["m"] if m is None else m)
    n = int(cfg.query["n"])
    rows, curves = [], []
    with stage("load-data"):
        task = ws.task(task_name, seed)
        test_v = fit.victim_inputs(task.test_x)
        test_s = fit.substitute_inputs(task.test_x)
        truth = task.pool_y[:n]
    with stage("train-victim"):
        ws.victim(task_name, seed)
    with stage("query"):
        tensor, ledger = ws.query(task_name, seed, m)
        labels_used = ledger.total_labels
        if labels_used != n * m:
            raise RuntimeError(f"ledger holds {labels_used} labels, expected {n * m}")
    with stage("clean"):
        hard, soft = cleanse.derive_labels(tensor)
        scores = cleanse.variance_array(tensor)
        variance = [(task_name, seed, float(s), bool(h == t)) for s, h, t in zip(scores, hard, truth)]
        full_clean = cleanse.clean_fraction(hard, truth)
    bcfg = cfg.baseline
    xv = fit.victim_inputs(task.pool_x[:n])
    if "base" in cfg.schemes:
        with stage("baseline-base"):
            model = fit.train_base(xv, hard, seed=seed, epochs=bcfg["epochs"], batch=bcfg["batch"],
                                   lr=bcfg["lr"], wd=bcfg["weight_decay"])
            acc = fit.accuracy(model.predict(test_v), task.test_y)
            rows.append(ResultRow(task_name, "base", 1.0, m, seed, acc, full_clean, labels_used))
    if "qleak" in cfg.schemes:
        with stage("baseline-qleak"):
            model = fit.train_qleak(xv, hard, seed=seed, committee=bcfg["committee"],
                                    num_layers=bcfg["qleak_layers"], epochs=bcfg["epochs"],
                                    batch=bcfg["batch"], lr=bcfg["lr"], wd=bcfg["weight_decay"])
            acc = fit.accuracy(model.predict(test_v), task.test_y)
            rows.append(ResultRow(task_name, "qleak", 1.0, m, seed, acc, full_clean, labels_used))
    if "copyqnn" in cfg.schemes:
        source = cfg.source_for(task_name)
        with stage("pretrain"):
            qenc = ws.encoder(source, seed)
        curves += [("pretrain", source, seed, e, l)
                   for e, l in _read_log(ws.root / "logs" / f"pretrain_{source}_s{seed}.csv")]
        xs = fit.substitute_inputs(task.pool_x[:n])
        c = cfg.classifier
        for rr in rr_list:
            with stage("attack"):
                cleaned = cleanse.clean_from_tensor(tensor, float(rr), xs)
                sub = fit.new_substitute(qenc.copy(), None, seed=seed, num_layers=c["layers"])
                sub.logit_scale = float(c["logit_scale"])
                log = fit.TrainLog()
                fit.train_classifier(sub, cleaned.images, cleaned.soft_labels, cleaned.hard_labels,
                                     epochs=c["epochs"], lr=c["lr"], wd=c["weight_decay"],
                                     mixup_alpha=c["mixup_alpha"], seed=seed, log=log)
                acc = fit.accuracy(sub.predict(test_s), task.test_y)
                cf = cleanse.clean_fraction(cleaned.hard_labels, truth[cleaned.indices])
                rows.append(ResultRow(task_name, "copyqnn", float(rr), m, seed, acc, cf, labels_used))
                if float(rr) == float(cfg.rr):
                    sub.save(ws.root / "substitutes" / f"{task_name}_s{seed}_m{m}_rr{rr:g}")
                    curves += [(f"classifier_rr{rr:g}", task_name, seed, e, l) for e, l, *_ in log.rows]
    curves += [("victim", task_name, seed, e, l)
               for e, l in _read_log(ws.root / "logs" / f"victim_{task_name}_s{seed}.csv")]
    return {"rows": rows, "variance": variance, "loss_curves": curves}


def _job(payload):
    cfg_dict, kind, args = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        if kind == "encoder":
            Workspace(cfg).encoder(*args)
            return {"ok": True}
        if kind == "victim":
            Workspace(cfg).victim(*args)
            return {"ok": True}
        return {"ok": True, **run_task(cfg, *args)}
    except StageError as exc:
        return {"ok": False, "stage": exc.stage, "error": repr(exc.cause), "trace": traceback.format_exc(),
                "job": [kind, *map(str, args)]}
    except Exception as exc:  # noqa: BLE001
        name = "pretrain" if kind == "encoder" else kind
        return {"ok": False, "stage": name, "error": repr(exc), "trace": traceback.format_exc(),
                "job": [kind, *map(str, args)]}


def _map(jobs: int, payloads: list) -> list:
    if jobs <= 1 or len(payloads) <= 1:
        return [_job(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, payloads))


def _raise_failures(cfg, results) -> None:
    failures = [r for r in results if not r["ok"]]
    if not failures:
        return
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "errors.json").write_text(json.dumps(failures, indent=2) + "\n")
    first = failures[0]
    raise StageError(first["stage"], f"{first['error']} (job {' '.join(first['job'])}; see errors.json)")


def run_jobs(cfg: ExperimentConfig, rr_list, rounds=None) -> tuple[ResultTable, dict]:
    """Every (task, seed[, rounds]) job; encoders are pretrained once up front."""
    cfg_dict = cfg.to_dict()
    rounds = [int(cfg.query["m"])] if rounds is None else [int(m) for m in rounds]
    if "copyqnn" in cfg.schemes:
        enc_jobs = sorted({(cfg.source_for(t), s) for t in cfg.tasks for s in cfg.seeds})
        _raise_failures(cfg, _map(cfg.jobs, [(cfg_dict, "encoder", j) for j in enc_jobs]))
    payloads = [(cfg_dict, "task", (t, s, list(rr_list), m))
                for m in rounds for t in cfg.tasks for s in cfg.seeds]
    results = _map(cfg.jobs, payloads)
    table = ResultTable()
    extras = {"variance": [], "loss_curves": []}
    for r in results:
        if r["ok"]:
            table.extend(r["rows"])
            if r["rows"] and r["rows"][0].rounds == int(cfg.query["m"]):
                extras["variance"] += r["variance"]
                extras["loss_curves"] += r["loss_curves"]
    _raise_failures(cfg, results)
    return table.sorted(), extras


def _key(r: ResultRow):
    return (r.task, r.scheme, r.rr, r.rounds, r.seed)


def merge_results(table: ResultTable, path) -> ResultTable:
    """``table`` plus rows of an existing results file that ``table`` does not supersede."""
    path = Path(path)
    if not path.exists():
        return table
    fresh = {_key(r) for r in table.rows}
    old = [r for r in ResultTable.from_csv(path).rows if _key(r) not in fresh]
    return ResultTable(old + table.rows).sorted()


def run_pipeline(cfg: ExperimentConfig, rr_list=None, emit=True) -> ResultTable:
    """Victim -> query -> clean -> pretrain -> transfer, plus baselines, for every task and seed.

    With ``emit`` the reports are rewritten; rows already in ``results.csv``
    from other schemes or ratios are kept.
    """
    rr_list = [cfg.rr] if rr_list is None else rr_list
    table, extras = run_jobs(cfg, rr_list)
    if emit:
        emit_reports(merge_results(table, Path(cfg.out_dir) / "results.csv"), cfg.out_dir, extras,
                     cfg.rr_grid)
    return table


def sweep_rr(cfg: ExperimentConfig, emit=True) -> ResultTable:
    return run_pipeline(cfg, cfg.rr_grid, emit)


def sweep_rounds(cfg: ExperimentConfig, rounds_grid=None, emit=True) -> ResultTable:
    """One pipeline per query-round count, data size fixed."""
    grid = cfg.rounds_grid if rounds_grid is None else rounds_grid
    table, extras = run_jobs(cfg, [cfg.rr], grid)
    if emit:
        emit_reports(table, cfg.out_dir, extras, cfg.rr_grid)
        write_rounds_summary(table, Path(cfg.out_dir) / "rounds_summary.csv", grid)
    return table


def rounds_means(table: ResultTable, grid, scheme="copyqnn") -> dict:
    return {int(m): table.mean_accuracy(scheme=scheme, rounds=int(m)) for m in grid}


def write_rounds_summary(table: ResultTable, path, grid) -> None:
    with open(path, "w") as fh:
        fh.write("scheme,rounds,mean_accuracy,jobs\n")
        for scheme in sorted({r.scheme for r in table.rows}):
            for m in grid:
                sel = table.select(scheme=scheme, rounds=int(m))
                if sel:
                    fh.write(f"{scheme},{int(m)},{np.mean([r.accuracy for r in sel])!r},{len(sel)}\n")


def fluctuation(cfg: ExperimentConfig, hours=None, emit=True) -> list:
    """Noiseless-trained victim accuracy across the day (analytic-mode noise)."""
    hours = cfg.fluctuation_hours if hours is None else hours
    ws = Workspace(cfg)
    series = []
    for name in cfg.tasks:
        for seed in cfg.seeds:
            with stage("fluctuation"):
                task = ws.task(name, seed)
                victim = ws.victim(name, seed)
                accs = qa.fluctuation_study(victim, fit.victim_inputs(task.test_x), task.test_y,
                                            ws.schedule(seed), hours)
                series += [(name, seed, float(h), float(a)) for h, a in zip(hours, accs)]
    if emit:
        plots = Path(cfg.out_dir) / "plots"
        plots.mkdir(parents=True, exist_ok=True)
        write_series(plots / "accuracy_vs_hour.csv", ["task", "seed", "hour", "accuracy"], series)
    return series
