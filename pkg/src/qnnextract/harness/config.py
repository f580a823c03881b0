"""Experiment configuration: one JSON document, dataclass in memory."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

RR_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
SCHEMES = ("base", "qleak", "copyqnn")
DEFAULT_TASKS = ["m01", "m23", "m45", "m67"]
DESK_SIZES = {"train_size": 600, "test_size": 200, "pool_size": 200}
FULL_SIZES = {"train_size": 3000, "test_size": 1000, "pool_size": 1000}


def _victim():
    return {"epochs": 30, "batch": 32, "lr": 5e-3, "weight_decay": 1e-4, "layers": 2}


def _noise():
    # path=None selects the bundled calibration; the remaining keys override it
    return {"path": None, "gate_error_scale": None, "jitter_sigma": None, "shots": 1024}


def _query():
    return {"n": 40, "m": 5, "phase": 0.0}


def _pretrain():
    return {"epochs": 100, "batch_size": 256, "lr": 5e-3, "weight_decay": 1e-4, "lam": 5e-3,
            "augment": "jitter", "gaussian_blur": True, "qubits": 8, "layers": 4}


def _classifier():
    return {"epochs": 300, "lr": 5e-2, "weight_decay": 1e-4, "mixup_alpha": 0.2, "layers": 4,
            "logit_scale": 1.0}


def _baseline():
    return {"epochs": 100, "batch": 32, "lr": 5e-3, "weight_decay": 1e-4, "committee": 5,
            "qleak_layers": 2}


@dataclass
class ExperimentConfig:
    tasks: list = field(default_factory=lambda: list(DEFAULT_TASKS))
    # pretraining source per target task; unlisted targets use ``default_source``
    sources: dict = field(default_factory=lambda: {"m01": "m23"})
    default_source: str = "m01"
    datasets: dict = field(default_factory=lambda: {"m": "data/mnist5k"})
    desk_scale: bool = True
    victim: dict = field(default_factory=_victim)
    noise: dict = field(default_factory=_noise)
    query: dict = field(default_factory=_query)
    rr: float = 0.6
    rr_grid: list = field(default_factory=lambda: list(RR_GRID))
    rounds_grid: list = field(default_factory=lambda: [2, 4, 10, 20, 40])
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    pretrain: dict = field(default_factory=_pretrain)
    classifier: dict = field(default_factory=_classifier)
    baseline: dict = field(default_factory=_baseline)
    fluctuation_hours: list = field(default_factory=lambda: [0.0, 4.8, 9.6, 14.4, 19.2])
    out_dir: str = "runs/default"
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if not self.tasks:
            raise ValueError("tasks must be nonempty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}")
        for rr in [self.rr, *self.rr_grid]:
            if not 0.0 < float(rr) <= 1.0:
                raise ValueError(f"remember ratio {rr} outside (0, 1]")
        if int(self.query["m"]) < 2 or any(int(m) < 2 for m in self.rounds_grid):
            raise ValueError("query rounds must be >= 2")
        if int(self.query["n"]) < 1:
            raise ValueError("query data size must be >= 1")
        if self.noise.get("shots") is not None and int(self.noise["shots"]) < 1:
            raise ValueError("shots must be >= 1")
        if int(self.jobs) < 1:
            raise ValueError("jobs must be >= 1")
        for t in [*self.tasks, *self.sources.values(), self.default_source]:
            if t[:1] not in self.datasets:
                raise ValueError(f"task {t} refers to unknown dataset prefix {t[:1]!r}")

    @property
    def sizes(self) -> dict:
        return dict(DESK_SIZES if self.desk_scale else FULL_SIZES)

    def source_for(self, task: str) -> str:
        src = self.sources.get(task, self.default_source)
        if src == task:
            raise ValueError(f"pretraining source for {task} must be a different task")
        return src

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in d.items():
            default = getattr(base, k)
            # nested sections merge over their defaults so partial documents work
            merged[k] = {**default, **v} if isinstance(default, dict) and k != "sources" else v
        return cls(**merged)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(copy.deepcopy(changes))
        return ExperimentConfig(**d)


def fingerprint(*parts) -> str:
    """Short stable hash of JSON-serializable parts, used to key cached artifacts."""
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:10]
