"""Config-driven certification runs and certified-accuracy curves.

A run certifies every point of a dataset through the classifier implied
by the config's setting (local model, denoised local model, or a remote
endpoint), streaming one JSON object per line to the result log in
input order. Logs are resumable: a run that died after k points left a
contiguous prefix behind, and rerunning completes the remainder with
identical bytes. Worker count never changes results because every input
owns its own noise stream.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .classifiers import ClassifierHandle, Denoised, LabelMap, LocalModel, Remote
from .data import Dataset, load_dataset
from .errors import ArgumentError, ConfigError, RemoteError
from .nn import load_model
from .smoothing import Certificate, SmoothingParams, certify

logger = logging.getLogger(__name__)

SETTINGS = ("whitebox", "blackbox", "no-denoiser", "remote-api")

# The remote-api setting budgets far fewer samples per point, mirroring
# metered query costs; more samples always means larger radii.
REMOTE_API_DEFAULTS = {"n0": 10, "n": 100}
LOCAL_DEFAULTS = {"n0": 100, "n": 10_000}


def _reject_unknown(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class ClassifierRef:
    model: Optional[str] = None
    endpoint: Optional[str] = None
    labelmap: Optional[str] = None
    allow_other: Optional[bool] = None
    timeout: float = 10.0

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierRef":
        _reject_unknown(data, {"model", "endpoint", "labelmap", "allow_other", "timeout"}, "classifier")
        ref = cls(**data)
        if (ref.model is None) == (ref.endpoint is None):
            raise ConfigError("classifier needs exactly one of 'model' or 'endpoint'")
        return ref


@dataclass
class ExperimentConfig:
    setting: str
    dataset: str
    classifier: ClassifierRef
    smoothing: SmoothingParams
    output_log: str
    seed: int = 0
    denoiser: Optional[str] = None
    radius_grid: Optional[list[float]] = None
    output_curve: Optional[str] = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.setting == "no-denoiser" and self.denoiser is not None:
            raise ConfigError("the no-denoiser setting forbids a denoiser checkpoint")
        if self.setting in ("blackbox", "remote-api"):
            if self.classifier.endpoint is None:
                raise ConfigError(f"the {self.setting} setting requires classifier.endpoint")
        elif self.classifier.model is None:
            raise ConfigError(f"the {self.setting} setting requires classifier.model")
        if self.setting == "remote-api" and self.classifier.labelmap is None:
            raise ConfigError("the remote-api setting requires classifier.labelmap")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _reject_unknown(
            data,
            {"setting", "dataset", "classifier", "denoiser", "smoothing", "radius_grid", "output", "seed"},
            "config",
        )
        for required in ("setting", "dataset", "classifier", "smoothing", "output"):
            if required not in data:
                raise ConfigError(f"config is missing {required!r}")
        smoothing = dict(data["smoothing"])
        _reject_unknown(smoothing, {"sigma", "n0", "n", "alpha", "batch", "seed"}, "smoothing")
        if "sigma" not in smoothing:
            raise ConfigError("smoothing.sigma is required")
        if "seed" in smoothing:
            raise ConfigError("set the top-level seed, not smoothing.seed")
        defaults = REMOTE_API_DEFAULTS if data["setting"] == "remote-api" else LOCAL_DEFAULTS
        smoothing = {**defaults, **smoothing, "seed": int(data.get("seed", 0))}
        if "batch" not in smoothing:
            smoothing["batch"] = min(256, int(smoothing["n"]))
        output = dict(data["output"])
        _reject_unknown(output, {"log", "curve"}, "output")
        if "log" not in output:
            raise ConfigError("output.log is required")
        grid = data.get("radius_grid")
        if isinstance(grid, dict):
            _reject_unknown(grid, {"max", "step"}, "radius_grid")
            grid = make_radius_grid(float(grid["max"]), float(grid["step"]))
        elif grid is not None:
            grid = [float(r) for r in grid]
        return cls(
            setting=data["setting"],
            dataset=data["dataset"],
            classifier=ClassifierRef.from_dict(dict(data["classifier"])),
            smoothing=SmoothingParams(**smoothing),
            output_log=output["log"],
            output_curve=output.get("curve"),
            seed=int(data.get("seed", 0)),
            denoiser=data.get("denoiser"),
            radius_grid=grid,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def grid(self) -> list[float]:
        if self.radius_grid is not None:
            return self.radius_grid
        return default_radius_grid(self.smoothing.sigma)


def make_radius_grid(max_radius: float, step: float) -> list[float]:
    if step <= 0 or max_radius < 0:
        raise ArgumentError("radius grid needs step > 0 and max >= 0")
    count = int(round(max_radius / step)) + 1
    return [i * step for i in range(count)]


def default_radius_grid(sigma: float) -> list[float]:
    """0 to 4*sigma in steps of sigma/8."""
    return [i * (sigma / 8.0) for i in range(33)]


def build_handle(config: ExperimentConfig, dataset: Dataset) -> ClassifierHandle:
    ref = config.classifier
    if ref.model is not None:
        base: ClassifierHandle = LocalModel(load_model(ref.model))
    else:
        allow_other = ref.allow_other
        if allow_other is None:
            allow_other = config.setting == "remote-api"
        if ref.labelmap is not None:
            label_map = LabelMap.load(ref.labelmap, allow_other=allow_other)
        else:
            label_map = LabelMap.default(dataset.num_classes, allow_other=allow_other)
        base = Remote(ref.endpoint, label_map, dataset.image_shape, timeout=ref.timeout)
    if config.denoiser is None:
        return base
    denoiser = load_model(config.denoiser)
    sidecar = Path(str(config.denoiser) + ".json")
    if sidecar.exists():
        trained_sigma = float(json.loads(sidecar.read_text())["sigma"])
        if abs(trained_sigma - config.smoothing.sigma) > 1e-12:
            raise ConfigError(
                f"denoiser was trained at sigma={trained_sigma} but certification "
                f"uses sigma={config.smoothing.sigma}; train one denoiser per noise level"
            )
    return Denoised(denoiser, base)


@dataclass
class Record:
    """One certified data point, as stored in the result log."""

    index: int
    label: int
    prediction: Optional[int]
    radius: float
    p_lower: Optional[float]
    counts_selection: list[int]
    counts_estimation: list[int]
    seed: int

    @property
    def correct(self) -> bool:
        return self.prediction is not None and self.prediction == self.label

    def to_json(self) -> str:
        return json.dumps(
            {
                "index": self.index,
                "label": self.label,
                "outcome": "abstain" if self.prediction is None else "predicted",
                "class": self.prediction,
                "radius": self.radius,
                "p_lower": self.p_lower,
                "counts": {
                    "selection": self.counts_selection,
                    "estimation": self.counts_estimation,
                },
                "seed": self.seed,
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "Record":
        data = json.loads(line)
        return cls(
            index=data["index"],
            label=data["label"],
            prediction=data["class"],
            radius=data["radius"],
            p_lower=data["p_lower"],
            counts_selection=data["counts"]["selection"],
            counts_estimation=data["counts"]["estimation"],
            seed=data["seed"],
        )

    @classmethod
    def from_certificate(cls, index: int, label: int, cert: Certificate) -> "Record":
        return cls(
            index=index,
            label=label,
            prediction=cert.prediction,
            radius=cert.radius,
            p_lower=cert.p_lower,
            counts_selection=[int(v) for v in cert.counts_selection],
            counts_estimation=[int(v) for v in cert.counts_estimation],
            seed=cert.params.seed,
        )


def load_results(path: str | Path) -> list[Record]:
    records = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(Record.from_json(line))
    return records


def resolve_workers(override: Optional[int] = None) -> int:
    if override is not None:
        return max(1, int(override))
    env = os.environ.get("DSK_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _read_resume_prefix(path: Path, config: ExperimentConfig, total: int) -> list[Record]:
    if not path.exists():
        return []
    done = load_results(path)
    for i, rec in enumerate(done):
        if rec.index != i:
            raise ConfigError(f"{path}: log is not a contiguous index prefix at line {i}")
        if rec.seed != config.seed:
            raise ConfigError(f"{path}: log seed {rec.seed} does not match config seed {config.seed}")
    if len(done) > total:
        raise ConfigError(f"{path}: log has {len(done)} entries but the dataset has {total}")
    return done


def run_certification(
    config: ExperimentConfig, workers: Optional[int] = None
) -> list[Record]:
    """Certify every dataset point, streaming an index-ordered result log.

    Results for indices already present in the log are kept (resume);
    remaining points fan out over a worker pool, and the log is written
    strictly in index order regardless of completion order. In the
    remote-api setting the run aborts on the first remote failure,
    keeping the partial prefix on disk.
    """
    dataset = load_dataset(config.dataset)
    handle = build_handle(config, dataset)
    params = config.smoothing
    log_path = Path(config.output_log)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    records = _read_resume_prefix(log_path, config, len(dataset))
    start = len(records)
    if start:
        logger.info("resuming %s at index %d", log_path, start)
    if start == len(dataset):
        return records

    worker_count = resolve_workers(workers)
    images = dataset.images

    def certify_one(i: int) -> Record:
        cert = certify(handle, images[i], params, index=i)
        return Record.from_certificate(i, int(dataset.labels[i]), cert)

    with open(log_path, "a") as log, ThreadPoolExecutor(max_workers=worker_count) as pool:
        futures = {i: pool.submit(certify_one, i) for i in range(start, len(dataset))}
        try:
            for i in range(start, len(dataset)):
                record = futures[i].result()
                log.write(record.to_json() + "\n")
                log.flush()
                records.append(record)
        except RemoteError:
            for fut in futures.values():
                fut.cancel()
            if config.setting == "remote-api":
                logger.error("remote failure; partial results kept in %s", log_path)
            raise
    return records


@dataclass(frozen=True)
class CurvePoint:
    radius: float
    certified_accuracy: float
    standard_accuracy: float


def certification_curve(records: Sequence[Record], radius_grid: Sequence[float]) -> list[CurvePoint]:
    """Certified accuracy at each grid radius: the fraction of points that
    are correctly predicted with a certified radius at least that large.
    Abstentions never count. Standard accuracy is the radius-zero value."""
    if not len(radius_grid):
        raise ArgumentError("radius grid is empty")
    if not len(records):
        raise ArgumentError("no certification results")
    correct = np.array([r.correct for r in records])
    radii = np.array([r.radius for r in records])
    standard = float(np.mean(correct))
    points = []
    for r in radius_grid:
        certified = float(np.mean(correct & (radii >= r)))
        points.append(CurvePoint(float(r), certified, standard))
    return points


def write_curve_csv(points: Sequence[CurvePoint], n: int, path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("radius,certified_accuracy,standard_accuracy,n\n")
        for p in points:
            f.write(f"{p.radius},{p.certified_accuracy},{p.standard_accuracy},{n}\n")


def write_comparison_csv(
    curves: dict[str, list[CurvePoint]], path: str | Path
) -> None:
    """Overlay named curves on a shared radius grid; the final column is the
    pointwise best envelope across curves."""
    names = list(curves)
    if not names:
        raise ArgumentError("no curves to compare")
    grids = [[p.radius for p in pts] for pts in curves.values()]
    if any(g != grids[0] for g in grids[1:]):
        raise ArgumentError("curves must share a radius grid")
    with open(path, "w") as f:
        f.write("radius," + ",".join(names) + ",best\n")
        for i, radius in enumerate(grids[0]):
            values = [curves[name][i].certified_accuracy for name in names]
            row = ",".join(str(v) for v in values)
            f.write(f"{radius},{row},{max(values)}\n")
