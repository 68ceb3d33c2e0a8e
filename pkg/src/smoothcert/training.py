"""Denoiser training objectives and surrogate-classifier construction.

Four ways to fit a denoiser for a given noise level: plain
reconstruction (mse), cross-entropy against a frozen classifier's own
clean-input labels (stab), cross-entropy against true labels (clf), and
fine-tuning an mse checkpoint with the stability objective
(stab_from_mse). Target classifiers are never modified: gradients flow
through them into the denoiser only.

Per-epoch noise comes from a counter-based stream keyed by the epoch,
so every epoch sees fresh draws, every example's noise is independent
of batching, and (dataset, plan, seed) fully determine the result.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .classifiers import LocalModel
from .errors import CheckpointError, ConfigError, DataError
from .nn import (
    Model,
    OptimizerSpec,
    build_classifier,
    build_denoiser,
    cross_entropy_loss,
    load_model,
    make_optimizer,
    mse_loss,
    save_model,
)

logger = logging.getLogger(__name__)

OBJECTIVES = ("mse", "stab", "clf", "stab_from_mse")

# Scaled-down epoch budgets; the full-size recipe trains far longer but
# the shape of the schedule is preserved (Adam phase, then SGD with
# factor-10 drops, proportional switch point).
DEFAULT_EPOCHS = {"mse": 30, "stab": 60, "clf": 60, "stab_from_mse": 10}


def default_optimizer(objective: str) -> OptimizerSpec:
    if objective == "mse":
        return OptimizerSpec(kind="adam", lr=1e-3)
    if objective in ("stab", "clf"):
        return OptimizerSpec(
            kind="adam_then_sgd", lr=1e-3, sgd_lr=1e-4, switch_epoch=5, drop_epochs=(20, 40)
        )
    if objective == "stab_from_mse":
        return OptimizerSpec(kind="adam", lr=1e-4)
    raise ConfigError(f"unknown objective {objective!r}")


@dataclass
class TrainPlan:
    objective: str
    sigma: float
    epochs: int | None = None
    optimizer: OptimizerSpec | dict | None = None
    batch_size: int = 64
    init_checkpoint: str | None = None
    seed: int = 0
    denoiser_hidden: int = 16
    denoiser_depth: int = 4

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.objective]
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.objective == "stab_from_mse" and not self.init_checkpoint:
            raise ConfigError("stab_from_mse requires init_checkpoint")

    def make_optimizer(self):
        spec = self.optimizer if self.optimizer is not None else default_optimizer(self.objective)
        return make_optimizer(spec)


@dataclass
class PseudoLabelCache:
    """Class indices assigned by each frozen classifier to the clean
    training inputs; computed once, then read-only."""

    labels: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def build(cls, surrogates: Sequence[LocalModel], images: np.ndarray) -> "PseudoLabelCache":
        return cls([s.classify(images) for s in surrogates])

    def for_surrogate(self, i: int) -> np.ndarray:
        return self.labels[i]


def _require_nonempty(images: np.ndarray) -> None:
    if len(images) == 0:
        raise DataError("training dataset is empty")


def _epoch_noise(seed: int, epoch: int, shape: tuple[int, ...], count: int) -> np.ndarray:
    return rng.noise_stream(seed, rng.DOMAIN_TRAIN_NOISE, epoch).normal(0, count, shape)


def _check_surrogates(surrogates: Sequence[LocalModel]) -> list[LocalModel]:
    if not surrogates:
        raise ConfigError("stability/classification objectives need at least one surrogate")
    for s in surrogates:
        if not isinstance(s, LocalModel):
            raise ConfigError(
                "surrogates must be differentiable local models; remote handles have no gradients"
            )
    return list(surrogates)


def _batches(n: int, batch_size: int, perm: np.ndarray):
    for lo in range(0, n, batch_size):
        yield perm[lo : lo + batch_size]


def train_mse(dataset, plan: TrainPlan) -> Model:
    """Fit a denoiser by reconstruction of clean images from noisy ones."""
    images = np.asarray(dataset.images, dtype=np.float64)
    _require_nonempty(images)
    n, channels, height, width = images.shape
    denoiser = _initial_denoiser(plan, channels, height, width)
    opt = plan.make_optimizer()
    shuffle = rng.generator(plan.seed, rng.DOMAIN_SHUFFLE)
    for epoch in range(plan.epochs):
        opt.set_epoch(epoch)
        noise = _epoch_noise(plan.seed, epoch, images.shape[1:], n)
        perm = shuffle.permutation(n)
        total, seen = 0.0, 0
        for idx in _batches(n, plan.batch_size, perm):
            clean = images[idx]
            out = denoiser.forward(clean + plan.sigma * noise[idx], record=True)
            loss, grad = mse_loss(out, clean)
            denoiser.backward(grad)
            opt.step(denoiser)
            total += loss * len(idx)
            seen += len(idx)
        logger.info("mse epoch %d/%d loss %.6f", epoch + 1, plan.epochs, total / seen)
    return denoiser


def _initial_denoiser(plan: TrainPlan, channels: int, height: int, width: int) -> Model:
    if plan.init_checkpoint:
        model, meta = load_checkpoint(plan.init_checkpoint)
        if abs(float(meta["sigma"]) - plan.sigma) > 1e-12:
            raise CheckpointError(
                f"checkpoint was trained at sigma={meta['sigma']}, plan wants sigma={plan.sigma}"
            )
        return model
    return build_denoiser(
        channels, height, width, hidden=plan.denoiser_hidden, depth=plan.denoiser_depth, seed=plan.seed
    )


def _train_through_classifiers(
    dataset, plan: TrainPlan, surrogates: Sequence[LocalModel], label_sets: list[np.ndarray]
) -> Model:
    images = np.asarray(dataset.images, dtype=np.float64)
    _require_nonempty(images)
    n, channels, height, width = images.shape
    denoiser = _initial_denoiser(plan, channels, height, width)
    opt = plan.make_optimizer()
    shuffle = rng.generator(plan.seed, rng.DOMAIN_SHUFFLE)
    batch_counter = 0
    for epoch in range(plan.epochs):
        opt.set_epoch(epoch)
        noise = _epoch_noise(plan.seed, epoch, images.shape[1:], n)
        perm = shuffle.permutation(n)
        total, seen = 0.0, 0
        for idx in _batches(n, plan.batch_size, perm):
            surrogate_i = batch_counter % len(surrogates)
            batch_counter += 1
            surrogate = surrogates[surrogate_i]
            labels = label_sets[surrogate_i][idx]
            noisy = images[idx] + plan.sigma * noise[idx]
            denoised = denoiser.forward(noisy, record=True)
            logits = surrogate.model.forward(surrogate.normalize(denoised), record=True)
            loss, d_logits = cross_entropy_loss(logits, labels)
            d_normalized = surrogate.model.backward(d_logits)
            surrogate.model.zero_grads()  # frozen: gradients pass through only
            d_denoised = d_normalized / surrogate.std[:, None, None]
            denoiser.backward(d_denoised)
            opt.step(denoiser)
            total += loss * len(idx)
            seen += len(idx)
        logger.info(
            "%s epoch %d/%d loss %.6f", plan.objective, epoch + 1, plan.epochs, total / seen
        )
    return denoiser


def train_stab(dataset, plan: TrainPlan, surrogates: Sequence[LocalModel]) -> Model:
    """Stability objective: match each frozen classifier's clean-input labels
    on denoised noisy inputs. Labels come from a pseudo-label cache computed
    once on the clean images."""
    surrogates = _check_surrogates(surrogates)
    images = np.asarray(dataset.images, dtype=np.float64)
    _require_nonempty(images)
    cache = PseudoLabelCache.build(surrogates, images)
    return _train_through_classifiers(dataset, plan, surrogates, cache.labels)


def train_clf(dataset, plan: TrainPlan, surrogates: Sequence[LocalModel]) -> Model:
    """Classification objective: as train_stab but with the dataset's true labels."""
    surrogates = _check_surrogates(surrogates)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    return _train_through_classifiers(dataset, plan, surrogates, [labels] * len(surrogates))


def finetune_stab_from_mse(dataset, plan: TrainPlan, surrogates: Sequence[LocalModel]) -> Model:
    """Fine-tune a reconstruction-trained checkpoint with the stability
    objective at the same noise level (smaller learning rates by default)."""
    if plan.objective != "stab_from_mse":
        raise ConfigError("finetune_stab_from_mse requires objective='stab_from_mse'")
    return train_stab(dataset, plan, surrogates)


def train_denoiser(dataset, plan: TrainPlan, surrogates: Sequence[LocalModel] = ()) -> Model:
    """Dispatch on plan.objective."""
    if plan.objective == "mse":
        return train_mse(dataset, plan)
    if plan.objective == "stab":
        return train_stab(dataset, plan, surrogates)
    if plan.objective == "clf":
        return train_clf(dataset, plan, surrogates)
    return finetune_stab_from_mse(dataset, plan, surrogates)


def train_classifier(
    dataset,
    widths: tuple[int, ...] = (16, 32),
    epochs: int = 30,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
) -> Model:
    """Standard cross-entropy training of a desk-scale classifier on clean images."""
    images = np.asarray(dataset.images, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    _require_nonempty(images)
    n, channels, height, width = images.shape
    model = build_classifier(channels, height, width, dataset.num_classes, widths=widths, seed=seed)
    opt = make_optimizer(OptimizerSpec(kind="adam", lr=lr))
    shuffle = rng.generator(seed, rng.DOMAIN_SHUFFLE)
    for epoch in range(epochs):
        opt.set_epoch(epoch)
        perm = shuffle.permutation(n)
        total, seen = 0.0, 0
        for idx in _batches(n, batch_size, perm):
            logits = model.forward(images[idx], record=True)
            loss, grad = cross_entropy_loss(logits, labels[idx])
            model.backward(grad)
            opt.step(model)
            total += loss * len(idx)
            seen += len(idx)
        logger.info("classifier epoch %d/%d loss %.6f", epoch + 1, epochs, total / seen)
    return model


def clean_accuracy(handle: LocalModel, dataset) -> float:
    pred = handle.classify(np.asarray(dataset.images, dtype=np.float64))
    return float(np.mean(pred == np.asarray(dataset.labels)))


def build_surrogate_set(
    k: int,
    arch_variants: Sequence[tuple[int, ...]],
    dataset,
    seed: int = 0,
    epochs: int = 30,
) -> list[LocalModel]:
    """Train k frozen desk-scale classifiers differing in widths and seeds."""
    if k < 1:
        raise ConfigError(f"surrogate count must be >= 1, got {k}")
    if not arch_variants:
        raise ConfigError("need at least one architecture variant")
    if len(dataset.images) == 0:
        raise DataError("training dataset is empty")
    handles = []
    for i in range(k):
        widths = tuple(arch_variants[i % len(arch_variants)])
        model = train_classifier(
            dataset, widths=widths, epochs=epochs, seed=seed * 1_000_003 + i
        )
        handle = LocalModel(model)
        acc = clean_accuracy(handle, dataset)
        logger.info("surrogate %d widths=%s clean accuracy %.3f", i, widths, acc)
        handles.append(handle)
    return handles


def save_checkpoint(
    model: Model,
    path: str | Path,
    *,
    objective: str,
    sigma: float,
    epochs: int,
    seed: int,
    surrogate_hashes: Sequence[str] = (),
    parent_checkpoint: str | None = None,
) -> None:
    """Model file plus a JSON sidecar describing how it was trained."""
    path = Path(path)
    save_model(model, path)
    sidecar = {
        "objective": objective,
        "sigma": sigma,
        "epochs": epochs,
        "seed": seed,
        "surrogate_hashes": list(surrogate_hashes),
        "parent_checkpoint": parent_checkpoint,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_checkpoint(path: str | Path) -> tuple[Model, dict]:
    model = load_model(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise CheckpointError(f"missing checkpoint sidecar {sidecar_path}")
    return model, json.loads(sidecar_path.read_text())
