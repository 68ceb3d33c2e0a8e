import json
import logging
from dataclasses import dataclass
from pathlib import Path

import pytest

logging.getLogger("smoothcert").setLevel(logging.WARNING)

# Benchmark geometry shared by the acceptance tests: desk scale, one
# channel, four classes, 2000 train / 500 test, sigma 0.25.
SIGMA = 0.25
TRAIN_PER_CLASS = 500
TEST_PER_CLASS = 125
DATA_SEED = 100


@dataclass
class Benchmark:
    root: Path
    train_path: Path
    test_path: Path
    classifier_path: Path  # whitebox / blackbox target
    heldout_path: Path  # transfer target (never used as surrogate)
    surrogate_paths: list[Path]  # 3 surrogates for the transfer experiment
    denoisers: dict[str, Path]  # objective name -> checkpoint path


@pytest.fixture(scope="session")
def benchmark(tmp_path_factory) -> Benchmark:
    """Train every artifact the acceptance criteria share: the synthetic
    dataset, the target and surrogate classifiers, and the four denoisers.
    Built once per session; all seeds fixed."""
    from smoothcert.classifiers import LocalModel
    from smoothcert.data import SyntheticSpec, make_synthetic_dataset, save_dataset
    from smoothcert.nn import OptimizerSpec, save_model
    from smoothcert.training import (
        TrainPlan,
        build_surrogate_set,
        clean_accuracy,
        save_checkpoint,
        train_classifier,
        train_denoiser,
    )

    root = tmp_path_factory.mktemp("benchmark")
    train = make_synthetic_dataset(SyntheticSpec(per_class=TRAIN_PER_CLASS), DATA_SEED, "train")
    test = make_synthetic_dataset(SyntheticSpec(per_class=TEST_PER_CLASS), DATA_SEED + 1, "test")
    train_path, test_path = root / "train.dsk", root / "test.dsk"
    save_dataset(train, train_path)
    save_dataset(test, test_path)

    target_model = train_classifier(train, epochs=20, seed=0)
    target = LocalModel(target_model)
    assert clean_accuracy(target, test) >= 0.95
    classifier_path = root / "target.dsmk"
    save_model(target_model, classifier_path)

    # transfer setup: 3 surrogates plus a held-out classifier with its own
    # architecture and seed
    surrogates = build_surrogate_set(3, [(16, 32), (12, 24), (24, 16)], train, seed=7, epochs=20)
    surrogate_paths = []
    for i, handle in enumerate(surrogates):
        path = root / f"surrogate{i}.dsmk"
        save_model(handle.model, path)
        surrogate_paths.append(path)
    heldout_model = train_classifier(train, widths=(20, 28), epochs=20, seed=99)
    assert clean_accuracy(LocalModel(heldout_model), test) >= 0.95
    heldout_path = root / "heldout.dsmk"
    save_model(heldout_model, heldout_path)

    denoisers: dict[str, Path] = {}

    def checkpoint(name, model, objective, parent=None, hashes=()):
        path = root / f"{name}.dsmk"
        save_checkpoint(
            model,
            path,
            objective=objective,
            sigma=SIGMA,
            epochs=0,
            seed=0,
            surrogate_hashes=list(hashes),
            parent_checkpoint=str(parent) if parent else None,
        )
        denoisers[name] = path
        return path

    mse_model = train_denoiser(train, TrainPlan(objective="mse", sigma=SIGMA, epochs=30, seed=10))
    mse_path = checkpoint("mse", mse_model, "mse")

    stab_opt = OptimizerSpec(
        kind="adam_then_sgd", lr=1e-3, sgd_lr=1e-4, switch_epoch=50, drop_epochs=(100,)
    )
    stab_model = train_denoiser(
        train,
        TrainPlan(objective="stab", sigma=SIGMA, epochs=200, optimizer=stab_opt, seed=11),
        [target],
    )
    checkpoint("stab", stab_model, "stab", hashes=[target_model.param_hash()])

    ft_model = train_denoiser(
        train,
        TrainPlan(
            objective="stab_from_mse",
            sigma=SIGMA,
            epochs=20,
            optimizer=OptimizerSpec(kind="adam", lr=1e-5),
            init_checkpoint=str(mse_path),
            seed=12,
        ),
        [target],
    )
    checkpoint("stab_mse", ft_model, "stab_from_mse", parent=mse_path, hashes=[target_model.param_hash()])

    # transfer denoisers: stability objective against 1 and 3 surrogates
    ft_plan = dict(sigma=SIGMA, epochs=20, optimizer=OptimizerSpec(kind="adam", lr=1e-5), seed=13)
    k1_model = train_denoiser(
        train,
        TrainPlan(objective="stab_from_mse", init_checkpoint=str(mse_path), **ft_plan),
        surrogates[:1],
    )
    checkpoint("transfer_k1", k1_model, "stab_from_mse", parent=mse_path)
    k3_model = train_denoiser(
        train,
        TrainPlan(objective="stab_from_mse", init_checkpoint=str(mse_path), **ft_plan),
        surrogates,
    )
    checkpoint("transfer_k3", k3_model, "stab_from_mse", parent=mse_path)

    return Benchmark(
        root=root,
        train_path=train_path,
        test_path=test_path,
        classifier_path=classifier_path,
        heldout_path=heldout_path,
        surrogate_paths=surrogate_paths,
        denoisers=denoisers,
    )


def make_config(
    benchmark: Benchmark,
    name: str,
    setting: str = "whitebox",
    denoiser: str | None = None,
    classifier: dict | None = None,
    dataset: Path | None = None,
    n: int = 2000,
    n0: int = 100,
    seed: int = 500,
    batch: int = 512,
) -> Path:
    cfg = {
        "setting": setting,
        "dataset": str(dataset or benchmark.test_path),
        "classifier": classifier or {"model": str(benchmark.classifier_path)},
        "smoothing": {"sigma": SIGMA, "n0": n0, "n": n, "alpha": 0.001, "batch": batch},
        "output": {"log": str(benchmark.root / f"{name}.jsonl")},
        "seed": seed,
    }
    if denoiser is not None:
        cfg["denoiser"] = denoiser
    path = benchmark.root / f"{name}.config.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path
