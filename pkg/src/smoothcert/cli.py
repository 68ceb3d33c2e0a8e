"""Command-line entry point.

Subcommands: gen-data, train-classifier, train-denoiser, certify,
curve, serve, compare. Every command takes --seed where randomness is
involved; exit status is 0 on success, 1 on usage errors, 2 on runtime
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .classifiers import LabelMap, LocalModel
from .data import SyntheticSpec, load_dataset, make_synthetic_dataset, save_dataset
from .errors import SmoothcertError
from .experiment import (
    ExperimentConfig,
    certification_curve,
    default_radius_grid,
    load_results,
    make_radius_grid,
    run_certification,
    write_comparison_csv,
    write_curve_csv,
)
from .nn import OptimizerSpec, load_model, save_model
from .server import serve
from .training import (
    TrainPlan,
    clean_accuracy,
    save_checkpoint,
    train_classifier,
    train_denoiser,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="smoothcert", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("gen-data", help="generate a synthetic train/test dataset pair")
    p.add_argument("--out", required=True, help="output directory for train.dsk / test.dsk")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--height", type=int, default=8)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class-train", type=int, default=500)
    p.add_argument("--per-class-test", type=int, default=125)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-classifier", help="train a desk-scale classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--widths", default="16,32", help="conv widths, comma separated")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eval", help="dataset to report clean accuracy on")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train-denoiser", help="train or fine-tune a denoiser")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--objective", required=True, choices=["mse", "stab", "clf", "stab+mse"]
    )
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--surrogate", action="append", default=[], help="classifier model file (repeatable)")
    p.add_argument("--init", help="checkpoint to start from (required for stab+mse)")
    p.add_argument("--optimizer", choices=["sgd", "adam", "adam_then_sgd"])
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("certify", help="run certification for a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, help="overrides DSK_WORKERS / available parallelism")

    p = sub.add_parser("curve", help="compute a certified-accuracy curve from a result log")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, help="use the default grid 0..4*sigma step sigma/8")
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-step", type=float)

    p = sub.add_parser("serve", help="expose a local model over the classification protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--labels", help="JSON list of label names")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)

    p = sub.add_parser("compare", help="overlay several result logs into one CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-step", type=float)
    p.add_argument(
        "--log", action="append", default=[], metavar="NAME=PATH", help="named result log (repeatable)"
    )
    return parser


def _grid_from_args(args) -> list[float]:
    if args.grid_max is not None and args.grid_step is not None:
        return make_radius_grid(args.grid_max, args.grid_step)
    if args.sigma is not None:
        return default_radius_grid(args.sigma)
    raise UsageError("need --sigma or both --grid-max and --grid-step")


def _cmd_gen_data(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, per_class, seed in (
        ("train", args.per_class_train, args.seed),
        ("test", args.per_class_test, args.seed + 1),
    ):
        spec = SyntheticSpec(args.channels, args.height, args.width, args.classes, per_class)
        dataset = make_synthetic_dataset(spec, seed, split=split)
        save_dataset(dataset, out / f"{split}.dsk")
        print(f"wrote {out / f'{split}.dsk'} ({len(dataset)} images)")
    return 0


def _cmd_train_classifier(args) -> int:
    dataset = load_dataset(args.data, split="train")
    widths = tuple(int(w) for w in args.widths.split(","))
    model = train_classifier(dataset, widths=widths, epochs=args.epochs, lr=args.lr, seed=args.seed)
    save_model(model, args.out)
    print(f"wrote {args.out}")
    if args.eval:
        acc = clean_accuracy(LocalModel(model), load_dataset(args.eval, split="test"))
        print(f"clean accuracy on {args.eval}: {acc:.4f}")
    return 0


def _cmd_train_denoiser(args) -> int:
    dataset = load_dataset(args.data, split="train")
    objective = "stab_from_mse" if args.objective == "stab+mse" else args.objective
    optimizer = None
    if args.optimizer or args.lr:
        optimizer = OptimizerSpec(kind=args.optimizer or "adam", lr=args.lr or 1e-3)
    plan = TrainPlan(
        objective=objective,
        sigma=args.sigma,
        epochs=args.epochs,
        optimizer=optimizer,
        init_checkpoint=args.init,
        seed=args.seed,
    )
    surrogates = [LocalModel(load_model(path)) for path in args.surrogate]
    model = train_denoiser(dataset, plan, surrogates)
    save_checkpoint(
        model,
        args.out,
        objective=objective,
        sigma=args.sigma,
        epochs=plan.epochs,
        seed=args.seed,
        surrogate_hashes=[s.model.param_hash() for s in surrogates],
        parent_checkpoint=args.init,
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_certify(args) -> int:
    config = ExperimentConfig.load(args.config)
    records = run_certification(config, workers=args.workers)
    print(f"certified {len(records)} points -> {config.output_log}")
    if config.output_curve:
        points = certification_curve(records, config.grid())
        write_curve_csv(points, len(records), config.output_curve)
        print(f"wrote {config.output_curve}")
    return 0


def _cmd_curve(args) -> int:
    records = load_results(args.results)
    points = certification_curve(records, _grid_from_args(args))
    write_curve_csv(points, len(records), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    model = load_model(args.model)
    label_map = LabelMap.load(args.labels, allow_other=False) if args.labels else None
    server = serve(model, label_map, port=args.port, host=args.host)
    print(f"serving {args.model} at {server.endpoint}/v1/classify", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def _cmd_compare(args) -> int:
    if not args.log:
        raise UsageError("compare needs at least one --log NAME=PATH")
    grid = _grid_from_args(args)
    curves = {}
    for item in args.log:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--log expects NAME=PATH, got {item!r}")
        curves[name] = certification_curve(load_results(path), grid)
    write_comparison_csv(curves, args.out)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train-classifier": _cmd_train_classifier,
    "train-denoiser": _cmd_train_denoiser,
    "certify": _cmd_certify,
    "curve": _cmd_curve,
    "serve": _cmd_serve,
    "compare": _cmd_compare,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SmoothcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
