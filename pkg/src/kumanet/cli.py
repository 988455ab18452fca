"""Command-line driver.

    kumanet train      one run with early stopping
    kumanet grid       18-point selection over momentum x learning rate x weight decay
    kumanet replicate  several seeds of one config, mean and std of test metrics
    kumanet curves     activation curves on [-6, 6]
    kumanet table1     grid + 5-seed replication for each of the five hidden units

Exit codes: 0 success, 2 malformed input file, 3 divergence, 4 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from .activations import Kumaraswamy, NoisyRelu, Relu, Sigmoid, parse_activation
from .data import IdxFormatError
from .model import CheckpointError
from .optim import DivergenceError, TrainConfig
from .training import DataPaths, run_grid, run_replicate, train_run
from .viz import write_curves

log = logging.getLogger("kumanet")

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_DIVERGED = 3
EXIT_USAGE = 4

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

TABLE1_UNITS = (
    ("sigmoid", Sigmoid()),
    ("relu", Relu()),
    ("noisy-relu", NoisyRelu(1.0)),
    ("kumaraswamy(5,6)", Kumaraswamy(5.0, 6.0)),
    ("kumaraswamy(8,30)", Kumaraswamy(8.0, 30.0)),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_file(data_dir: str, stem: str) -> str:
    for name in (stem + ".gz", stem):
        candidate = os.path.join(data_dir, name)
        if os.path.exists(candidate):
            return candidate
    return os.path.join(data_dir, stem + ".gz")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data-dir", default=os.environ.get("MNIST_DIR", "data/mnist"),
                   help="directory holding the four MNIST files (default: $MNIST_DIR or data/mnist)")
    for key in MNIST_FILES:
        g.add_argument("--" + key.replace("_", "-"), default=None)
    g.add_argument("--train-limit", type=int, default=None, help="keep only the first N training examples")


def _add_train_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model and optimisation")
    g.add_argument("--activation", default="kumaraswamy", choices=["sigmoid", "relu", "noisy-relu", "kumaraswamy"])
    g.add_argument("--kum-a", type=float, default=8.0)
    g.add_argument("--kum-b", type=float, default=30.0)
    g.add_argument("--noise-var", type=float, default=1.0)
    g.add_argument("--hidden", type=int, default=500)
    g.add_argument("--lr", type=float, default=0.1, help="initial learning rate")
    g.add_argument("--momentum", type=float, default=0.5, help="momentum before the switch epoch")
    g.add_argument("--momentum-late", type=float, default=0.9)
    g.add_argument("--momentum-switch", type=int, default=50)
    g.add_argument("--weight-decay", type=float, default=0.0)
    g.add_argument("--batch-size", type=int, default=100)
    g.add_argument("--epochs", type=int, default=100)
    g.add_argument("--lr-halving", type=int, default=10)
    g.add_argument("--patience", type=int, default=10)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kumanet", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train one network")
    _add_data_args(p)
    _add_train_args(p)

    p = sub.add_parser("grid", help="model selection over the 18-point grid")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("replicate", help="repeat one config over several seeds")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("table1", help="grid selection then replication for all five hidden units")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("curves", help="write activation curves as CSV")
    p.add_argument("--out", required=True, help="CSV path (or a directory, receiving curves.csv)")
    return parser


def _config_from_args(args) -> TrainConfig:
    try:
        kind = parse_activation(args.activation, args.kum_a, args.kum_b, args.noise_var)
        return TrainConfig(
            activation=kind,
            lr0=args.lr,
            momentum0=args.momentum,
            momentum_late=args.momentum_late,
            momentum_switch_epoch=args.momentum_switch,
            weight_decay=args.weight_decay,
            batch_size=args.batch_size,
            max_epochs=args.epochs,
            lr_halving_period=args.lr_halving,
            patience=args.patience,
            seed=args.seed,
            hidden_units=args.hidden,
            train_limit=args.train_limit,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _paths_from_args(args) -> DataPaths:
    files = {}
    for key, stem in MNIST_FILES.items():
        path = getattr(args, key) or _default_file(args.data_dir, stem)
        if not os.path.isfile(path):
            raise UsageError(f"cannot read {key.replace('_', ' ')} file {path}")
        files[key] = path
    return DataPaths(**files)


def _cmd_train(args) -> dict:
    cfg = _config_from_args(args)
    splits = _paths_from_args(args).load(cfg.train_limit)
    return train_run(cfg, splits, args.out).summary


def _cmd_grid(args) -> dict:
    cfg = _config_from_args(args)
    paths = _paths_from_args(args)
    splits = paths.load() if args.jobs <= 1 else None
    return run_grid(cfg, args.out, splits=splits, paths=paths, workers=args.jobs)


def _cmd_replicate(args) -> dict:
    cfg = _config_from_args(args)
    paths = _paths_from_args(args)
    splits = paths.load() if args.jobs <= 1 else None
    return run_replicate(cfg, args.out, args.n_seeds, splits=splits, paths=paths, workers=args.jobs)


def _cmd_table1(args) -> dict:
    base = _config_from_args(args)
    paths = _paths_from_args(args)
    splits = paths.load() if args.jobs <= 1 else None
    out = Path(args.out)
    rows = []
    for label, kind in TABLE1_UNITS:
        unit_dir = out / label.replace("(", "_").replace(",", "_").rstrip(")")
        cfg = base.replace(activation=kind)
        chosen = run_grid(cfg, unit_dir / "grid", splits=splits, paths=paths, workers=args.jobs)
        c = chosen["config"]
        best = cfg.replace(lr0=c["lr0"], momentum0=c["momentum0"], weight_decay=c["weight_decay"])
        rep = run_replicate(best, unit_dir / "replicate", args.n_seeds, splits=splits, paths=paths, workers=args.jobs)
        rows.append(
            {
                "hidden_unit": label,
                "lr0": best.lr0,
                "momentum0": best.momentum0,
                "weight_decay": best.weight_decay,
                "test_error_pct": 100 * rep["test_error"],
                "test_error_pct_std": 100 * rep["test_error_std"],
                "test_xent": rep["test_xent"],
                "test_xent_std": rep["test_xent_std"],
                "n_below_001": rep["n_below_001"],
                "n_above_05": rep["n_above_05"],
                "best_epoch": rep["best_epoch"],
            }
        )
    with open(out / "table1.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    summary = {"rows": rows}
    (out / "table1.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _cmd_curves(args) -> dict:
    out = Path(args.out)
    if out.is_dir():
        out = out / "curves.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curves(out)
    return {"curves": str(out)}


COMMANDS = {
    "train": _cmd_train,
    "grid": _cmd_grid,
    "replicate": _cmd_replicate,
    "table1": _cmd_table1,
    "curves": _cmd_curves,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (IdxFormatError, CheckpointError) as exc:
        log.error("format error: %s", exc)
        return EXIT_FORMAT
    except DivergenceError as exc:
        log.error("training diverged: %s", exc)
        return EXIT_DIVERGED
    if not args.quiet:
        brief = {k: result[k] for k in ("best_epoch", "valid_error", "test_error", "test_xent") if k in result}
        print(json.dumps(brief or result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
