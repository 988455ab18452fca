"""Training runs, model-selection grids and multi-seed replication.

Every run writes into its own directory:

``metrics.csv``
    ``epoch,lr,momentum,train_loss,valid_error``, one row per finished epoch.
``timing.csv``
    ``epoch,wall_seconds``; kept apart so ``metrics.csv`` is byte-reproducible.
``summary.json``
    config echo, best epoch, validation/test metrics of the restored
    best-validation parameters, activity counts and histogram.
``activity.csv``
    ``unit,mean_activity`` over the test set.
``model.kmlp``
    checkpoint of the restored parameters.
``weights_tile.pgm``
    the first 100 input-to-hidden filters.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .activations import ActivationKind, Mode
from .data import Splits, load_mnist, minibatches
from .metrics import ActivityReport, EpochRecord, activity_report, classification_error, mean_test_cross_entropy
from .model import MlpParams, backward, cross_entropy, forward, init_params, predict, save_checkpoint
from .optim import (
    LR_GRID,
    MOMENTUM_GRID,
    WEIGHT_DECAY_GRID,
    Decision,
    DivergenceError,
    EarlyStopState,
    TrainConfig,
    Velocity,
    early_stop_update,
    lr_at,
    momentum_at,
    sgd_step,
)
from .rng import STREAM_INIT, STREAM_NOISE, STREAM_SHUFFLE, Rng, derive_seed
from .viz import export_weight_tiles

log = logging.getLogger(__name__)

__all__ = [
    "DataPaths",
    "RunResult",
    "train_run",
    "evaluate",
    "grid_configs",
    "run_grid",
    "run_replicate",
    "METRICS_COLUMNS",
    "GRID_COLUMNS",
]

METRICS_COLUMNS = ("epoch", "lr", "momentum", "train_loss", "valid_error")
GRID_COLUMNS = (
    "config_index",
    "momentum0",
    "lr0",
    "weight_decay",
    "seed",
    "status",
    "best_epoch",
    "valid_error",
    "test_error",
    "test_xent",
    "selected",
)
INIT_SCHEME = "glorot-uniform weights, zero biases"
N_CLASSES = 10


@dataclass(frozen=True)
class DataPaths:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str

    def load(self, train_limit: Optional[int] = None) -> Splits:
        return load_mnist(self.train_images, self.train_labels, self.test_images, self.test_labels, train_limit)


@dataclass
class RunResult:
    config: TrainConfig
    params: MlpParams
    records: list[EpochRecord]
    best_epoch: int
    valid_error: float
    test_error: float
    test_xent: float
    activity: ActivityReport
    wall_seconds: float = 0.0
    summary: dict = field(default_factory=dict)


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def evaluate(params: MlpParams, images: np.ndarray, labels: np.ndarray, kind: ActivationKind) -> tuple[float, float]:
    """Eval-mode ``(error, mean cross-entropy)``."""
    _, probs = forward(params, images, kind, mode=Mode.EVAL)
    return classification_error(predict(probs), labels), mean_test_cross_entropy(probs, labels)


def train_run(
    cfg: TrainConfig,
    splits: Splits,
    out_dir=None,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> RunResult:
    """Train one network with early stopping and evaluate the best snapshot.

    With ``out_dir`` set, ``metrics.csv`` grows one line per epoch, so a run
    that diverges leaves the epochs it finished on disk.
    """
    kind = cfg.activation
    train = splits.train if cfg.train_limit is None else splits.train.head(cfg.train_limit)
    D = train.images.shape[1]
    params = init_params(D, cfg.hidden_units, N_CLASSES, Rng.derive(cfg.seed, STREAM_INIT))
    noise_rng = Rng.derive(cfg.seed, STREAM_NOISE)
    shuffle_rng = Rng.derive(cfg.seed, STREAM_SHUFFLE)
    vel = Velocity.zeros_like(params)
    stopper = EarlyStopState(patience=cfg.patience)
    records: list[EpochRecord] = []

    out = Path(out_dir) if out_dir is not None else None
    metrics_file = timing_file = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_file = open(out / "metrics.csv", "w", newline="")
        timing_file = open(out / "timing.csv", "w", newline="")
        metrics_file.write(",".join(METRICS_COLUMNS) + "\n")
        timing_file.write("epoch,wall_seconds\n")

    t_start = time.perf_counter()
    try:
        for epoch in range(cfg.max_epochs):
            t0 = time.perf_counter()
            lr, mom = lr_at(cfg, epoch), momentum_at(cfg, epoch)
            loss_sum = 0.0
            for b, batch in enumerate(minibatches(train, cfg.batch_size, shuffle_rng)):
                hidden, probs = forward(params, batch.x, kind, noise_rng, Mode.TRAIN)
                loss = cross_entropy(probs, batch.labels)
                if not math.isfinite(loss):
                    raise DivergenceError(f"non-finite training loss at epoch {epoch}, batch {b}")
                loss_sum += loss * len(batch)
                grads = backward(params, batch, hidden, probs, kind)
                sgd_step(params, vel, grads, lr, mom, cfg.weight_decay, epoch=epoch, batch=b)
            valid_error, _ = evaluate(params, splits.valid.images, splits.valid.labels, kind)
            rec = EpochRecord(epoch, lr, mom, loss_sum / len(train), valid_error, wall_seconds=time.perf_counter() - t0)
            records.append(rec)
            if metrics_file is not None:
                metrics_file.write(",".join(_fmt(getattr(rec, c)) for c in METRICS_COLUMNS) + "\n")
                metrics_file.flush()
                timing_file.write(f"{epoch},{rec.wall_seconds:.3f}\n")
                timing_file.flush()
            log.info(
                "%s epoch %3d lr %.5g mom %.2f train_loss %.5f valid_error %.4f (%.1fs)",
                kind.name, epoch, lr, mom, rec.train_loss, valid_error, rec.wall_seconds,
            )
            if on_epoch is not None:
                on_epoch(rec)
            if early_stop_update(stopper, epoch, valid_error, params) is Decision.STOP:
                break
    finally:
        if metrics_file is not None:
            metrics_file.close()
            timing_file.close()

    if stopper.best_params is not None:
        params = stopper.best_params
        valid_error = stopper.best_val_error
    else:
        # max_epochs == 0: report the untrained network
        valid_error, _ = evaluate(params, splits.valid.images, splits.valid.labels, kind)
    test_error, test_xent = evaluate(params, splits.test.images, splits.test.labels, kind)
    activity = activity_report(params, splits.test.images, kind)
    wall = time.perf_counter() - t_start

    result = RunResult(
        config=cfg,
        params=params,
        records=records,
        best_epoch=stopper.best_epoch,
        valid_error=valid_error,
        test_error=test_error,
        test_xent=test_xent,
        activity=activity,
        wall_seconds=wall,
    )
    result.summary = _run_summary(result)
    if out is not None:
        _write_run_outputs(out, result)
    return result


def _run_summary(r: RunResult) -> dict:
    per_seed = {
        "seed": r.config.seed,
        "best_epoch": r.best_epoch,
        "valid_error": r.valid_error,
        "test_error": r.test_error,
        "test_xent": r.test_xent,
        "n_below_001": r.activity.n_below_001,
        "n_above_05": r.activity.n_above_05,
    }
    return {
        "config": r.config.to_dict(),
        "best_epoch": r.best_epoch,
        "epochs_run": len(r.records),
        "valid_error": r.valid_error,
        "test_error": r.test_error,
        "test_xent": r.test_xent,
        "n_below_001": r.activity.n_below_001,
        "n_above_05": r.activity.n_above_05,
        "activity_histogram": r.activity.to_dict(),
        "seeds": [r.config.seed],
        "per_seed_results": [per_seed],
        "init": INIT_SCHEME,
        "code_version": __version__,
        "wall_seconds": r.wall_seconds,
    }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _write_run_outputs(out: Path, r: RunResult) -> None:
    _write_json(out / "summary.json", r.summary)
    save_checkpoint(out / "model.kmlp", r.params, r.config.activation)
    export_weight_tiles(r.params, out / "weights_tile.pgm")
    with open(out / "activity.csv", "w", newline="") as fh:
        fh.write("unit,mean_activity\n")
        for i, a in enumerate(r.activity.mean_activity):
            fh.write(f"{i},{_fmt(a)}\n")


# -- parallel plumbing --------------------------------------------------------

_WORKER_SPLITS: dict = {}


def _worker_run(paths: DataPaths, cfg: TrainConfig, out_dir: str) -> dict:
    key = (paths, cfg.train_limit)
    if key not in _WORKER_SPLITS:
        _WORKER_SPLITS.clear()
        _WORKER_SPLITS[key] = paths.load(cfg.train_limit)
    return _attempt(cfg, _WORKER_SPLITS[key], out_dir)


def _attempt(cfg: TrainConfig, splits: Splits, out_dir: str) -> dict:
    try:
        return {"status": "ok", "summary": train_run(cfg, splits, out_dir).summary}
    except DivergenceError as exc:
        log.warning("run in %s diverged: %s", out_dir, exc)
        return {"status": "diverged", "error": str(exc)}


def _run_many(
    jobs: Sequence[tuple[TrainConfig, str]],
    splits: Optional[Splits],
    paths: Optional[DataPaths],
    workers: int,
) -> list[dict]:
    if workers > 1 and paths is not None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker_run, paths, cfg, out) for cfg, out in jobs]
            return [f.result() for f in futures]
    if splits is None:
        splits = paths.load()
    return [_attempt(cfg, splits, out) for cfg, out in jobs]


# -- grid and replication -----------------------------------------------------


def grid_configs(base: TrainConfig) -> list[TrainConfig]:
    """The 18 selection configs, momentum outermost, weight decay innermost.

    Config ``i`` trains with seed ``derive_seed(base.seed, i)``.
    """
    out = []
    for m0 in MOMENTUM_GRID:
        for lr0 in LR_GRID:
            for wd in WEIGHT_DECAY_GRID:
                i = len(out)
                out.append(base.replace(momentum0=m0, lr0=lr0, weight_decay=wd, seed=derive_seed(base.seed, i)))
    return out


def run_grid(
    base: TrainConfig,
    out_dir,
    splits: Optional[Splits] = None,
    paths: Optional[DataPaths] = None,
    workers: int = 1,
) -> dict:
    """Train every grid config, pick the lowest validation error (ties: lowest index).

    Writes ``grid.csv`` and copies the winner's summary to ``summary.json``.
    Diverged cells are marked and skipped by the selection.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    configs = grid_configs(base)
    results = _run_many([(cfg, str(out / f"cfg_{i:02d}")) for i, cfg in enumerate(configs)], splits, paths, workers)

    ok = [i for i, r in enumerate(results) if r["status"] == "ok"]
    if not ok:
        raise DivergenceError("every grid configuration diverged")
    best = min(ok, key=lambda i: (results[i]["summary"]["valid_error"], i))

    with open(out / "grid.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GRID_COLUMNS)
        for i, (cfg, r) in enumerate(zip(configs, results)):
            s = r.get("summary", {})
            writer.writerow(
                [i, _fmt(cfg.momentum0), _fmt(cfg.lr0), _fmt(cfg.weight_decay), cfg.seed, r["status"]]
                + [_fmt(s[k]) if k in s else "" for k in ("best_epoch", "valid_error", "test_error", "test_xent")]
                + [int(i == best)]
            )
    summary = dict(results[best]["summary"])
    summary["grid_index"] = best
    _write_json(out / "summary.json", summary)
    return summary


def run_replicate(
    cfg: TrainConfig,
    out_dir,
    n_seeds: int = 5,
    splits: Optional[Splits] = None,
    paths: Optional[DataPaths] = None,
    workers: int = 1,
) -> dict:
    """Train with seeds ``cfg.seed + k`` for ``k < n_seeds`` and aggregate test metrics."""
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + k for k in range(n_seeds)]
    results = _run_many([(cfg.replace(seed=s), str(out / f"seed_{s}")) for s in seeds], splits, paths, workers)
    failed = [s for s, r in zip(seeds, results) if r["status"] != "ok"]
    if failed:
        raise DivergenceError(f"runs with seeds {failed} diverged")
    per_seed = [r["summary"]["per_seed_results"][0] for r in results]
    summary = aggregate(per_seed)
    summary.update(
        {
            "config": cfg.to_dict(),
            "seeds": seeds,
            "per_seed_results": per_seed,
            "init": INIT_SCHEME,
            "code_version": __version__,
        }
    )
    _write_json(out / "summary.json", summary)
    return summary


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(per_seed: Sequence[dict]) -> dict:
    """Mean and sample standard deviation of per-seed results."""
    out = {}
    for key in ("test_error", "test_xent", "valid_error", "n_below_001", "n_above_05", "best_epoch"):
        mean, std = _mean_std([float(r[key]) for r in per_seed])
        out[key] = mean
        out[f"{key}_std"] = std
    return out
