"""Training loop, evaluation and run artefacts (metrics CSV, checkpoint, summary)."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tasks
from .cells import (CellParams, forward_sequence, init_irnn, init_local, init_wrnn, save_checkpoint)
from .config import RunConfig
from .diagnostics import dump_trace
from .grad import backward_sequence
from .numeric import DivergenceError, make_rng, softmax, split_rng
from .optim import LrSchedule, OptState, adam_step, clip_gradients, lr_at

log = logging.getLogger(__name__)

METRICS_HEADER = ("iter", "train_loss", "eval_loss", "eval_metric", "lr", "grad_norm", "wallclock_s")
EVAL_CHUNK = 500

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte", "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte", "test_labels": "t10k-labels-idx1-ubyte",
}
CIFAR_TRAIN = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
CIFAR_TEST = ("test_batch.bin",)


class DataError(RuntimeError):
    pass


@dataclass
class MetricsRow:
    iter: int
    train_loss: float
    eval_loss: float
    eval_metric: float
    lr: float
    grad_norm: float
    wallclock_s: float

    def as_list(self) -> list:
        return [self.iter] + [repr(float(getattr(self, k))) for k in METRICS_HEADER[1:]]


@dataclass
class TrainResult:
    status: str
    rows: list[MetricsRow]
    params: CellParams | None
    solved_iter: int | None = None
    test_metric: float | None = None
    diverged_at: int | None = None
    extras: dict = field(default_factory=dict)

    @property
    def final(self) -> MetricsRow | None:
        return self.rows[-1] if self.rows else None

    def summary(self) -> dict:
        out = dict(status=self.status, solved_iter=self.solved_iter, diverged_at=self.diverged_at,
                   test_metric=self.test_metric, rows=len(self.rows))
        if self.final is not None:
            out.update(final_eval_loss=self.final.eval_loss, final_eval_metric=self.final.eval_metric,
                       final_train_loss=self.final.train_loss)
        out.update(self.extras)
        return out


def task_dims(cfg: RunConfig) -> tuple[int, int]:
    """Input and output dimensions of ``cfg.task``."""
    return {"copy": (tasks.COPY_CLASSES, tasks.COPY_CLASSES), "adding": (2, 1),
            "smnist": (1, 10), "psmnist": (1, 10), "nscifar": (96, 10)}[cfg.task]


def build_params(cfg: RunConfig) -> CellParams:
    d, o = task_dims(cfg)
    rng = make_rng(cfg.seed)
    common = dict(activation=cfg.act, rng=rng, scheme=cfg.init_scheme, readout=cfg.readout_mode,
                  mlp_hidden=cfg.mlp_hidden)
    if cfg.model == "wrnn":
        return init_wrnn(cfg.n, cfg.c, cfg.k, d, o, **common)
    if cfg.model == "local":
        return init_local(cfg.n, cfg.c, cfg.k, d, o, **common)
    return init_irnn(cfg.N, d, o, v_scheme=cfg.v_init, **common)


def higher_is_better(cfg: RunConfig) -> bool:
    return cfg.is_image


# ---------------------------------------------------------------- data

def _find(data_dir: Path, name: str) -> Path:
    for cand in (data_dir / name, data_dir / (name + ".gz")):
        if cand.exists():
            return cand
    raise DataError(f"dataset file not found: {data_dir / name}[.gz]")


def load_image_data(cfg: RunConfig):
    """(train, validation, test) image datasets for an image task."""
    root = Path(cfg.data_dir)
    try:
        if cfg.task == "nscifar":
            full = tasks.load_cifar10_batches([_find(root, f) for f in CIFAR_TRAIN])
            test = tasks.load_cifar10_batches([_find(root, f) for f in CIFAR_TEST])
        else:
            full = tasks.load_idx(_find(root, MNIST_FILES["train_images"]), _find(root, MNIST_FILES["train_labels"]))
            test = tasks.load_idx(_find(root, MNIST_FILES["test_images"]), _find(root, MNIST_FILES["test_labels"]))
        train, val = tasks.train_val_split(full, cfg.val_size)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    return train, val, test


class SyntheticData:
    """Seeded training stream plus a fixed held-out set for copy/adding."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.gen = tasks.copy_batch if cfg.task == "copy" else tasks.adding_batch
        train_rng, eval_rng = split_rng(cfg.data_seed, 2)
        self.train_rng = train_rng
        self.eval_batch = self.gen(eval_rng, cfg.eval_size, cfg.T)

    def next(self) -> tasks.SequenceBatch:
        return self.gen(self.train_rng, self.cfg.batch, self.cfg.T)


class ImageData:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.train, self.val, self.test = load_image_data(cfg)
        self.perm = tasks.make_permutation(cfg.perm_seed, 784) if cfg.task == "psmnist" else None
        self.shuffle_rng = make_rng(cfg.shuffle_seed)
        self.noise_rng, val_noise, test_noise = split_rng(cfg.data_seed, 3)
        self.val_batch = self._batch(self.val, np.arange(len(self.val)), val_noise)
        self.test_batch = self._batch(self.test, np.arange(len(self.test)), test_noise)

    def _batch(self, ds, idx, rng):
        return tasks.seq_image_batch(ds, idx, self.cfg.task, permutation=self.perm, rng=rng)

    def epoch(self):
        order = self.shuffle_rng.permutation(len(self.train))
        for s in range(0, len(order), self.cfg.batch):
            yield self._batch(self.train, order[s:s + self.cfg.batch], self.noise_rng)


# ---------------------------------------------------------------- evaluation

def copy_mse(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared error between per-step softmax outputs (T, o, B) and one-hot targets."""
    probs = softmax(logits.astype(np.float64), axis=1)
    onehot = tasks.one_hot(targets, logits.shape[1], np.float64).transpose(0, 2, 1)
    return float(np.mean((probs - onehot) ** 2))


def evaluate(params: CellParams, batch: tasks.SequenceBatch, task: str) -> tuple[float, float]:
    """(loss, metric) on ``batch``; metric is copy-MSE, adding-MSE or accuracy."""
    total_loss = total_metric = 0.0
    B = batch.bsz
    for s in range(0, B, EVAL_CHUNK):
        sub = batch.subset(np.arange(s, min(s + EVAL_CHUNK, B)))
        res = forward_sequence(params, sub)
        w = sub.bsz / B
        total_loss += float(res.loss) * w
        if task == "copy":
            total_metric += copy_mse(res.outputs, sub.targets) * w
        elif task == "adding":
            total_metric += float(res.loss) * w
        else:
            total_metric += float(np.mean(np.argmax(res.outputs, axis=0) == sub.targets)) * w
    return total_loss, total_metric


def first_solved(rows, threshold: float) -> int | None:
    for r in rows:
        if r.eval_metric <= threshold:
            return r.iter
    return None


# ---------------------------------------------------------------- artefacts

def write_metrics(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow(r.as_list())
    return path


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        return [MetricsRow(int(r[0]), *map(float, r[1:])) for r in reader]


def _write_outputs(cfg: RunConfig, result: TrainResult, data) -> None:
    if not cfg.out:
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    write_metrics(result.rows, out / "metrics.csv")
    if result.params is not None and result.status == "ok":
        save_checkpoint(result.params, out / "checkpoint.wrnc")
        if cfg.record_trace:
            probe = data.eval_batch if isinstance(data, SyntheticData) else data.val_batch
            res = forward_sequence(result.params, probe.subset([0]), record_trace=True)
            dump_trace(res.trace, out / "trace.wrnh")
    if isinstance(data, ImageData) and data.perm is not None:
        np.savetxt(out / "permutation.txt", data.perm, fmt="%d")
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- loop

class _Window:
    def __init__(self):
        self.loss = self.norm = 0.0
        self.count = 0

    def add(self, loss, norm):
        self.loss += float(loss)
        self.norm += norm
        self.count += 1

    def means(self):
        c = max(self.count, 1)
        out = (self.loss / c, self.norm / c)
        self.__init__()
        return out


def _sgd_step(params, batch, opt: OptState, lr_now: float, frozen):
    res = forward_sequence(params, batch, keep_cache=True)
    grads, norm = backward_sequence(params, batch, res.cache, frozen)
    clip_gradients(grads, opt.clip)
    adam_step(opt, params, grads, lr_now)
    return res.loss, norm


def train(cfg: RunConfig, params: CellParams | None = None, progress=None) -> TrainResult:
    """Run one training job described by ``cfg``; writes artefacts when ``cfg.out`` is set.

    Divergence does not raise: the result carries ``status="diverged"``.
    ``progress`` is an optional callback receiving each ``MetricsRow``.
    """
    cfg.validate()
    data = ImageData(cfg) if cfg.is_image else SyntheticData(cfg)
    params = build_params(cfg) if params is None else params
    opt = OptState(lr=cfg.lr, clip=cfg.clip, frozen=tuple(cfg.freeze))
    schedule = LrSchedule(cfg.lr, cfg.drop_rate, cfg.drop_epoch)
    rows: list[MetricsRow] = []
    start = time.perf_counter()
    window = _Window()
    result = TrainResult("ok", rows, params)

    def log_row(it, lr_now):
        train_loss, norm = window.means()
        probe = data.eval_batch if isinstance(data, SyntheticData) else data.val_batch
        eval_loss, metric = evaluate(params, probe, cfg.task)
        wall = time.perf_counter() - start if cfg.record_wallclock else 0.0
        row = MetricsRow(it, train_loss, eval_loss, metric, lr_now, norm, wall)
        rows.append(row)
        if progress is not None:
            progress(row)
        log.info("iter %d train %.4g eval %.4g metric %.4g", it, train_loss, eval_loss, metric)
        return row

    it = 0
    try:
        if isinstance(data, SyntheticData):
            for it in range(1, cfg.iters + 1):
                lr_now = lr_at(schedule, (it - 1) // cfg.epoch_iters)
                loss, norm = _sgd_step(params, data.next(), opt, lr_now, cfg.freeze)
                window.add(loss, norm)
                if it % cfg.log_every == 0 or it == cfg.iters:
                    row = log_row(it, lr_now)
                    if cfg.stop_below > 0 and row.eval_metric <= cfg.stop_below:
                        break
        else:
            for epoch in range(cfg.epochs):
                lr_now = lr_at(schedule, epoch)
                for batch in data.epoch():
                    it += 1
                    loss, norm = _sgd_step(params, batch, opt, lr_now, cfg.freeze)
                    window.add(loss, norm)
                log_row(epoch + 1, lr_now)
            if cfg.epochs:
                result.test_metric = evaluate(params, data.test_batch, cfg.task)[1]
    except DivergenceError as exc:
        log.warning("run diverged at iteration %d: %s", it, exc)
        result.status = "diverged"
        result.diverged_at = it
    if cfg.task == "adding":
        result.solved_iter = first_solved(rows, cfg.solved_threshold)
    _write_outputs(cfg, result, data)
    return result
