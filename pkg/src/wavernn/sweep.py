"""Grid search over RunConfig fields, ablation presets and result ranking."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, RunConfig, preset
from .train import DataError, higher_is_better, train

log = logging.getLogger(__name__)


@dataclass
class Trial:
    index: int
    label: str
    config: RunConfig
    overrides: dict


@dataclass
class TrialResult:
    trial: Trial
    status: str
    final_eval_loss: float = float("nan")
    final_eval_metric: float = float("nan")
    best_eval_metric: float = float("nan")
    solved_iter: int | None = None
    error: str = ""


def expand_grid(base: RunConfig, grid: dict | None = None, variants: list[dict] | None = None) -> list[Trial]:
    """Cartesian product of ``grid`` applied on top of each variant (default: one empty variant)."""
    grid = grid or {}
    variants = variants or [{}]
    keys = sorted(grid)
    trials = []
    for variant in variants:
        variant = dict(variant)
        label = variant.pop("label", "")
        for values in itertools.product(*(grid[k] for k in keys)):
            over = {**variant, **dict(zip(keys, values))}
            try:
                cfg = base.updated(**over)
            except TypeError as exc:
                raise ConfigError(f"bad grid field: {exc}") from None
            name = label or ",".join(f"{k}={v}" for k, v in over.items()) or "base"
            if label and keys:
                name = label + "," + ",".join(f"{k}={v}" for k, v in zip(keys, values))
            trials.append(Trial(len(trials), name, cfg, over))
    return trials


def _run_trial(trial: Trial) -> TrialResult:
    try:
        res = train(trial.config)
    except (ConfigError, DataError, ValueError) as exc:
        return TrialResult(trial, "error", error=str(exc))
    if not res.rows:
        return TrialResult(trial, res.status)
    metrics = [r.eval_metric for r in res.rows]
    best = max(metrics) if higher_is_better(trial.config) else min(metrics)
    return TrialResult(trial, res.status, res.final.eval_loss, res.final.eval_metric, best, res.solved_iter)


def rank(results: list[TrialResult]) -> list[TrialResult]:
    """Order by final validation metric; failed trials last; ties by trial index."""
    def key(r: TrialResult):
        ok = r.status == "ok" and r.final_eval_metric == r.final_eval_metric
        m = r.final_eval_metric if ok else 0.0
        if ok and higher_is_better(r.trial.config):
            m = -m
        return (not ok, m, r.trial.index)
    return sorted(results, key=key)


SUMMARY_FIELDS = ("rank", "trial", "label", "status", "final_eval_loss", "final_eval_metric",
                  "best_eval_metric", "solved_iter", "error")


def write_summary(ranked: list[TrialResult], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for i, r in enumerate(ranked, 1):
            w.writerow([i, r.trial.index, r.trial.label, r.status, repr(r.final_eval_loss),
                        repr(r.final_eval_metric), repr(r.best_eval_metric),
                        "" if r.solved_iter is None else r.solved_iter, r.error])
    return path


def sweep(trials: list[Trial], out=None, workers: int = 1) -> list[TrialResult]:
    """Run every trial (each writes to ``out/trial_XXX`` when ``out`` is set) and rank them."""
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for t in trials:
            t.config = t.config.updated(out=str(out / f"trial_{t.index:03d}"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, trials))
    else:
        results = [_run_trial(t) for t in trials]
    for r in results:
        log.info("trial %d %s: %s metric %s", r.trial.index, r.trial.label, r.status, r.final_eval_metric)
    ranked = rank(results)
    if out:
        write_summary(ranked, out / "summary.csv")
        if ranked and ranked[0].status == "ok":
            ranked[0].trial.config.save(out / "best_config.json")
    return ranked


# ---------------------------------------------------------------- presets

def _ablation(T: int = 10, **over) -> list[Trial]:
    wrnn = preset("copy", "wrnn", T, **over)
    irnn = preset("copy", "irnn", T, **over)
    entries = [
        ("wRNN", wrnn.updated(init="u-shift+V-sparse")),
        ("wRNN -V-init", wrnn.updated(init="u-shift+V-normal")),
        ("wRNN -u-shift-init", wrnn.updated(init="u-random+V-sparse")),
        ("wRNN -V-init -u-shift-init", wrnn.updated(init="u-random+V-normal")),
        ("iRNN", irnn.updated(init="identity", v_init="normal")),
        ("iRNN +Sigma-init", irnn.updated(init="sigma-shift", v_init="normal")),
        ("iRNN +Sigma-init +V-init", irnn.updated(init="sigma-shift", v_init="sparse-identity")),
    ]
    return [Trial(i, label, cfg, {}) for i, (label, cfg) in enumerate(entries)]


def _ring_size(**over) -> list[Trial]:
    trials = []
    for n in (9, 16, 25, 49, 100):
        for T in (50, 100, 200, 500):
            cfg = preset("copy", "wrnn", T, n=n, c=6, **over)
            trials.append(Trial(len(trials), f"n={n},T={T}", cfg, {"n": n, "T": T}))
    return trials


def _frozen(**over) -> list[Trial]:
    entries = [("wRNN frozen U,V", preset("smnist", "wrnn", freeze=["recurrent", "encoder"], **over)),
               ("iRNN frozen U,V", preset("smnist", "irnn", freeze=["recurrent", "encoder"], **over))]
    return [Trial(i, label, cfg, {}) for i, (label, cfg) in enumerate(entries)]


def _variants(**over) -> list[Trial]:
    entries = [
        ("wRNN", preset("smnist", "wrnn", **over)),
        ("wRNN +MLP", preset("smnist", "wrnn", readout="final-mlp2", **over)),
        ("wRNN multi-speed", preset("smnist", "wrnn", init="multi-speed+V-sparse", **over)),
        ("local wRNN", preset("smnist", "local", **over)),
        ("local wRNN variable-velocity", preset("smnist", "local", init="variable-velocity+V-sparse", **over)),
    ]
    return [Trial(i, label, cfg, {}) for i, (label, cfg) in enumerate(entries)]


def _copy_grid(T: int = 30, **over) -> list[Trial]:
    w = expand_grid(preset("copy", "wrnn", T, **over), {"lr": [1e-2, 1e-3, 1e-4], "clip": [0.0, 1.0, 10.0]})
    i = expand_grid(preset("copy", "irnn", T, **over),
                    {"lr": [1e-2, 1e-3, 1e-4], "clip": [0.0, 1.0, 10.0],
                     "init": ["identity", "kaiming-uniform"], "act": ["relu", "tanh"]})
    return _renumber([("wRNN", t) for t in w] + [("iRNN", t) for t in i])


def _adding_grid(T: int = 100, **over) -> list[Trial]:
    grid = {"lr": [1e-2, 1e-3, 1e-4], "clip": [0.0, 1.0, 10.0, 100.0, 1000.0]}
    w = expand_grid(preset("adding", "wrnn", T, **over), grid)
    i = expand_grid(preset("adding", "irnn", T, **over), grid)
    return _renumber([("wRNN", t) for t in w] + [("iRNN", t) for t in i])


def _renumber(tagged) -> list[Trial]:
    return [Trial(k, f"{tag},{t.label}", t.config, t.overrides) for k, (tag, t) in enumerate(tagged)]


PRESETS = {
    "ablation": _ablation,
    "table3": _ablation,
    "ring-size": _ring_size,
    "frozen": _frozen,
    "variants": _variants,
    "copy-grid": _copy_grid,
    "adding-grid": _adding_grid,
}


def preset_trials(name: str, **over) -> list[Trial]:
    if name not in PRESETS:
        raise ConfigError(f"unknown sweep preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**over)


def load_grid(path) -> list[Trial]:
    """Grid document: ``{"base": {...}, "grid": {field: [values]}, "variants": [{...}]}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read grid {path}: {exc}") from None
    unknown = set(doc) - {"base", "grid", "variants"}
    if unknown:
        raise ConfigError(f"unknown grid keys {sorted(unknown)}")
    base = RunConfig.from_dict(doc.get("base", {}))
    return expand_grid(base, doc.get("grid"), doc.get("variants"))
