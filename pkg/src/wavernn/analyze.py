"""Post-hoc analysis of a checkpoint: traces, spectra, velocity and copy-task predictions."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tasks
from .cells import CellParams, forward_sequence, load_checkpoint
from .config import RunConfig
from .diagnostics import (DEFAULT_SHUFFLES, WaveSpectrum, dump_trace, mean_channel_spectrum, sorted_trace,
                          write_spectrum_csv)
from .train import ImageData, SyntheticData, task_dims


@dataclass
class AnalysisResult:
    spectrum: WaveSpectrum
    sorted_spectrum: WaveSpectrum
    trace_path: Path | None = None
    recall_accuracy: float | None = None

    def summary(self) -> dict:
        out = dict(velocity=self.spectrum.velocity, score=self.spectrum.score, contrast=self.spectrum.contrast,
                   sorted_velocity=self.sorted_spectrum.velocity, sorted_score=self.sorted_spectrum.score,
                   sorted_contrast=self.sorted_spectrum.contrast)
        if self.recall_accuracy is not None:
            out["recall_accuracy"] = self.recall_accuracy
        return out


def check_shapes(params: CellParams, cfg: RunConfig) -> None:
    d, o = task_dims(cfg)
    if params.d != d or params.o != o:
        raise ValueError(f"checkpoint has d={params.d}, o={params.o} but task {cfg.task!r} needs d={d}, o={o}")


def probe_batch(cfg: RunConfig) -> tasks.SequenceBatch:
    if cfg.is_image:
        return ImageData(cfg).val_batch
    return SyntheticData(cfg).eval_batch


def recall_accuracy(params: CellParams, batch: tasks.SequenceBatch) -> tuple[float, np.ndarray]:
    """Argmax accuracy over the last 10 (recall) steps of a copy batch, and all predictions (T, B)."""
    res = forward_sequence(params, batch)
    pred = np.argmax(res.outputs, axis=1)
    window = slice(-tasks.COPY_WINDOW, None)
    return float(np.mean(pred[window] == batch.targets[window])), pred


def write_predictions(batch: tasks.SequenceBatch, pred: np.ndarray, path, items: int = 8) -> Path:
    path = Path(path)
    inputs = np.argmax(batch.inputs, axis=2)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("item", "step", "input", "target", "prediction"))
        for b in range(min(items, batch.bsz)):
            for t in range(batch.T):
                w.writerow((b, t, int(inputs[t, b]), int(batch.targets[t, b]), int(pred[t, b])))
    return path


def analyze(params: CellParams, cfg: RunConfig, out=None, shuffles: int = DEFAULT_SHUFFLES,
            seed: int = 0, item: int = 0) -> AnalysisResult:
    """Record one held-out sequence, fit its wave spectrum and (for copy) score recall."""
    check_shapes(params, cfg)
    batch = probe_batch(cfg)
    res = forward_sequence(params, batch.subset([item]), record_trace=True)
    trace = res.trace
    so = sorted_trace(trace)
    spec = mean_channel_spectrum(trace, shuffles=shuffles, seed=seed)
    sorted_spec = mean_channel_spectrum(so, shuffles=shuffles, seed=seed)
    result = AnalysisResult(spec, sorted_spec)
    pred = None
    if cfg.task == "copy":
        result.recall_accuracy, pred = recall_accuracy(params, batch)
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        result.trace_path = dump_trace(trace, out / "trace.wrnh")
        dump_trace(so, out / "trace_sorted.wrnh")
        write_spectrum_csv(spec, out / "spectrum.csv")
        write_spectrum_csv(sorted_spec, out / "spectrum_sorted.csv")
        if pred is not None:
            write_predictions(batch, pred, out / "predictions.csv")
        (out / "analysis.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return result


def analyze_checkpoint(checkpoint, cfg: RunConfig, out=None, **kw) -> AnalysisResult:
    return analyze(load_checkpoint(checkpoint), cfg, out, **kw)
