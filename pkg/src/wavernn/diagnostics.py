"""Traveling-wave diagnostics on recorded hidden traces.

A channel slab ``h[x, t]`` (ring position by timestep) is Fourier transformed
in both axes.  A wave moving towards higher indices at ``v`` units/step,
``h = g(x - v t)``, puts its energy at spatial bin ``k`` and temporal bin
``-v k T / n`` (mod T).  The retained quadrant therefore pairs spatial bin
``k`` with temporal bin ``-w``, so such a wave appears on the line
``w = v k T / n``.  ``direction=-1`` keeps the mirrored quadrant instead
(waves moving towards lower indices).  Together the two quadrants fix the
whole magnitude plane of a real trace by conjugate symmetry.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cells import HiddenTrace

TRACE_MAGIC = b"WRNH"
TRACE_VERSION = 1
DEFAULT_SHUFFLES = 20
SPECTRUM_HEADER = ("k", "omega", "log_power")


class TraceFormatError(ValueError):
    pass


def default_v_grid() -> np.ndarray:
    return np.geomspace(0.05, 5.0, 200)


@dataclass
class WaveSpectrum:
    """Shuffle-normalised log magnitude on the (k, omega) quadrant plus velocity fit."""

    log_power: np.ndarray       # (n//2 + 1, T//2 + 1), natural log
    raw: np.ndarray             # un-normalised |DFT| on the same quadrant
    n: int
    steps: int
    shuffles: int
    shuffle_seed: int
    direction: int = 1
    velocity: float = float("nan")
    score: float = float("nan")
    contrast: float = float("nan")

    @property
    def ratio(self) -> np.ndarray:
        return np.exp(self.log_power)


def _quadrant(mag: np.ndarray, direction: int) -> np.ndarray:
    n, T = mag.shape
    ks = np.arange(n // 2 + 1)
    ws = np.arange(T // 2 + 1)
    cols = (-direction * ws) % T
    return mag[np.ix_(ks, cols)]


def spectrum_magnitude(slab: np.ndarray, direction: int = 1) -> np.ndarray:
    """|DFT2| of an (n, T) slab restricted to the retained quadrant."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    return _quadrant(np.abs(np.fft.fft2(slab)), direction)


def power_spectrum_2d(trace, channel: int = 0, shuffles: int = DEFAULT_SHUFFLES, seed: int = 0,
                      direction: int = 1, v_grid=None) -> WaveSpectrum:
    """Shuffle-normalised spectrum of one channel with a fitted velocity.

    ``trace`` is a ``HiddenTrace`` or a bare (n, T) array.  Each shuffle is an
    independent permutation of all (space, time) entries.  The shuffled
    magnitudes are averaged in the log domain (geometric mean), so pure noise
    normalises to a log ratio of 0 rather than the Rayleigh bias of about -0.17.
    """
    slab = trace.channel(channel) if isinstance(trace, HiddenTrace) else np.asarray(trace)
    slab = np.asarray(slab, dtype=np.float64)
    if slab.ndim != 2:
        raise ValueError(f"slab must be (n, T), got {slab.shape}")
    n, T = slab.shape
    if T < 8:
        raise ValueError(f"need at least 8 timesteps, got {T}")
    if shuffles < 1:
        raise ValueError("need at least one shuffle")
    if not np.all(np.isfinite(slab)) or np.ptp(slab) == 0:
        raise ValueError("zero-variance trace")
    raw = spectrum_magnitude(slab, direction)
    rng = np.random.Generator(np.random.Philox(int(seed)))
    flat = slab.ravel()
    tiny = np.finfo(np.float64).tiny
    log_ref = np.zeros_like(raw)
    for _ in range(shuffles):
        log_ref += np.log(np.maximum(spectrum_magnitude(rng.permutation(flat).reshape(n, T), direction), tiny))
    log_ref /= shuffles
    log_power = np.log(np.maximum(raw, tiny)) - log_ref
    spec = WaveSpectrum(log_power, raw, n, T, shuffles, int(seed), direction)
    spec.velocity, spec.score, spec.contrast = estimate_velocity(spec, v_grid)
    return spec


def band_weights(shape: tuple[int, int], n: int, steps: int, v: float) -> np.ndarray:
    """Triangular weights, one bin wide on each side, around ``w = v k T / n``.

    DC row and column are excluded.
    """
    K, W = shape
    k = np.arange(K)[:, None]
    w = np.arange(W)[None, :]
    weights = np.maximum(0.0, 1.0 - np.abs(w - v * k * steps / n))
    weights[0, :] = 0
    weights[:, 0] = 0
    return weights


def estimate_velocity(spec: WaveSpectrum, v_grid=None) -> tuple[float, float, float]:
    """Best line velocity, its band-energy fraction and its band/off-band contrast.

    For each candidate ``v`` the normalised power under the band weights is
    summed; the argmax is the velocity estimate.  ``score`` is band energy over
    total (non-DC) energy.  ``contrast`` is the mean power per unit band
    weight divided by the mean power outside the band; it sits near 1 for
    noise.
    """
    v_grid = default_v_grid() if v_grid is None else np.asarray(v_grid, dtype=float)
    ratio = spec.ratio
    mask = np.ones_like(ratio)
    mask[0, :] = 0
    mask[:, 0] = 0
    total = float(np.sum(ratio * mask))
    cells = float(mask.sum())
    best = (-np.inf, np.nan, np.nan, np.nan)
    for v in v_grid:
        wts = band_weights(ratio.shape, spec.n, spec.steps, v)
        wsum = wts.sum()
        if wsum == 0:
            continue
        band = float(np.sum(wts * ratio))
        if band > best[0]:
            off = (total - band) / max(cells - wsum, 1e-12)
            contrast = (band / wsum) / off if off > 0 else np.inf
            best = (band, float(v), band / total, float(contrast))
    return best[1], best[2], best[3]


def directionality(trace, channel: int = 0, v_grid=None) -> float:
    """Signed band-energy imbalance between the two temporal-frequency quadrants.

    Uses the un-normalised magnitude: +1 for a pure wave towards higher
    indices, -1 towards lower indices, 0 for any separable ``f(x) g(t)``
    trace (standing patterns have mirror-symmetric quadrants).
    """
    slab = trace.channel(channel) if isinstance(trace, HiddenTrace) else np.asarray(trace, dtype=np.float64)
    n, T = slab.shape
    v_grid = default_v_grid() if v_grid is None else np.asarray(v_grid, dtype=float)
    bands = []
    for direction in (1, -1):
        mag = spectrum_magnitude(slab, direction)
        bands.append(max(float(np.sum(band_weights(mag.shape, n, T, v) * mag)) for v in v_grid))
    total = bands[0] + bands[1]
    return 0.0 if total == 0 else (bands[0] - bands[1]) / total


def onset_sort(trace) -> np.ndarray:
    """Neuron order by the timestep of maximum activation (ties by neuron index)."""
    states = trace.states if isinstance(trace, HiddenTrace) else np.asarray(trace)
    if states.size == 0:
        raise ValueError("empty trace")
    onset = np.argmax(states, axis=1)
    return np.argsort(onset, kind="stable")


def sorted_trace(trace: HiddenTrace) -> HiddenTrace:
    """Single-channel trace with all neurons reordered by onset."""
    order = onset_sort(trace)
    return HiddenTrace(trace.states[order], n=trace.states.shape[0], c=1)


def mean_channel_spectrum(trace: HiddenTrace, shuffles: int = DEFAULT_SHUFFLES, seed: int = 0,
                          v_grid=None) -> WaveSpectrum:
    """Average the normalised power over all non-constant channels, then fit a velocity."""
    specs = []
    for k in range(trace.c):
        slab = trace.channel(k)
        if np.ptp(slab) == 0:
            continue
        specs.append(power_spectrum_2d(slab, shuffles=shuffles, seed=seed + k, v_grid=v_grid))
    if not specs:
        raise ValueError("zero-variance trace")
    ratio = np.mean([s.ratio for s in specs], axis=0)
    raw = np.mean([s.raw for s in specs], axis=0)
    spec = WaveSpectrum(np.log(ratio), raw, trace.n, trace.steps, shuffles, seed)
    spec.velocity, spec.score, spec.contrast = estimate_velocity(spec, v_grid)
    return spec


def synthetic_wave(n: int, steps: int, v: float, k: int = 1) -> np.ndarray:
    """``sin(2 pi k (x - v t) / n)`` on an (n, steps) grid."""
    x = np.arange(n)[:, None]
    t = np.arange(steps)[None, :]
    return np.sin(2 * np.pi * k * (x - v * t) / n)


# ---------------------------------------------------------------- files

def dump_trace(trace: HiddenTrace, path) -> Path:
    """``WRNH``, version, ndims=3, dims (c, n, steps), then little-endian f32 states."""
    path = Path(path)
    dims = (trace.c, trace.n, trace.steps)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII3I", TRACE_MAGIC, TRACE_VERSION, 3, *dims))
        fh.write(np.ascontiguousarray(trace.states, dtype="<f4").tobytes())
    return path


def load_trace(path) -> HiddenTrace:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TraceFormatError(f"truncated trace header at byte {len(data)}")
    magic, version, ndims = struct.unpack_from("<4sII", data, 0)
    if magic != TRACE_MAGIC:
        raise TraceFormatError(f"unexpected magic {magic!r} at offset 0")
    if version != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {version} at offset 4")
    if ndims != 3:
        raise TraceFormatError(f"expected 3 dims, got {ndims} at offset 8")
    if len(data) < 24:
        raise TraceFormatError(f"truncated dims at byte {len(data)}")
    c, n, steps = struct.unpack_from("<3I", data, 12)
    count = c * n * steps
    if len(data) - 24 < 4 * count:
        raise TraceFormatError(f"truncated payload at byte {len(data)} (need {24 + 4 * count})")
    if len(data) - 24 > 4 * count:
        raise TraceFormatError(f"trailing bytes after offset {24 + 4 * count}")
    states = np.frombuffer(data, dtype="<f4", count=count, offset=24).reshape(c * n, steps).astype(np.float32)
    return HiddenTrace(states, n=n, c=c)


def write_spectrum_csv(spec: WaveSpectrum, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SPECTRUM_HEADER)
        K, W = spec.log_power.shape
        for k in range(K):
            for om in range(W):
                w.writerow([k, om, repr(float(spec.log_power[k, om]))])
    return path


def read_spectrum_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != SPECTRUM_HEADER:
        raise ValueError(f"unexpected spectrum header {rows[0]}")
    body = np.array([[float(x) for x in r] for r in rows[1:]])
    K, W = int(body[:, 0].max()) + 1, int(body[:, 1].max()) + 1
    out = np.empty((K, W))
    out[body[:, 0].astype(int), body[:, 1].astype(int)] = body[:, 2]
    return out
