"""Dense numeric kernels shared by the cells, gradients and optimizer.

Hidden states are stored column-major over the batch: an array of shape
``(N, B)`` where ``N = c * n`` and hidden index ``k * n + i`` is unit ``i`` of
channel ``k``.

Convolution orientation
-----------------------
``circular_conv1d`` is a true (flipped) circular convolution with centre tap
``r = f // 2``::

    out[o, i] = sum_{j, m} kernel[o, j, m] * h[j, (i - (m - r)) mod n]

so output ``i`` reads inputs ``i+1, i, i-1`` through taps ``0, 1, 2``.  The
kernel ``[0, 0, 1]`` therefore moves a unit impulse forward by one index per
application, and ``[0, 1 - nu, nu]`` equals ``make_shift_matrix(n, nu)``.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


class DivergenceError(FloatingPointError):
    """Raised when a forward, backward or optimizer step produces non-finite values."""


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(int(seed)))


def split_rng(seed: int, count: int) -> list[np.random.Generator]:
    """Independent Philox streams derived from one seed via ``SeedSequence.spawn``."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


def _check_kernel(kernel: np.ndarray, n: int) -> tuple[int, int]:
    if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[1]:
        raise ValueError(f"kernel must have shape (c, c, f), got {kernel.shape}")
    c, _, f = kernel.shape
    if f % 2 == 0:
        raise ValueError(f"kernel width must be odd, got {f}")
    if f > n:
        raise ValueError(f"kernel width {f} exceeds ring size {n}")
    return c, f


def tap_shifts(f: int) -> range:
    """Positional shift applied by each kernel tap (tap m moves data by m - f//2)."""
    r = f // 2
    return range(-r, f - r)


def roll_stack(h3: np.ndarray, f: int, out: np.ndarray | None = None) -> np.ndarray:
    """Stack circularly shifted copies of ``h3`` (c, n, ...) along a new leading tap axis.

    ``out[m, :, i] = h3[:, (i - s_m) mod n]`` with ``s_m = m - f//2``.
    """
    n = h3.shape[1]
    if out is None:
        out = np.empty((f,) + h3.shape, dtype=h3.dtype)
    for m, s in enumerate(tap_shifts(f)):
        s %= n
        if s == 0:
            out[m] = h3
        else:
            out[m, :, s:] = h3[:, : n - s]
            out[m, :, :s] = h3[:, n - s :]
    return out


def unroll_sum(dx: np.ndarray) -> np.ndarray:
    """Adjoint of ``roll_stack``: shift each tap slice back and sum over taps."""
    f, _, n = dx.shape[:3]
    out = np.zeros(dx.shape[1:], dtype=dx.dtype)
    for m, s in enumerate(tap_shifts(f)):
        s %= n
        if s == 0:
            out += dx[m]
        else:
            out[:, : n - s] += dx[m, :, s:]
            out[:, n - s :] += dx[m, :, :s]
    return out


def circular_conv1d(kernel: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Multi-channel circular convolution of ``h`` with shape (c, n) or (c, n, B)."""
    if h.ndim not in (2, 3):
        raise ValueError(f"h must have shape (c, n) or (c, n, B), got {h.shape}")
    c, f = _check_kernel(kernel, h.shape[1])
    if h.shape[0] != c:
        raise ValueError(f"kernel has {c} channels but h has {h.shape[0]}")
    stacked = roll_stack(h, f)
    # (c_out, f, c_in) @ (f, c_in, rest) contracted over (f, c_in)
    w2 = kernel.transpose(0, 2, 1).reshape(c, f * c)
    out = w2 @ stacked.reshape(f * c, -1)
    return out.reshape(h.shape)


def make_shift_matrix(n: int, nu: float, dtype=np.float64) -> np.ndarray:
    """Circulant one-way wave operator: ``1 - nu`` on the diagonal, ``nu`` one step behind.

    Row ``i`` is ``(1 - nu) e_i + nu e_{i-1 mod n}``, the dense form of the
    kernel ``[0, 1 - nu, nu]`` under the orientation documented above.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")
    idx = np.arange(n)
    m = np.zeros((n, n), dtype=dtype)
    m[idx, idx] = 1.0 - nu
    m[idx, (idx - 1) % n] += nu
    return m


def conv_as_matrix(kernel: np.ndarray, n: int) -> np.ndarray:
    """Dense (c*n, c*n) matrix M with ``M @ h.ravel() == circular_conv1d(kernel, h).ravel()``."""
    c, f = _check_kernel(kernel, n)
    m = np.zeros((c * n, c * n), dtype=kernel.dtype)
    idx = np.arange(n)
    for o in range(c):
        for j in range(c):
            for tap, s in enumerate(tap_shifts(f)):
                np.add.at(m, (o * n + idx, j * n + (idx - s) % n), kernel[o, j, tap])
    return m


def local_as_matrix(bank: np.ndarray, n: int) -> np.ndarray:
    """Dense form of an untied per-position kernel bank of shape (c*n, c, f)."""
    cn, c, f = bank.shape
    if cn != c * n:
        raise ValueError(f"bank rows {cn} != c*n = {c * n}")
    m = np.zeros((cn, cn), dtype=bank.dtype)
    for row in range(cn):
        i = row % n
        for j in range(c):
            for tap, s in enumerate(tap_shifts(f)):
                m[row, j * n + (i - s) % n] += bank[row, j, tap]
    return m


def activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0)
    if name == "tanh":
        return np.tanh(x)
    if name == "identity":
        return x
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, pre: np.ndarray, post: np.ndarray | None = None) -> np.ndarray:
    """Derivative of the activation at ``pre``; ReLU uses subgradient 0 at 0."""
    if name == "relu":
        return (pre > 0).astype(pre.dtype)
    if name == "tanh":
        t = np.tanh(pre) if post is None else post
        return 1 - t * t
    if name == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {name!r}")


def relu(x):
    x = np.asarray(x)
    return activate("relu", x), activation_grad("relu", x)


def tanh(x):
    x = np.asarray(x)
    return activate("tanh", x), activation_grad("tanh", x)


def identity(x):
    x = np.asarray(x)
    return x, np.ones_like(x)


def softmax(logits: np.ndarray, axis: int = 0) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, labels, axis: int = 0):
    """Mean cross-entropy over every label position and its gradient w.r.t. ``logits``.

    ``logits`` holds class scores along ``axis``; ``labels`` has the remaining
    shape.  The mean is reduced in at least float64 and returned as a numpy
    scalar so extended-precision callers keep their precision.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    k = logits.shape[axis]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"class index out of range for {k} classes")
    x = np.moveaxis(logits, axis, 0)
    if labels.shape != x.shape[1:]:
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    z = x - x.max(axis=0, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=0))
    picked = np.take_along_axis(z, labels[None].astype(np.intp), axis=0)[0]
    count = max(labels.size, 1)
    loss = np.sum(lse - picked, dtype=np.promote_types(x.dtype, np.float64)) / count
    grad = np.exp(z - lse)
    np.put_along_axis(grad, labels[None].astype(np.intp),
                      np.take_along_axis(grad, labels[None].astype(np.intp), axis=0) - 1, axis=0)
    grad /= count
    return loss, np.moveaxis(grad, 0, axis)


def mse(pred, target):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred)
    diff = pred - np.asarray(target, dtype=pred.dtype)
    count = max(diff.size, 1)
    acc = diff.astype(np.promote_types(diff.dtype, np.float64))
    loss = np.sum(acc * acc) / count
    return loss, diff * (2.0 / count)
