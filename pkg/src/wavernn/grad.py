"""Backpropagation through time for every cell / readout / loss combination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import CellParams, ForwardCache, forward_sequence
from .numeric import DivergenceError, activate, activation_grad
from .tasks import SequenceBatch

#: freeze-group name -> tensor names it covers
FREEZE_GROUPS = {
    "recurrent": ("u", "U", "bank"),
    "encoder": ("V",),
    "bias": ("b",),
    "readout": ("W1", "c1", "W2", "c2"),
}


def frozen_tensors(groups) -> set[str]:
    names = set()
    for g in groups:
        if g not in FREEZE_GROUPS:
            raise ValueError(f"unknown freeze group {g!r}; choose from {sorted(FREEZE_GROUPS)}")
        names.update(FREEZE_GROUPS[g])
    return names


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(g.astype(np.float64) ** 2) for g in grads.values())))


def backward_sequence(params: CellParams, batch: SequenceBatch, cache: ForwardCache | None,
                      frozen=()) -> tuple[dict[str, np.ndarray], float]:
    """Exact gradients of the mean loss w.r.t. every tensor in ``params.tensors()``.

    ``frozen`` is a collection of freeze groups (see ``FREEZE_GROUPS``); their
    gradients are returned as exact zeros.
    """
    if cache is None or cache.pre is None:
        raise ValueError("backward_sequence needs the cache from forward_sequence(keep_cache=True)")
    skip = frozen_tensors(frozen)
    tensors = params.tensors()
    grads = {k: np.zeros_like(v) for k, v in tensors.items()}
    ro = params.readout
    act = params.activation
    pre, x = cache.pre, cache.inputs
    T = pre.shape[0]
    per_step = ro.mode == "per-step-linear"
    rec = params.recurrent_name
    rec_grad = rec not in skip

    h_next = activate(act, pre[T - 1])
    dh = np.zeros_like(h_next)
    if not per_step:
        dy = cache.doutputs[None] if ro.mode == "final-scalar" else cache.doutputs
        dh, rog = ro.backward(dy, h_next, cache.mlp_pre)
        for k, g in rog.items():
            grads[k] = g
    else:
        dlogits = cache.doutputs
        grads["W1"] = np.tensordot(dlogits[T - 1], h_next, axes=([1], [1]))
        grads["c1"] = dlogits.sum(axis=(0, 2))

    for t in range(T - 1, -1, -1):
        if per_step:
            dh += ro.W1.T @ dlogits[t]
            if t < T - 1:
                grads["W1"] += dlogits[t] @ h_next.T
        dpre = dh * activation_grad(act, pre[t], h_next if act == "tanh" else None)
        grads["b"] += dpre.sum(axis=1)
        grads["V"] += dpre @ x[t]
        if t == 0:
            break
        h_t = activate(act, pre[t - 1])
        dh, drec = params.recur_backward(dpre, h_t, need_param_grad=rec_grad)
        if rec_grad:
            grads[rec] += drec
        h_next = h_t

    for k in skip & grads.keys():
        grads[k][...] = 0
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k!r}")
    return grads, global_norm(grads)


def loss_and_gradients(params: CellParams, batch: SequenceBatch, frozen=()):
    res = forward_sequence(params, batch, keep_cache=True)
    grads, norm = backward_sequence(params, batch, res.cache, frozen)
    return res.loss, grads, norm


# ---------------------------------------------------------------- finite differences

@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    checked: dict[str, int]
    skipped: dict[str, int]
    tolerance: float
    worst: dict[str, tuple] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_rel_error.values())

    def __str__(self) -> str:
        lines = [f"gradient check {'PASS' if self.passed else 'FAIL'} (tol {self.tolerance:g})"]
        for k, e in self.max_rel_error.items():
            lines.append(f"  {k:>5}: max rel err {e:.3e} over {self.checked[k]} coords"
                         f" ({self.skipped[k]} skipped at ReLU kinks)")
        return "\n".join(lines)


def _loss_and_signature(params: CellParams, batch: SequenceBatch, kinked: bool):
    """Loss plus the signs of every ReLU pre-activation (to detect kink crossings)."""
    res = forward_sequence(params, batch, keep_cache=kinked)
    if not kinked:
        return res.loss, None
    sig = []
    if params.activation == "relu":
        sig.append(res.cache.pre > 0)
    if res.cache.mlp_pre is not None:
        sig.append(res.cache.mlp_pre > 0)
    return res.loss, sig


def finite_diff_check(params: CellParams, batch: SequenceBatch, step: float = 1e-5, tolerance: float = 1e-5,
                      max_coords: int | None = None, rng=None, analytic=None, frozen=()) -> GradCheckReport:
    """Compare analytic gradients with a 5-point central-difference oracle.

    The analytic side runs in float64.  The oracle evaluates the loss in
    extended precision (``np.longdouble``) so rounding stays far below the
    tolerance even for tiny gradient entries.  Relative error per coordinate
    is ``|g_analytic - g_fd| / max(|g_fd|, 1e-8)``.  Coordinates whose
    perturbation flips the sign of any ReLU pre-activation are skipped and
    counted.  ``analytic`` may supply precomputed gradients (e.g. to test the
    checker itself); ``max_coords`` samples that many coordinates per tensor.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    p64 = params.astype(np.float64)
    if analytic is None:
        _, analytic, _ = loss_and_gradients(p64, batch, frozen)
    probe = params.astype(np.longdouble)
    tensors = probe.tensors()
    kinked = params.activation == "relu" or params.readout.mode == "final-mlp2"
    _, base_sig = _loss_and_signature(probe, batch, kinked)

    def loss_at(name, idx, delta):
        t = tensors[name]
        old = t[idx]
        t[idx] = old + delta
        try:
            return _loss_and_signature(probe, batch, kinked)
        finally:
            t[idx] = old

    errors, checked, skipped, worst = {}, {}, {}, {}
    h = np.longdouble(step)
    for name, t in tensors.items():
        flat = np.arange(t.size)
        if max_coords is not None and t.size > max_coords:
            flat = np.sort(rng.choice(t.size, size=max_coords, replace=False))
        errors[name], checked[name], skipped[name] = 0.0, 0, 0
        for f in flat:
            idx = np.unravel_index(f, t.shape)
            evals, crossed = [], False
            for delta in (2 * h, h, -h, -2 * h):
                loss, sig = loss_at(name, idx, delta)
                evals.append(loss)
                if kinked and any(np.any(a != b) for a, b in zip(sig, base_sig)):
                    crossed = True
                    break
            if crossed:
                skipped[name] += 1
                continue
            fd = float((-evals[0] + 8 * evals[1] - 8 * evals[2] + evals[3]) / (12 * h))
            ga = float(analytic[name][idx])
            err = abs(ga - fd) / max(abs(fd), 1e-8)
            checked[name] += 1
            if err >= errors[name]:
                errors[name] = err
                worst[name] = (idx, ga, fd)
    return GradCheckReport(errors, checked, skipped, tolerance, worst)
