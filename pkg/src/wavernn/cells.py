"""Recurrent cells (wave, identity/dense and locally connected), readouts and the forward pass."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar

import numpy as np

from .numeric import (
    DivergenceError,
    activate,
    activation_grad,
    make_shift_matrix,
    mse,
    roll_stack,
    softmax_cross_entropy,
    unroll_sum,
)
from .tasks import LOSS_MODES, SequenceBatch

READOUT_MODES = ("final-linear", "per-step-linear", "final-scalar", "final-mlp2")

#: readout mode -> loss mode it can be trained with
READOUT_LOSS = {
    "final-linear": "final-categorical",
    "final-mlp2": "final-categorical",
    "per-step-linear": "per-step-categorical",
    "final-scalar": "final-scalar",
}

WRNN_SCHEMES = ("u-shift", "u-random", "u-dirac", "multi-speed")
LOCAL_SCHEMES = WRNN_SCHEMES + ("variable-velocity",)
V_SCHEMES = ("V-sparse", "V-normal")
IRNN_SCHEMES = ("identity", "kaiming-uniform", "sigma-shift")

# std of the dense-normal encoder initialisation
V_NORMAL_STD = 1e-3


@dataclass
class ReadoutParams:
    mode: str
    W1: np.ndarray
    c1: np.ndarray
    W2: np.ndarray | None = None
    c2: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in READOUT_MODES:
            raise ValueError(f"unknown readout mode {self.mode!r}")
        if self.mode == "final-mlp2" and (self.W2 is None or self.c2 is None):
            raise ValueError("final-mlp2 readout needs W2 and c2")

    @property
    def out_dim(self) -> int:
        return (self.W2 if self.mode == "final-mlp2" else self.W1).shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0] if self.mode == "final-mlp2" else 0

    def tensors(self) -> dict[str, np.ndarray]:
        out = {"W1": self.W1, "c1": self.c1}
        if self.mode == "final-mlp2":
            out.update(W2=self.W2, c2=self.c2)
        return out

    def apply(self, h: np.ndarray):
        """Readout of hidden columns ``h`` (N, B); returns (output, mlp hidden pre-activation)."""
        z = self.W1 @ h + self.c1[:, None]
        if self.mode != "final-mlp2":
            return z, None
        return self.W2 @ np.maximum(z, 0) + self.c2[:, None], z

    def backward(self, dy: np.ndarray, h: np.ndarray, z: np.ndarray | None):
        """Returns (dh, grads) for a final readout given upstream ``dy`` (o, B)."""
        if self.mode != "final-mlp2":
            return self.W1.T @ dy, {"W1": dy @ h.T, "c1": dy.sum(axis=1)}
        a = np.maximum(z, 0)
        grads = {"W2": dy @ a.T, "c2": dy.sum(axis=1)}
        dz = (self.W2.T @ dy) * (z > 0)
        grads.update(W1=dz @ h.T, c1=dz.sum(axis=1))
        return self.W1.T @ dz, grads


@dataclass
class CellParams:
    """Shared encoder/bias/readout for every cell kind.

    Subclasses add the recurrent tensor and implement ``recur`` and
    ``recur_backward`` over hidden columns of shape (N, B).
    """

    V: np.ndarray
    b: np.ndarray
    readout: ReadoutParams
    activation: str

    kind: ClassVar[str] = ""
    recurrent_name: ClassVar[str] = ""

    @property
    def N(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]

    @property
    def o(self) -> int:
        return self.readout.out_dim

    @property
    def dtype(self):
        return self.V.dtype

    @property
    def recurrent(self) -> np.ndarray:
        return getattr(self, self.recurrent_name)

    @property
    def channels(self) -> int:
        return 1

    @property
    def ring(self) -> int:
        return self.N

    def tensors(self) -> dict[str, np.ndarray]:
        """All learnable tensors in declaration order (shared references, not copies)."""
        out = {self.recurrent_name: self.recurrent, "V": self.V, "b": self.b}
        out.update(self.readout.tensors())
        return out

    def astype(self, dtype) -> "CellParams":
        ro = self.readout
        readout = ReadoutParams(
            ro.mode, ro.W1.astype(dtype), ro.c1.astype(dtype),
            None if ro.W2 is None else ro.W2.astype(dtype),
            None if ro.c2 is None else ro.c2.astype(dtype),
        )
        return replace(self, **{self.recurrent_name: self.recurrent.astype(dtype)},
                       V=self.V.astype(dtype), b=self.b.astype(dtype), readout=readout)

    def copy(self) -> "CellParams":
        return self.astype(self.dtype)

    def recur(self, h: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def recur_backward(self, g: np.ndarray, h: np.ndarray, need_param_grad: bool = True):
        raise NotImplementedError


@dataclass
class WRnnParams(CellParams):
    u: np.ndarray = field(default=None)
    n: int = 0

    kind: ClassVar[str] = "wrnn"
    recurrent_name: ClassVar[str] = "u"

    def __post_init__(self):
        c, c2, f = self.u.shape
        if c != c2 or f % 2 == 0:
            raise ValueError(f"kernel must be (c, c, odd f), got {self.u.shape}")
        if self.V.shape[0] != c * self.n:
            raise ValueError(f"N={self.V.shape[0]} != c*n={c * self.n}")

    @property
    def channels(self) -> int:
        return self.u.shape[0]

    @property
    def ring(self) -> int:
        return self.n

    @property
    def width(self) -> int:
        return self.u.shape[2]

    def _w2(self) -> np.ndarray:
        c, _, f = self.u.shape
        return self.u.transpose(0, 2, 1).reshape(c, f * c)

    def recur(self, h):
        c, _, f = self.u.shape
        bsz = h.shape[1]
        x = roll_stack(h.reshape(c, self.n, bsz), f).reshape(f * c, self.n * bsz)
        return (self._w2() @ x).reshape(h.shape)

    def recur_backward(self, g, h, need_param_grad=True):
        c, _, f = self.u.shape
        n, bsz = self.n, g.shape[1]
        g2 = g.reshape(c, n * bsz)
        du = None
        if need_param_grad:
            x = roll_stack(h.reshape(c, n, bsz), f).reshape(f * c, n * bsz)
            du = (g2 @ x.T).reshape(c, f, c).transpose(0, 2, 1)
        dx = (self._w2().T @ g2).reshape(f, c, n, bsz)
        return unroll_sum(dx).reshape(g.shape), du


@dataclass
class IRnnParams(CellParams):
    U: np.ndarray = field(default=None)

    kind: ClassVar[str] = "irnn"
    recurrent_name: ClassVar[str] = "U"

    def recur(self, h):
        return self.U @ h

    def recur_backward(self, g, h, need_param_grad=True):
        return self.U.T @ g, (g @ h.T if need_param_grad else None)


@dataclass
class LocalRnnParams(CellParams):
    """Untied 'locally connected' ring: one (c, f) kernel per output position."""

    bank: np.ndarray = field(default=None)
    n: int = 0

    kind: ClassVar[str] = "local"
    recurrent_name: ClassVar[str] = "bank"

    def __post_init__(self):
        cn, c, f = self.bank.shape
        if cn != c * self.n or f % 2 == 0:
            raise ValueError(f"bank must be (c*n, c, odd f), got {self.bank.shape} for n={self.n}")

    @property
    def channels(self) -> int:
        return self.bank.shape[1]

    @property
    def ring(self) -> int:
        return self.n

    @property
    def width(self) -> int:
        return self.bank.shape[2]

    def _per_position(self) -> np.ndarray:
        # [i, k, m*c + j] = bank[k*n + i, j, m]
        _, c, f = self.bank.shape
        return self.bank.reshape(c, self.n, c, f).transpose(1, 0, 3, 2).reshape(self.n, c, f * c)

    def _stacked(self, h):
        _, c, f = self.bank.shape
        x = roll_stack(h.reshape(c, self.n, h.shape[1]), f)
        return x.transpose(2, 0, 1, 3).reshape(self.n, f * c, h.shape[1])

    def recur(self, h):
        out = np.matmul(self._per_position(), self._stacked(h))  # (n, c, B)
        return out.transpose(1, 0, 2).reshape(h.shape)

    def recur_backward(self, g, h, need_param_grad=True):
        _, c, f = self.bank.shape
        n, bsz = self.n, g.shape[1]
        g3 = g.reshape(c, n, bsz).transpose(1, 0, 2)
        dbank = None
        if need_param_grad:
            dpos = np.matmul(g3, self._stacked(h).transpose(0, 2, 1))  # (n, c, f*c)
            dbank = dpos.reshape(n, c, f, c).transpose(1, 0, 3, 2).reshape(c * n, c, f)
        dx = np.matmul(self._per_position().transpose(0, 2, 1), g3)  # (n, f*c, B)
        dx = dx.reshape(n, f, c, bsz).transpose(1, 2, 0, 3)
        return unroll_sum(dx).reshape(g.shape), dbank


CELL_TYPES = {cls.kind: cls for cls in (WRnnParams, IRnnParams, LocalRnnParams)}


@dataclass
class HiddenTrace:
    """Hidden states of one sequence, one column per timestep (column 0 is h_0 = 0)."""

    states: np.ndarray
    n: int
    c: int = 1

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] != self.n * self.c:
            raise ValueError(f"states shape {self.states.shape} does not match c={self.c}, n={self.n}")

    @property
    def steps(self) -> int:
        return self.states.shape[1]

    def channel(self, k: int) -> np.ndarray:
        if not 0 <= k < self.c:
            raise ValueError(f"channel {k} out of range for {self.c} channels")
        return self.states[k * self.n:(k + 1) * self.n]


# ---------------------------------------------------------------- initialisers

def _uniform(rng, shape, bound, dtype):
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_readout(N: int, o: int, mode: str, rng, dtype=np.float32, hidden: int = 100) -> ReadoutParams:
    if mode not in READOUT_MODES:
        raise ValueError(f"unknown readout mode {mode!r}")
    if mode == "final-scalar" and o != 1:
        raise ValueError("final-scalar readout has exactly one output")
    if mode != "final-mlp2":
        return ReadoutParams(mode, _uniform(rng, (o, N), 1 / np.sqrt(N), dtype), np.zeros(o, dtype))
    return ReadoutParams(
        mode,
        _uniform(rng, (hidden, N), 1 / np.sqrt(N), dtype), np.zeros(hidden, dtype),
        _uniform(rng, (o, hidden), 1 / np.sqrt(hidden), dtype), np.zeros(o, dtype),
    )


def sparse_identity_encoder(c: int, n: int, d: int, dtype=np.float32) -> np.ndarray:
    """Encoder with a single unit weight per (input, source) pair.

    Input ``j`` drives unit ``j // c`` of channel ``j % c``; when ``d < c`` the
    remaining channels are driven at unit 0 by input ``k % d`` so every
    channel has a source.
    """
    if d > c * n:
        raise ValueError(f"d={d} inputs do not fit in {c}x{n} hidden units")
    V = np.zeros((c * n, d), dtype=dtype)
    for j in range(d):
        V[(j % c) * n + j // c, j] = 1.0
    for k in range(d, c):
        V[k * n, k % d] = 1.0
    return V


def _parse_scheme(scheme: str, allowed: tuple[str, ...]) -> tuple[str, str]:
    u, v = None, "V-sparse"
    for part in scheme.split("+"):
        if part in allowed:
            u = part
        elif part in V_SCHEMES:
            v = part
        else:
            raise ValueError(f"unknown init scheme component {part!r} in {scheme!r}")
    if u is None:
        raise ValueError(f"scheme {scheme!r} names no recurrent initialisation")
    return u, v


def _encoder(v_scheme, c, n, d, rng, dtype):
    if v_scheme == "V-sparse":
        return sparse_identity_encoder(c, n, d, dtype)
    return (rng.standard_normal((c * n, d)) * V_NORMAL_STD).astype(dtype)


def _shift_taps(f: int, nu: float) -> np.ndarray:
    taps = np.zeros(f)
    taps[f // 2] = 1.0 - nu
    taps[f // 2 + 1] = nu
    return taps


def _wave_kernel(u_scheme, c, n, f, rng, dtype):
    u = np.zeros((c, c, f))
    if u_scheme == "u-random":
        return _uniform(rng, (c, c, f), 1 / np.sqrt(c * f), dtype), None
    nus = None
    if u_scheme == "u-shift":
        nus = np.ones(c)
    elif u_scheme == "u-dirac":
        nus = np.zeros(c)
    elif u_scheme == "multi-speed":
        nus = rng.uniform(0.0, 1.0, size=c)
    for k in range(c):
        u[k, k] = _shift_taps(f, nus[k])
    return u.astype(dtype), nus


def init_wrnn(n: int, c: int, f: int, d: int, o: int, activation: str = "relu", rng=None,
              scheme: str = "u-shift+V-sparse", readout: str = "final-linear",
              dtype=np.float32, mlp_hidden: int = 100) -> WRnnParams:
    """Wave-RNN parameters.

    ``scheme`` combines a kernel init (``u-shift``, ``u-random``, ``u-dirac``,
    ``multi-speed``) with an encoder init (``V-sparse`` default, ``V-normal``),
    e.g. ``"u-random+V-normal"``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if f % 2 == 0 or f < 3 or f > n:
        raise ValueError(f"kernel width must be odd, >= 3 and <= n; got f={f}, n={n}")
    if activation not in ("relu", "tanh", "identity"):
        raise ValueError(f"unknown activation {activation!r}")
    u_scheme, v_scheme = _parse_scheme(scheme, WRNN_SCHEMES)
    u, _ = _wave_kernel(u_scheme, c, n, f, rng, dtype)
    V = _encoder(v_scheme, c, n, d, rng, dtype)
    return WRnnParams(V=V, b=np.zeros(c * n, dtype), readout=init_readout(c * n, o, readout, rng, dtype, mlp_hidden),
                      activation=activation, u=u, n=n)


def init_local(n: int, c: int, f: int, d: int, o: int, activation: str = "relu", rng=None,
               scheme: str = "u-shift+V-sparse", readout: str = "final-linear",
               dtype=np.float32, mlp_hidden: int = 100) -> LocalRnnParams:
    """Locally connected ring with every position initialised like the wave kernel.

    ``variable-velocity`` gives position ``i`` of every channel the shift
    velocity ``1 / (i + 1)``, so waves slow down as they travel.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    if f % 2 == 0 or f < 3 or f > n:
        raise ValueError(f"kernel width must be odd, >= 3 and <= n; got f={f}, n={n}")
    u_scheme, v_scheme = _parse_scheme(scheme, LOCAL_SCHEMES)
    bank = np.zeros((c * n, c, f), dtype=dtype)
    if u_scheme == "variable-velocity":
        for k in range(c):
            for i in range(n):
                bank[k * n + i, k] = _shift_taps(f, 1.0 / (i + 1))
    elif u_scheme == "u-random":
        bank[:] = _uniform(rng, bank.shape, 1 / np.sqrt(c * f), dtype)
    else:
        u, _ = _wave_kernel(u_scheme, c, n, f, rng, dtype)
        for k in range(c):
            bank[k * n:(k + 1) * n] = u[k]
    V = _encoder(v_scheme, c, n, d, rng, dtype)
    return LocalRnnParams(V=V, b=np.zeros(c * n, dtype), readout=init_readout(c * n, o, readout, rng, dtype, mlp_hidden),
                          activation=activation, bank=bank, n=n)


def init_irnn(N: int, d: int, o: int, activation: str = "relu", rng=None, scheme: str = "identity",
              v_scheme: str = "normal", readout: str = "final-linear",
              dtype=np.float32, mlp_hidden: int = 100) -> IRnnParams:
    """Dense simple RNN; ``scheme`` picks U, ``v_scheme`` is ``normal`` or ``sparse-identity``."""
    rng = np.random.default_rng(0) if rng is None else rng
    if scheme == "identity":
        U = np.eye(N)
    elif scheme == "sigma-shift":
        U = make_shift_matrix(N, 1.0)
    elif scheme == "kaiming-uniform":
        U = rng.uniform(-1 / np.sqrt(N), 1 / np.sqrt(N), size=(N, N))
    else:
        raise ValueError(f"unknown iRNN scheme {scheme!r}")
    if v_scheme not in ("normal", "sparse-identity"):
        raise ValueError(f"unknown encoder scheme {v_scheme!r}")
    V = _encoder("V-sparse" if v_scheme == "sparse-identity" else "V-normal", 1, N, d, rng, dtype)
    return IRnnParams(V=V, b=np.zeros(N, dtype), readout=init_readout(N, o, readout, rng, dtype, mlp_hidden),
                      activation=activation, U=U.astype(dtype))


def param_count(params: CellParams) -> int:
    return sum(t.size for t in params.tensors().values())


# ---------------------------------------------------------------- forward

def step(params: CellParams, h: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One recurrence update; ``h`` is (N,) or (N, B) and ``x`` is (d,) or (B, d)."""
    single = h.ndim == 1
    h2 = h[:, None] if single else h
    x2 = np.atleast_2d(x)
    pre = params.recur(h2) + params.V @ x2.T + params.b[:, None]
    out = activate(params.activation, pre)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite hidden state")
    return out[:, 0] if single else out


@dataclass
class ForwardCache:
    pre: np.ndarray                 # (T, N, B) pre-activations; h_{t+1} = act(pre[t])
    inputs: np.ndarray              # (T, B, d) in the parameter dtype
    doutputs: np.ndarray            # d loss / d outputs
    mlp_pre: np.ndarray | None = None


@dataclass
class ForwardResult:
    outputs: np.ndarray
    loss: float
    trace: HiddenTrace | None = None
    cache: ForwardCache | None = None
    final_hidden: np.ndarray | None = None


def loss_and_grad(outputs: np.ndarray, batch: SequenceBatch):
    if batch.loss_mode == "per-step-categorical":
        return softmax_cross_entropy(outputs, batch.targets, axis=1)
    if batch.loss_mode == "final-categorical":
        return softmax_cross_entropy(outputs, batch.targets, axis=0)
    if batch.loss_mode == "final-scalar":
        return mse(outputs, batch.targets)
    raise ValueError(f"unknown loss mode {batch.loss_mode!r}")


def forward_sequence(params: CellParams, batch: SequenceBatch, record_trace: bool = False,
                     keep_cache: bool = False, trace_index: int = 0) -> ForwardResult:
    """Run the recurrence from h_0 = 0 over the whole batch and compute the mean loss.

    Outputs are (T, o, B) logits for per-step readout, (o, B) logits for final
    categorical readouts and (B,) predictions for the scalar readout.
    """
    if batch.loss_mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {batch.loss_mode!r}")
    ro = params.readout
    if READOUT_LOSS[ro.mode] != batch.loss_mode:
        raise ValueError(f"readout {ro.mode!r} cannot be trained with loss mode {batch.loss_mode!r}")
    x = np.asarray(batch.inputs, dtype=params.dtype)
    T, bsz, d = x.shape
    if d != params.d:
        raise ValueError(f"batch input dim {d} != encoder input dim {params.d}")
    N = params.N
    act = params.activation
    per_step = ro.mode == "per-step-linear"

    h = np.zeros((N, bsz), dtype=params.dtype)
    pre_cache = np.empty((T, N, bsz), dtype=params.dtype) if keep_cache else None
    logits = np.empty((T, ro.out_dim, bsz), dtype=params.dtype) if per_step else None
    states = np.zeros((N, T + 1), dtype=np.float32) if record_trace else None
    bias = params.b[:, None]
    for t in range(T):
        pre = params.recur(h)
        pre += params.V @ x[t].T
        pre += bias
        if pre_cache is not None:
            pre_cache[t] = pre
        h = activate(act, pre)
        if per_step:
            logits[t] = ro.W1 @ h + ro.c1[:, None]
        if states is not None:
            states[:, t + 1] = h[:, trace_index]
    if not np.all(np.isfinite(h)):
        raise DivergenceError("non-finite hidden state")

    mlp_pre = None
    if per_step:
        outputs = logits
    else:
        outputs, mlp_pre = ro.apply(h)
        if ro.mode == "final-scalar":
            outputs = outputs[0]
    loss, dout = loss_and_grad(outputs, batch)
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    trace = None
    if states is not None:
        trace = HiddenTrace(states, n=params.ring, c=params.channels)
    cache = ForwardCache(pre_cache, x, dout, mlp_pre) if keep_cache else None
    return ForwardResult(outputs, loss, trace, cache, h)


# ---------------------------------------------------------------- checkpoints

CHECKPOINT_MAGIC = b"WRNC"
CHECKPOINT_VERSION = 1
_KIND_TAGS = {"wrnn": 0, "irnn": 1, "local": 2}
_ACT_TAGS = {"relu": 0, "tanh": 1, "identity": 2}
_READOUT_TAGS = {m: i for i, m in enumerate(READOUT_MODES)}
_HEADER = struct.Struct("<4sIIII7I")


class CheckpointError(ValueError):
    pass


def _shape_header(params: CellParams) -> tuple[int, ...]:
    f = params.width if isinstance(params, (WRnnParams, LocalRnnParams)) else 0
    return (params.N, params.ring, params.channels, f, params.d, params.o, params.readout.hidden)


def save_checkpoint(params: CellParams, path) -> Path:
    """Write ``magic, version, kind, activation, readout, N, n, c, f, d, o, m`` then f32 tensors."""
    path = Path(path)
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _KIND_TAGS[params.kind],
                          _ACT_TAGS[params.activation], _READOUT_TAGS[params.readout.mode],
                          *_shape_header(params))
    with open(path, "wb") as fh:
        fh.write(header)
        for t in params.tensors().values():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return path


def _tensor_shapes(kind, N, n, c, f, d, o, m, mode):
    shapes = {"wrnn": {"u": (c, c, f)}, "irnn": {"U": (N, N)}, "local": {"bank": (N, c, f)}}[kind]
    shapes.update(V=(N, d), b=(N,))
    if mode == "final-mlp2":
        shapes.update(W1=(m, N), c1=(m,), W2=(o, m), c2=(o,))
    else:
        shapes.update(W1=(o, N), c1=(o,))
    return shapes


def load_checkpoint(path, dtype=np.float32) -> CellParams:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"truncated checkpoint header at byte {len(data)}")
    magic, version, kind_tag, act_tag, ro_tag, N, n, c, f, d, o, m = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"unexpected magic {magic!r} at offset 0")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at offset 4")
    try:
        kind = {v: k for k, v in _KIND_TAGS.items()}[kind_tag]
        act = {v: k for k, v in _ACT_TAGS.items()}[act_tag]
        mode = READOUT_MODES[ro_tag]
    except (KeyError, IndexError):
        raise CheckpointError("invalid cell/activation/readout tag at offset 8") from None
    offset = _HEADER.size
    tensors = {}
    for name, shape in _tensor_shapes(kind, N, n, c, f, d, o, m, mode).items():
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(data):
            raise CheckpointError(f"truncated tensor {name!r} at byte {offset}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).astype(dtype)
        offset = end
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes at offset {offset}")
    readout = ReadoutParams(mode, tensors["W1"], tensors["c1"], tensors.get("W2"), tensors.get("c2"))
    common = dict(V=tensors["V"], b=tensors["b"], readout=readout, activation=act)
    if kind == "wrnn":
        return WRnnParams(**common, u=tensors["u"], n=n)
    if kind == "local":
        return LocalRnnParams(**common, bank=tensors["bank"], n=n)
    return IRnnParams(**common, U=tensors["U"])
