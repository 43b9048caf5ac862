"""Random small instances shared by the gradient tests and the acceptance suite."""

import numpy as np

from wavernn.cells import READOUT_LOSS, init_irnn, init_local, init_wrnn
from wavernn.tasks import SequenceBatch

KINDS = ("wrnn", "irnn", "local")
ACTIVATIONS = ("relu", "tanh", "identity")
READOUTS = ("final-linear", "per-step-linear", "final-scalar", "final-mlp2")
PARAM_SCALE = 0.3


def random_instance(kind, act, readout, seed, n=8, c=2, f=3, d=3, o=4, T=5, B=3, mlp_hidden=6):
    """Float64 parameters with every tensor redrawn from N(0, 0.3^2), plus a matching batch."""
    r = np.random.default_rng(seed)
    o = 1 if readout == "final-scalar" else o
    kw = dict(activation=act, rng=r, readout=readout, dtype=np.float64, mlp_hidden=mlp_hidden)
    if kind == "wrnn":
        p = init_wrnn(n, c, f, d, o, scheme="u-random+V-normal", **kw)
    elif kind == "local":
        p = init_local(n, c, f, d, o, scheme="u-random+V-normal", **kw)
    else:
        p = init_irnn(n * c, d, o, scheme="kaiming-uniform", **kw)
    for t in p.tensors().values():
        t[...] = r.normal(0.0, PARAM_SCALE, size=t.shape)
    x = r.standard_normal((T, B, d))
    mode = READOUT_LOSS[readout]
    if mode == "per-step-categorical":
        y = r.integers(0, o, size=(T, B))
    elif mode == "final-categorical":
        y = r.integers(0, o, size=B)
    else:
        y = r.standard_normal(B)
    return p, SequenceBatch(x, y, mode)
