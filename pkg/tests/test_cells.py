import numpy as np
import pytest
from hypothesis import given, strategies as st

from wavernn.cells import (CheckpointError, IRnnParams, HiddenTrace, LocalRnnParams, init_irnn, init_local,
                           init_readout, init_wrnn, forward_sequence, load_checkpoint, param_count,
                           save_checkpoint, sparse_identity_encoder, step)
from wavernn.numeric import conv_as_matrix, make_shift_matrix
from wavernn.tasks import SequenceBatch, adding_batch, copy_batch


def linear_register(n=8, c=1, d=1):
    p = init_wrnn(n, c, 3, d, 1, activation="identity", readout="final-scalar", dtype=np.float64)
    return p


def test_default_kernel_is_full_shift():
    p = init_wrnn(4, 1, 3, 1, 10)
    np.testing.assert_array_equal(conv_as_matrix(p.u, 4), make_shift_matrix(4, 1.0))


def test_default_kernel_has_no_cross_channel_weights():
    p = init_wrnn(6, 3, 3, 1, 10)
    for a in range(3):
        for b in range(3):
            expect = [0, 0, 1] if a == b else [0, 0, 0]
            np.testing.assert_array_equal(p.u[a, b], expect)


def test_sparse_identity_d1_c2():
    p = init_wrnn(5, 2, 3, 1, 10)
    nz = np.argwhere(p.V != 0)
    assert len(nz) == 2
    assert set(p.V[p.V != 0]) == {1.0}
    assert {int(r) for r, _ in nz} == {0, 5}


def test_sparse_identity_wraps_when_d_exceeds_c():
    V = sparse_identity_encoder(c=4, n=8, d=10)
    assert V.sum() == 10
    for j in range(10):
        (row,) = np.nonzero(V[:, j])[0]
        assert row == (j % 4) * 8 + j // 4


def test_multi_speed_kernels():
    p = init_wrnn(10, 3, 3, 1, 10, rng=np.random.default_rng(3), scheme="multi-speed")
    nus = [p.u[k, k, 2] for k in range(3)]
    assert len(set(nus)) == 3
    for k, nu in enumerate(nus):
        assert 0 < nu < 1
        np.testing.assert_allclose(p.u[k, k], [0, 1 - nu, nu], rtol=1e-6)


def test_random_and_dirac_kernels():
    p = init_wrnn(16, 2, 3, 1, 10, rng=np.random.default_rng(0), scheme="u-random+V-normal")
    # conv-layer default bound 1/sqrt(c f)
    bound = 1 / np.sqrt(2 * 3)
    assert np.all(np.abs(p.u) <= bound) and np.abs(p.u).max() > 0.5 * bound
    assert np.count_nonzero(p.V) == p.V.size
    assert np.abs(p.V).max() < 0.01
    p = init_wrnn(16, 2, 3, 1, 10, scheme="u-dirac")
    np.testing.assert_array_equal(conv_as_matrix(p.u, 16), np.eye(32))


def test_invalid_schemes():
    with pytest.raises(ValueError):
        init_wrnn(8, 1, 3, 1, 10, scheme="u-bogus")
    with pytest.raises(ValueError):
        init_wrnn(8, 1, 3, 1, 10, scheme="variable-velocity")
    with pytest.raises(ValueError):
        init_wrnn(8, 1, 4, 1, 10)
    with pytest.raises(ValueError):
        init_irnn(8, 1, 10, scheme="orthogonal")
    with pytest.raises(ValueError):
        init_irnn(8, 1, 10, v_scheme="dense")


def test_readout_init_bounds():
    r = init_readout(400, 10, "final-linear", np.random.default_rng(0))
    assert np.abs(r.W1).max() <= 1 / 20
    np.testing.assert_array_equal(r.c1, 0)


def test_irnn_inits():
    np.testing.assert_array_equal(init_irnn(3, 1, 10).U, np.eye(3))
    P = init_irnn(5, 1, 10, scheme="sigma-shift").U
    np.testing.assert_array_equal(P.sum(0), 1)
    np.testing.assert_array_equal(P.sum(1), 1)
    U = init_irnn(100, 1, 10, rng=np.random.default_rng(0), scheme="kaiming-uniform").U
    assert np.abs(U).max() <= 0.1
    assert abs(U.mean()) < 0.005
    np.testing.assert_array_equal(init_irnn(7, 2, 3).b, 0)


def test_register_example():
    p = linear_register(n=8)
    h = np.zeros(8)
    for x in [5.0, 7.0, 0.0]:
        h = step(p, h, np.array([x]))
    # the input fed k steps before the last one sits at position k
    assert h[2] == 5 and h[1] == 7 and h[0] == 0
    h = step(p, h, np.array([0.0]))
    assert h[3] == 5 and h[2] == 7


@given(xs=st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=15))
def test_register_property_relu(xs):
    n = 16
    for act in ("identity", "relu"):
        p = init_wrnn(n, 2, 3, 1, 1, activation=act, readout="final-scalar", dtype=np.float64)
        h = np.zeros(2 * n)
        for x in xs:
            h = step(p, h, np.array([x]))
        t = len(xs) - 1
        for ch in range(2):
            expect = np.zeros(n)
            for s, x in enumerate(xs):
                expect[(t - s) % n] = x
            np.testing.assert_array_equal(h[ch * n:(ch + 1) * n], expect)


def test_irnn_accumulates():
    p = init_irnn(3, 3, 1, activation="identity", readout="final-scalar", dtype=np.float64)
    p.V[:] = np.eye(3)
    v = np.array([0.5, 1.0, 2.0])
    h = np.zeros(3)
    for _ in range(6):
        h = step(p, h, v)
    np.testing.assert_allclose(h, 6 * v)


def test_step_matches_dense_matrix(rng):
    p = init_wrnn(7, 3, 3, 2, 4, activation="tanh", rng=rng, scheme="u-random+V-normal", dtype=np.float64)
    p.b[:] = rng.standard_normal(p.N)
    h = rng.standard_normal(p.N)
    x = rng.standard_normal(2)
    M = conv_as_matrix(p.u, 7)
    np.testing.assert_allclose(step(p, h, x), np.tanh(M @ h + p.V @ x + p.b), atol=1e-12)


@given(seed=st.integers(0, 2**31), c=st.integers(1, 3), n=st.integers(3, 9))
def test_wrnn_equals_irnn_with_conv_matrix(seed, c, n):
    r = np.random.default_rng(seed)
    w = init_wrnn(n, c, 3, 2, 3, rng=r, scheme="u-random+V-normal")
    d = IRnnParams(V=w.V, b=w.b, readout=w.readout, activation=w.activation,
                   U=conv_as_matrix(w.u.astype(np.float64), n).astype(np.float32))
    h = r.standard_normal((w.N, 4)).astype(np.float32)
    x = r.standard_normal((4, 2)).astype(np.float32)
    np.testing.assert_allclose(step(w, h, x), step(d, h, x), atol=1e-6)


@given(seed=st.integers(0, 2**31))
def test_local_with_tied_kernels_equals_wrnn(seed):
    r = np.random.default_rng(seed)
    w = init_wrnn(6, 2, 3, 2, 3, rng=r, scheme="u-random+V-normal", dtype=np.float64)
    bank = np.stack([w.u[k] for k in range(2) for _ in range(6)])
    loc = LocalRnnParams(V=w.V, b=w.b, readout=w.readout, activation=w.activation, bank=bank, n=6)
    h = r.standard_normal((12, 3))
    x = r.standard_normal((3, 2))
    np.testing.assert_allclose(step(loc, h, x), step(w, h, x), atol=1e-12)


def test_variable_velocity_rows():
    p = init_local(8, 2, 3, 1, 10, scheme="variable-velocity")
    for k in range(2):
        for i in range(8):
            nu = 1 / (i + 1)
            np.testing.assert_allclose(p.bank[k * 8 + i, k], [0, 1 - nu, nu], rtol=1e-6)
            np.testing.assert_array_equal(p.bank[k * 8 + i, 1 - k], 0)


def test_channel_relabel_equivariance(rng):
    n, c = 5, 3
    p = init_wrnn(n, c, 3, 3, 2, rng=rng)
    perm = np.array([2, 0, 1])
    q = p.copy()
    q.u = p.u[np.ix_(perm, perm)]
    rows = np.concatenate([np.arange(k * n, (k + 1) * n) for k in perm])
    q.V = p.V[rows]
    q.b = p.b[rows]
    h = rng.standard_normal((c * n, 2)).astype(np.float32)
    x = rng.standard_normal((2, 3)).astype(np.float32)
    np.testing.assert_allclose(step(q, h[rows], x), step(p, h, x)[rows], atol=1e-6)


def test_step_overflow_raises():
    p = init_irnn(2, 1, 1, activation="identity", readout="final-scalar")
    p.U[:] = 1e30
    from wavernn.numeric import DivergenceError
    with pytest.raises(DivergenceError), np.errstate(over="ignore", invalid="ignore"):
        step(p, np.full(2, 1e30, dtype=np.float32), np.zeros(1, dtype=np.float32))


def test_zero_readout_copy_loss_is_ln10():
    p = init_wrnn(20, 2, 3, 10, 10, readout="per-step-linear")
    p.readout.W1[:] = 0
    res = forward_sequence(p, copy_batch(np.random.default_rng(0), 4, 5))
    assert res.loss == pytest.approx(np.log(10), rel=1e-6)
    assert res.outputs.shape == (25, 10, 4)


def test_forward_rejects_mismatched_loss():
    p = init_wrnn(20, 2, 3, 2, 10)
    with pytest.raises(ValueError):
        forward_sequence(p, adding_batch(np.random.default_rng(0), 4, 6))


def test_trace_replay(rng):
    p = init_wrnn(6, 2, 3, 2, 1, activation="relu", rng=rng, scheme="u-random+V-normal",
                  readout="final-scalar", dtype=np.float64)
    batch = adding_batch(rng, 3, 12)
    res = forward_sequence(p, batch, record_trace=True, trace_index=1)
    tr = res.trace
    assert tr.steps == 13
    np.testing.assert_array_equal(tr.states[:, 0], 0)
    for t in range(12):
        expect = step(p, tr.states[:, t].astype(np.float64), batch.inputs[t, 1].astype(np.float64))
        np.testing.assert_allclose(tr.states[:, t + 1], expect, rtol=1e-6, atol=1e-7)
    assert tr.channel(1).shape == (6, 13)


def test_hidden_trace_validates():
    with pytest.raises(ValueError):
        HiddenTrace(np.zeros((5, 3)), n=3, c=2)


@pytest.mark.parametrize("make", [
    lambda: init_wrnn(6, 2, 3, 3, 4, rng=np.random.default_rng(0), readout="final-mlp2", mlp_hidden=7),
    lambda: init_irnn(9, 2, 1, activation="tanh", readout="final-scalar", rng=np.random.default_rng(1)),
    lambda: init_local(5, 3, 3, 10, 10, scheme="variable-velocity", readout="per-step-linear"),
])
def test_checkpoint_round_trip(tmp_path, make):
    p = make()
    path = save_checkpoint(p, tmp_path / "m.wrnc")
    assert path.read_bytes()[:4] == b"WRNC"
    q = load_checkpoint(path)
    assert type(q) is type(p) and q.activation == p.activation and q.readout.mode == p.readout.mode
    for k, v in p.tensors().items():
        assert q.tensors()[k].tobytes() == v.tobytes()
    assert param_count(q) == param_count(p)


def test_checkpoint_errors(tmp_path):
    p = init_wrnn(6, 2, 3, 3, 4)
    path = save_checkpoint(p, tmp_path / "m.wrnc")
    raw = path.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="byte"):
        load_checkpoint(tmp_path / "short")
    (tmp_path / "tiny").write_bytes(raw[:10])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "tiny")


def test_copy_model_param_count():
    # 6 channels of 100 units, 10 inputs, 10 classes
    p = init_wrnn(100, 6, 3, 10, 10, readout="per-step-linear")
    assert param_count(p) == 6 * 6 * 3 + 600 * 10 + 600 + 10 * 600 + 10


def test_sequence_batch_shapes():
    with pytest.raises(ValueError):
        SequenceBatch(np.zeros((3, 2)), np.zeros(2), "final-scalar")
