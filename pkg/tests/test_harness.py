import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavernn import cli
from wavernn.analyze import analyze, analyze_checkpoint, recall_accuracy
from wavernn.cells import load_checkpoint
from wavernn.config import ConfigError, RunConfig, preset
from wavernn.diagnostics import load_trace
from wavernn.sweep import Trial, TrialResult, expand_grid, load_grid, preset_trials, rank, sweep
from wavernn.tasks import write_idx
from wavernn.train import METRICS_HEADER, MetricsRow, evaluate, first_solved, read_metrics, train, SyntheticData, build_params

TINY = RunConfig(task="copy", T=5, n=8, c=2, N=16, iters=6, log_every=2, eval_size=16, batch=8)
TINY_ADD = TINY.updated(task="adding", T=6)
BAD = TINY.updated(T=20, act="identity", lr=1e4, iters=20, log_every=5)


def write_mnist_fixture(root, n_train=60, n_test=20, seed=0):
    r = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    for prefix, count in (("train", n_train), ("t10k", n_test)):
        write_idx(root / f"{prefix}-images-idx3-ubyte", r.integers(0, 256, (count, 28, 28), dtype=np.uint8))
        write_idx(root / f"{prefix}-labels-idx1-ubyte", r.integers(0, 10, count, dtype=np.uint8))
    return root


# ---------------------------------------------------------------- config

def test_config_json_round_trip(tmp_path):
    cfg = preset("adding", "irnn", 400, freeze=["encoder"], seed=7)
    back = RunConfig.load(cfg.save(tmp_path / "c.json"))
    assert back == cfg
    assert RunConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


@pytest.mark.parametrize("change", [dict(task="sort"), dict(model="lstm"), dict(n=0), dict(lr=-1.0),
                                    dict(drop_rate=0.5), dict(task="smnist", data_dir="")])
def test_config_validation(change):
    with pytest.raises(ConfigError):
        RunConfig(**change).validate()


def test_config_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="unknown"):
        RunConfig.from_dict({"learning_rate": 0.1})
    with pytest.raises(ConfigError):
        RunConfig.from_json("[1, 2]")


def test_preset_values():
    assert (preset("adding", "wrnn", 100).lr, preset("adding", "wrnn", 100).clip) == (1e-3, 100.0)
    assert preset("copy", "irnn", 30).init_scheme == "identity"
    assert preset("copy", "wrnn").readout_mode == "per-step-linear"
    assert preset("adding", "wrnn").readout_mode == "final-scalar"


# ---------------------------------------------------------------- training

def test_metrics_header_and_rows(tmp_path):
    res = train(TINY.updated(out=str(tmp_path)))
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRICS_HEADER
    assert [int(r[0]) for r in rows[1:]] == [2, 4, 6]
    assert read_metrics(tmp_path / "metrics.csv") == res.rows
    for name in ("config.json", "checkpoint.wrnc", "summary.json"):
        assert (tmp_path / name).exists()


def test_zero_lr_keeps_parameters_fixed():
    before = build_params(TINY)
    res = train(TINY.updated(lr=0.0, iters=4, log_every=1))
    for name, t in before.tensors().items():
        np.testing.assert_array_equal(res.params.tensors()[name], t)
    # the same fixed eval set is scored every time
    assert len({r.eval_loss for r in res.rows}) == 1


def test_training_reduces_loss():
    res = train(TINY.updated(T=3, iters=60, log_every=60, lr=1e-2))
    init = evaluate(build_params(TINY), SyntheticData(TINY.updated(T=3)).eval_batch, "copy")[0]
    assert res.final.eval_loss < init


def test_determinism(tmp_path):
    train(TINY.updated(out=str(tmp_path / "a")))
    train(TINY.updated(out=str(tmp_path / "b")))
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/checkpoint.wrnc").read_bytes() == (tmp_path / "b/checkpoint.wrnc").read_bytes()


def test_seed_changes_run():
    a, b = train(TINY), train(TINY.updated(seed=5))
    assert a.final.train_loss != b.final.train_loss


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_status(tmp_path):
    res = train(BAD.updated(out=str(tmp_path)))
    assert res.status == "diverged" and res.diverged_at is not None
    assert json.loads((tmp_path / "summary.json").read_text())["status"] == "diverged"
    assert not (tmp_path / "checkpoint.wrnc").exists()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_untrained_copy_model_is_at_chance(seed):
    cfg = TINY.updated(T=10, eval_size=400, seed=seed)
    acc, _ = recall_accuracy(build_params(cfg), SyntheticData(cfg).eval_batch)
    assert acc < 0.3


def test_adding_solved_iteration():
    res = train(TINY_ADD.updated(iters=8, log_every=2, solved_threshold=1e9))
    assert res.solved_iter == 2
    assert train(TINY_ADD.updated(iters=4, solved_threshold=0.0)).solved_iter is None


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.floats(0, 1), st.floats(0, 1))
def test_first_solved_monotone_in_threshold(metrics, t1, t2):
    rows = [MetricsRow(10 * (i + 1), 0, 0, m, 0, 0, 0) for i, m in enumerate(metrics)]
    lo, hi = sorted((t1, t2))
    a, b = first_solved(rows, lo), first_solved(rows, hi)
    if a is not None:
        assert b is not None and b <= a


def test_stop_below_ends_early():
    res = train(TINY.updated(iters=10, log_every=2, stop_below=1.0))
    assert res.final.iter == 2


def test_record_trace_round_trip(tmp_path):
    res = train(TINY.updated(record_trace=True, out=str(tmp_path)))
    tr = load_trace(tmp_path / "trace.wrnh")
    assert tr.states.shape == (TINY.c * TINY.n, TINY.T + 20 + 1)
    from wavernn.cells import forward_sequence
    again = forward_sequence(res.params, SyntheticData(TINY).eval_batch.subset([0]), record_trace=True).trace
    assert again.states.astype(np.float32).tobytes() == tr.states.tobytes()


def test_image_training_on_fixture(tmp_path):
    data = write_mnist_fixture(tmp_path / "mnist")
    cfg = RunConfig(task="psmnist", data_dir=str(data), val_size=20, model="irnn", N=8, epochs=2, batch=20,
                    out=str(tmp_path / "run"))
    res = train(cfg)
    assert res.status == "ok" and [r.iter for r in res.rows] == [1, 2]
    assert 0 <= res.test_metric <= 1
    perm = np.loadtxt(tmp_path / "run/permutation.txt", dtype=int)
    assert sorted(perm) == list(range(784))


# ---------------------------------------------------------------- sweep

def test_grid_expansion_and_summary(tmp_path):
    trials = expand_grid(TINY, {"lr": [1e-3, 1e-2], "clip": [0.0, 1.0]})
    assert len(trials) == 4
    ranked = sweep(trials, tmp_path)
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    metrics = [float(r["final_eval_metric"]) for r in rows]
    assert metrics == sorted(metrics)
    assert RunConfig.load(tmp_path / "best_config.json") == ranked[0].trial.config
    assert all((tmp_path / f"trial_{i:03d}/metrics.csv").exists() for i in range(4))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ranking_puts_failures_last():
    trials = [Trial(0, "bad", BAD, {}), Trial(1, "good", TINY, {})]
    ranked = sweep(trials)
    assert [r.trial.label for r in ranked] == ["good", "bad"]


@given(st.permutations(range(5)))
@settings(max_examples=30)
def test_rank_order_invariant(order):
    metrics = [0.3, 0.1, 0.1, float("nan"), 0.5]
    results = [TrialResult(Trial(i, str(i), TINY, {}), "ok" if i != 3 else "diverged", final_eval_metric=m)
               for i, m in enumerate(metrics)]
    ranked = rank([results[i] for i in order])
    assert [r.trial.index for r in ranked] == [1, 2, 0, 4, 3]


def test_rank_accuracy_higher_is_better():
    img = RunConfig(task="smnist", data_dir="x")
    results = [TrialResult(Trial(i, str(i), img, {}), "ok", final_eval_metric=m) for i, m in enumerate([0.5, 0.9])]
    assert rank(results)[0].trial.index == 1


def test_presets():
    ab = preset_trials("ablation", T=10)
    assert len(ab) == 7
    assert [t.label for t in preset_trials("table3", T=10)] == [t.label for t in ab]
    assert {t.config.init_scheme for t in ab} >= {"u-shift+V-sparse", "u-random+V-sparse", "identity", "sigma-shift"}
    assert len(preset_trials("ring-size")) == 20
    assert len(preset_trials("copy-grid")) == 9 + 36
    with pytest.raises(ConfigError):
        preset_trials("nope")


def test_load_grid(tmp_path):
    doc = {"base": TINY.to_dict(), "grid": {"seed": [0, 1, 2]}, "variants": [{"label": "a"}, {"model": "irnn"}]}
    (tmp_path / "g.json").write_text(json.dumps(doc))
    trials = load_grid(tmp_path / "g.json")
    assert len(trials) == 6 and trials[0].label == "a,seed=0"
    (tmp_path / "bad.json").write_text(json.dumps({"grids": {}}))
    with pytest.raises(ConfigError):
        load_grid(tmp_path / "bad.json")


# ---------------------------------------------------------------- analyze

def test_analyze_outputs(tmp_path):
    res = train(TINY.updated(out=str(tmp_path / "run")))
    a = analyze(res.params, TINY, tmp_path / "an", shuffles=4)
    for name in ("trace.wrnh", "trace_sorted.wrnh", "spectrum.csv", "spectrum_sorted.csv", "predictions.csv",
                 "analysis.json"):
        assert (tmp_path / "an" / name).exists()
    assert 0 <= a.recall_accuracy <= 1
    b = analyze_checkpoint(tmp_path / "run/checkpoint.wrnc", TINY, shuffles=4)
    assert b.spectrum.velocity == pytest.approx(a.spectrum.velocity)


def test_analyze_shape_mismatch():
    params = build_params(TINY_ADD)
    with pytest.raises(ValueError, match="needs"):
        analyze(params, TINY)


# ---------------------------------------------------------------- cli

def test_cli_train(tmp_path, capsys):
    code = cli.main(["train", "--task", "copy", "--T", "5", "--n", "8", "--c", "2", "--iters", "4",
                     "--log-every", "2", "--eval-size", "8", "--batch", "4", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert json.loads(out[-1])["status"] == "ok"
    assert RunConfig.load(tmp_path / "config.json").iters == 4


def test_cli_config_file_and_freeze(tmp_path):
    TINY.save(tmp_path / "c.json")
    assert cli.main(["train", "--config", str(tmp_path / "c.json"), "--freeze", "recurrent,encoder",
                     "--out", str(tmp_path / "r")]) == 0
    assert RunConfig.load(tmp_path / "r/config.json").freeze == ["recurrent", "encoder"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_exit_codes(tmp_path):
    assert cli.main(["train", "--task", "bogus"]) == cli.EXIT_CONFIG
    assert cli.main(["train", "--task", "smnist", "--data-dir", str(tmp_path / "missing")]) == cli.EXIT_DATA
    BAD.save(tmp_path / "bad.json")
    assert cli.main(["train", "--config", str(tmp_path / "bad.json")]) == cli.EXIT_DIVERGED
    (tmp_path / "broken.json").write_text("{")
    assert cli.main(["train", "--config", str(tmp_path / "broken.json")]) == cli.EXIT_CONFIG


def test_cli_data_check(tmp_path, capsys):
    data = write_mnist_fixture(tmp_path)
    assert cli.main(["data", "check", "--data-dir", str(data), "--val-size", "10"]) == 0
    assert "train 50, validation 10, test 20" in capsys.readouterr().out


def test_cli_sweep_and_analyze(tmp_path, capsys):
    doc = {"base": TINY.to_dict(), "grid": {"lr": [1e-3, 1e-2]}}
    (tmp_path / "g.json").write_text(json.dumps(doc))
    assert cli.main(["sweep", "--grid", str(tmp_path / "g.json"), "--out", str(tmp_path / "s")]) == 0
    ckpt = tmp_path / "s/trial_000/checkpoint.wrnc"
    assert load_checkpoint(ckpt).kind == "wrnn"
    assert cli.main(["analyze", "--checkpoint", str(ckpt), "--analysis-out", str(tmp_path / "a"), "--shuffles", "3",
                     "--config", str(tmp_path / "s/trial_000/config.json")]) == 0
    assert "velocity" in json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert cli.main(["sweep", "--out", str(tmp_path / "x")]) == cli.EXIT_CONFIG
