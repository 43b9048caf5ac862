"""Command line entry point: ``wavernn train | sweep | analyze | data check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import MISSING, fields
from pathlib import Path

from .config import ConfigError, RunConfig, preset
from .train import DataError, load_image_data, train

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_DATA = 0, 2, 3, 4

_FLAG_HELP = {
    "task": "copy | adding | smnist | psmnist | nscifar",
    "model": "wrnn | irnn | local",
    "k": "kernel width f",
    "N": "hidden size of the iRNN",
    "init": "init scheme, e.g. u-shift+V-sparse, u-random+V-normal, identity, sigma-shift",
    "v_init": "iRNN encoder init: normal | sparse-identity",
    "readout": "final-linear | per-step-linear | final-scalar | final-mlp2 (default by task)",
    "freeze": "comma separated groups: recurrent, encoder, bias, readout",
    "stop_below": "stop once the eval metric drops to this value (0 = off)",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON RunConfig; other flags override it")
    p.add_argument("--preset", action="store_true", help="start from the best known settings for task/model/T")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        helptext = _FLAG_HELP.get(f.name)
        default = f.default if f.default is not MISSING else "[]"
        helptext = f"{helptext} (default {default})" if helptext else f"default {default}"
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None, help=helptext)
        elif f.name == "freeze":
            p.add_argument(flag, dest=f.name, default=None, help=helptext)
        else:
            conv = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
            p.add_argument(flag, dest=f.name, type=conv, default=None, help=helptext)


def config_from_args(args) -> RunConfig:
    overrides = {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is None:
            continue
        if f.name == "freeze":
            v = [g for g in v.split(",") if g]
        overrides[f.name] = v
    if args.config:
        base = RunConfig.load(args.config)
    elif args.preset:
        base = preset(overrides.get("task", "copy"), overrides.get("model", "wrnn"), overrides.get("T"))
    else:
        base = RunConfig()
    return base.updated(**overrides).validate()


def cmd_train(args) -> int:
    cfg = config_from_args(args)
    result = train(cfg, progress=lambda r: print(",".join(map(str, r.as_list())), flush=True))
    print(json.dumps(result.summary(), sort_keys=True))
    return EXIT_OK if result.status == "ok" else EXIT_DIVERGED


def cmd_sweep(args) -> int:
    from .sweep import load_grid, preset_trials, sweep
    if bool(args.grid) == bool(args.name):
        raise ConfigError("give exactly one of --grid FILE or --name PRESET")
    over = json.loads(args.set) if args.set else {}
    trials = load_grid(args.grid) if args.grid else preset_trials(args.name, **over)
    if args.limit:
        trials = trials[: args.limit]
    ranked = sweep(trials, args.out, workers=args.workers)
    for i, r in enumerate(ranked, 1):
        print(f"{i:3d}  {r.trial.label:<40s} {r.status:<9s} metric={r.final_eval_metric:.4g}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    from .analyze import analyze_checkpoint
    cfg = config_from_args(args)
    res = analyze_checkpoint(args.checkpoint, cfg, args.analysis_out, shuffles=args.shuffles)
    print(json.dumps(res.summary(), sort_keys=True))
    return EXIT_OK


def cmd_data_check(args) -> int:
    cfg = RunConfig(task=args.task, data_dir=args.data_dir, val_size=args.val_size).validate()
    train_ds, val, test = load_image_data(cfg)
    shape = train_ds.images.shape[1:]
    print(f"{cfg.task}: train {len(train_ds)}, validation {len(val)}, test {len(test)}, image shape {shape}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavernn", description="Wave-RNN training and wave diagnostics")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a grid search or ablation preset")
    p.add_argument("--grid", help="JSON grid document")
    p.add_argument("--name", help="preset: ablation (alias table3), ring-size, frozen, variants, copy-grid, adding-grid")
    p.add_argument("--set", help="JSON object of preset overrides, e.g. '{\"iters\": 2000}'")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--limit", type=int, default=0, help="run only the first LIMIT trials")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="spectra, traces and predictions for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--analysis-out", required=True, help="directory for analysis artefacts")
    p.add_argument("--shuffles", type=int, default=20)
    _add_config_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("data", help="dataset utilities")
    dsub = p.add_subparsers(dest="data_command", required=True)
    q = dsub.add_parser("check", help="parse and validate dataset files")
    q.add_argument("--task", default="smnist")
    q.add_argument("--data-dir", required=True)
    q.add_argument("--val-size", type=int, default=5000)
    q.set_defaults(func=cmd_data_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
