"""Run configuration: one flat, JSON-serialisable record per training run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

TASKS = ("copy", "adding", "smnist", "psmnist", "nscifar")
MODELS = ("wrnn", "irnn", "local")
IMAGE_TASKS = ("smnist", "psmnist", "nscifar")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # task
    task: str = "copy"
    T: int = 30
    data_dir: str = ""
    perm_seed: int = 0
    val_size: int = 5000
    # model
    model: str = "wrnn"
    n: int = 100
    c: int = 6
    k: int = 3
    N: int = 100
    act: str = "relu"
    init: str = ""
    v_init: str = "normal"
    readout: str = ""
    mlp_hidden: int = 100
    freeze: list[str] = field(default_factory=list)
    # optimisation
    lr: float = 1e-3
    clip: float = 0.0
    batch: int = 128
    iters: int = 60000
    epochs: int = 120
    drop_rate: float = 1.0
    drop_epoch: int = 100
    epoch_iters: int = 1000
    # evaluation and logging
    log_every: int = 100
    eval_size: int = 1000
    solved_threshold: float = 5e-2
    stop_below: float = 0.0
    record_trace: bool = False
    record_wallclock: bool = False
    # seeds
    seed: int = 0
    data_seed: int = 1
    shuffle_seed: int = 2
    out: str = ""

    @property
    def is_image(self) -> bool:
        return self.task in IMAGE_TASKS

    @property
    def init_scheme(self) -> str:
        if self.init:
            return self.init
        return "identity" if self.model == "irnn" else "u-shift+V-sparse"

    @property
    def readout_mode(self) -> str:
        if self.readout:
            return self.readout
        return {"copy": "per-step-linear", "adding": "final-scalar"}.get(self.task, "final-linear")

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {TASKS}")
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.act not in ("relu", "tanh", "identity"):
            raise ConfigError(f"unknown activation {self.act!r}")
        for name in ("n", "c", "k", "N", "batch", "log_every", "eval_size", "epoch_iters", "drop_epoch"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.iters < 0 or self.epochs < 0:
            raise ConfigError("iters and epochs must be >= 0")
        if self.lr < 0 or self.clip < 0:
            raise ConfigError("lr and clip must be >= 0")
        if self.drop_rate < 1:
            raise ConfigError(f"drop_rate must be >= 1, got {self.drop_rate}")
        if self.is_image and not self.data_dir:
            raise ConfigError(f"task {self.task!r} needs data_dir")
        if self.task == "adding" and self.T < 2:
            raise ConfigError("adding task needs T >= 2")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.freeze = list(cfg.freeze)
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(data)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(text)

    def updated(self, **changes) -> "RunConfig":
        return replace(self, **changes)


# Best settings found by the original grid searches; keyed by (task, model, T).
_COPY_BEST = {
    ("wrnn", 0): dict(lr=1e-3, clip=1.0), ("wrnn", 10): dict(lr=1e-3, clip=0.0),
    ("wrnn", 30): dict(lr=1e-3, clip=0.0), ("wrnn", 80): dict(lr=1e-3, clip=1.0),
    ("wrnn", 480): dict(lr=1e-4, clip=1.0),
    ("irnn", 0): dict(lr=1e-3, clip=10.0, init="kaiming-uniform"), ("irnn", 10): dict(lr=1e-3, clip=1.0),
    ("irnn", 30): dict(lr=1e-4, clip=1.0), ("irnn", 80): dict(lr=1e-4, clip=1.0),
    ("irnn", 480): dict(lr=1e-4, clip=10.0),
}
_ADDING_BEST = {
    ("wrnn", 100): dict(lr=1e-3, clip=100.0), ("wrnn", 200): dict(lr=1e-4, clip=100.0),
    ("wrnn", 400): dict(lr=1e-4, clip=1.0), ("wrnn", 700): dict(lr=1e-4, clip=100.0),
    ("wrnn", 1000): dict(lr=1e-4, clip=10.0),
    ("irnn", 100): dict(lr=1e-3, clip=1000.0), ("irnn", 200): dict(lr=1e-3, clip=100.0),
    ("irnn", 400): dict(lr=1e-3, clip=10.0), ("irnn", 700): dict(lr=1e-4, clip=100.0),
    ("irnn", 1000): dict(lr=1e-3, clip=1.0),
}


def preset(task: str, model: str = "wrnn", T: int | None = None, **overrides) -> RunConfig:
    """Config with the best known settings for ``task``/``model``; ``overrides`` win."""
    if task == "copy":
        T = 30 if T is None else T
        base = RunConfig(task="copy", T=T, model=model, n=100, c=6, k=3, N=100, iters=60000)
        base = base.updated(**_COPY_BEST.get((model, T), {}))
    elif task == "adding":
        T = 100 if T is None else T
        base = RunConfig(task="adding", T=T, model=model, n=100, c=27, k=3, N=100, iters=60000)
        base = base.updated(**_ADDING_BEST.get((model, T), {}))
    elif task in ("smnist", "psmnist"):
        clip = {("wrnn", "smnist"): 1.0, ("wrnn", "psmnist"): 100.0, ("irnn", "psmnist"): 1000.0}.get((model, task), 0.0)
        base = RunConfig(task=task, T=784, model=model, n=256, c=16, k=3, N=256, lr=1e-4, clip=clip,
                         batch=128, epochs=120, drop_rate=10.0, drop_epoch=100)
    elif task == "nscifar":
        base = RunConfig(task=task, T=1000, model=model, n=256, c=16, k=3, N=256, lr=1e-4, clip=0.0,
                         batch=256, epochs=250, drop_rate=10.0, drop_epoch=100)
    else:
        raise ConfigError(f"unknown task {task!r}")
    return base.updated(**overrides)
