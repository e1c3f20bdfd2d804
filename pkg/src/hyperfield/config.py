"""Run configuration: one flat key=value text format covering data
generation, training, and evaluation. Unknown keys are rejected and every
run writes its fully resolved config next to its outputs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .hypernet import HypernetConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # experiment identity / io
    seed: int = 0
    dataset: str = "dataset.hnfd"
    out_dir: str = "runs/default"

    # shape data generation
    dim: int = 2
    num_shapes: int = 32
    families: list = field(default_factory=lambda: [
        "circle", "ellipse", "polygon", "fourier-blob"])
    cond_points: int = 256
    pool_size: int = 2048

    # task network
    task_dims: list = field(default_factory=lambda: [2, 32, 32, 1])
    inner_optimizer: str = "sgd"

    # trajectory / inner optimization, desk-tuned (see README). inner_batch
    # is the query batch of the one-step targets the field learns from
    # (large = low-noise targets); oracle_batch is the query batch of
    # standalone per-sample SGD runs (oracle profiling, baseline
    # precompute), kept smaller because those runs pay for every one of
    # their T steps in wall clock.
    T: int = 8192
    eta_inner: float = 1.0
    inner_batch: int = 2048
    oracle_batch: int = 512

    # hypernetwork dims
    cond_hidden: int = 64
    cond_dim: int = 128
    time_dim: int = 64
    trunk_width: int = 256
    trunk_depth: int = 4
    per_sample_theta0: bool = False

    # outer training
    outer_lr: float = 1e-3
    outer_lr_schedule: str = "cosine"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 6
    iterations: int = 20000
    loss_target_mode: str = "stopped"
    record_every: int = 50
    checkpoint_every: int = 1000
    workers: int = 1

    # evaluation. Fast fine-tuning must run in the smooth SGD regime (small
    # eta), even when the trajectory itself uses a larger eta_inner; see
    # README "Choosing eta_inner".
    fft_steps: int = 50
    fft_eta: float = 0.0625
    eval_resolution: int = 128
    t_list: list = field(default_factory=list)  # empty = 6 evenly spaced in [0,T]

    def __post_init__(self):
        if self.inner_optimizer != "sgd":
            raise ConfigError(
                f"inner_optimizer={self.inner_optimizer!r}: only 'sgd' is supported")
        if self.per_sample_theta0:
            raise ConfigError("per_sample_theta0=true is not supported; "
                              "theta0 is a single global vector")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def resolved_t_list(self):
        if self.t_list:
            return [int(t) for t in self.t_list]
        return [0, self.T // 8, self.T // 4, self.T // 2, 3 * self.T // 4, self.T]

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            T=self.T, eta_inner=self.eta_inner, inner_batch=self.inner_batch,
            oracle_batch=self.oracle_batch,
            outer_lr=self.outer_lr, outer_lr_schedule=self.outer_lr_schedule,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            batch_size=self.batch_size, iterations=self.iterations,
            seed=self.seed, loss_target_mode=self.loss_target_mode,
            fft_steps=self.fft_steps, record_every=self.record_every,
        )

    def hypernet_config(self) -> HypernetConfig:
        return HypernetConfig(
            T=self.T, cond_hidden=self.cond_hidden, cond_dim=self.cond_dim,
            time_dim=self.time_dim, trunk_width=self.trunk_width,
            trunk_depth=self.trunk_depth,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _parse_value(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    if f.type in ("int", int):
        return int(raw)
    if f.type in ("float", float):
        return float(raw)
    if f.type in ("bool", bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if f.type in ("list", list):
        if not raw:
            return []
        items = [x.strip() for x in raw.split(",")]
        if name in ("task_dims", "t_list"):
            return [int(x) for x in items]
        return items
    return raw


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    values = dataclasses.asdict(base) if base is not None else {}
    cfg = RunConfig(**values) if values else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, raw))
    cfg.__post_init__()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def dump_config(cfg: RunConfig) -> str:
    """Fully resolved config in the same key=value format."""
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}\n")
    return "".join(lines)
