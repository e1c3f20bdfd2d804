"""Gradient-matching training of the weight field, plus the comparison
regimes: precomputed-target baseline, reconstruction-loss ablation, and fast
fine-tuning of predicted weights."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .hypernet import FieldGraph, HypernetField
from .tasknet import (FlatWeights, NumericalError, QueryBatch, gradient_step,
                      per_sample_optimize, sample_query_batch, task_loss)

# SeedSequence spawn-key namespaces; keep stable for reproducibility
STREAM_DATA = 0
STREAM_TRAIN = 1
STREAM_ORACLE = 2
STREAM_INIT = 3
STREAM_EVAL = 4


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Deterministic stream for a (purpose, index...) key, independent of
    worker count or call order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class TrainConfig:
    T: int = 4096
    eta_inner: float = 1.0
    inner_batch: int = 256
    oracle_batch: int = 512
    outer_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2
    iterations: int = 8000
    seed: int = 0
    loss_target_mode: str = "stopped"  # or "delta"
    outer_lr_schedule: str = "cosine"  # or "constant"
    fft_steps: int = 50
    record_every: int = 50

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.eta_inner <= 0:
            raise ValueError("eta_inner must be positive")
        if self.inner_batch < 1 or self.oracle_batch < 1:
            raise ValueError("inner_batch and oracle_batch must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss_target_mode not in ("stopped", "delta"):
            raise ValueError(
                f"loss_target_mode must be 'stopped' or 'delta', "
                f"got {self.loss_target_mode!r}")
        if self.outer_lr_schedule not in ("cosine", "constant"):
            raise ValueError(
                f"outer_lr_schedule must be 'cosine' or 'constant', "
                f"got {self.outer_lr_schedule!r}")

    def outer_lr_at(self, iteration: int) -> float:
        """Learning rate for one outer iteration. The cosine schedule decays
        to zero over `iterations` so the field parameters settle instead of
        hovering at Adam's noise floor; tiny per-step errors compound over a
        whole trajectory, so the floor matters here."""
        if self.outer_lr_schedule == "constant" or self.iterations <= 0:
            return self.outer_lr
        frac = min(max(iteration / self.iterations, 0.0), 1.0)
        return self.outer_lr * 0.5 * (1.0 + np.cos(np.pi * frac))


@dataclass
class TrainLogRecord:
    iteration: int
    gm_loss: float
    mean_task_loss: float
    wallclock_ms: float
    rng_checkpoint: tuple  # (seed, next_iteration)

    def csv_row(self) -> str:
        return (f"{self.iteration},{self.gm_loss!r},{self.mean_task_loss!r},"
                f"{self.wallclock_ms:.3f}\n")


CSV_HEADER = "iteration,loss,mean_task_loss,wallclock_ms\n"


@dataclass
class AdamState:
    """Moment buffers keyed like the field's parameter dict."""

    m: dict
    v: dict
    step: int = 0

    @staticmethod
    def fresh(params: dict) -> "AdamState":
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_update(params: dict, grads: dict, state: AdamState, cfg: TrainConfig,
                lr: float | None = None):
    state.step += 1
    step_lr = cfg.outer_lr if lr is None else lr
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for k, g in grads.items():
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        mhat = state.m[k] / bc1
        vhat = state.v[k] / bc2
        params[k] = params[k] - step_lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)


@dataclass
class TrainState:
    """Everything needed to resume a run bit-exactly."""

    iteration: int
    adam: AdamState


# ---------------------------------------------------------------------------
# Gradient-matching loss
# ---------------------------------------------------------------------------

def gradient_matching_loss(field: HypernetField, sample, t: int, rng,
                           config: TrainConfig, graph: FieldGraph | None = None):
    """Scalar tape loss for one (sample, t) pair.

    Builds theta_hat_t = H(x,t), takes one true SGD step of the task loss to
    get the target theta_{t+1}, and returns
    mean((theta_{t+1} - H(x,t+1))^2).  In 'stopped' mode the target is a
    constant and gradients flow only through H(x,t+1); in 'delta' mode the
    loss is mean((delta_target - (H(x,t+1)-H(x,t)))^2) with gradient through
    both field queries (the target stays constant either way).

    Returns (loss_tensor, graph, task_loss_at_theta_hat).
    """
    if not 0 <= t <= config.T - 1:
        raise ValueError(f"t={t} outside [0, {config.T - 1}]")
    g = graph if graph is not None else FieldGraph(field)
    cond = g.encode_condition(sample.cond_points)
    pred_t = g.predict_weights(cond, t)
    theta_hat = FlatWeights(field.spec, pred_t.data.reshape(-1).copy())

    batch = sample_query_batch(sample.query_pool, config.inner_batch, rng)
    inner_loss = task_loss(theta_hat, batch)
    try:
        target = gradient_step(theta_hat, batch, config.eta_inner)
    except NumericalError as e:
        e.step = t
        raise
    if not np.all(np.isfinite(target.values)):
        raise NumericalError("non-finite inner-step target", loss=inner_loss, step=t)

    pred_next = g.predict_weights(cond, t + 1)
    if config.loss_target_mode == "stopped":
        resid = T.sub(T.Tensor(target.values.reshape(1, -1)), pred_next)
    else:
        delta_target = target.values - theta_hat.values
        est_delta = T.sub(pred_next, pred_t)
        resid = T.sub(T.Tensor(delta_target.reshape(1, -1)), est_delta)
    loss = T.reduce_mean(T.mul(resid, resid))
    return loss, g, inner_loss


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _accumulate_pair_grads(field, dataset, config, iteration, slot, t_override=None,
                           inner_step_counter=None):
    rng = derive_rng(config.seed, STREAM_TRAIN, iteration, slot)
    sample = dataset[int(rng.integers(0, len(dataset)))]
    t = int(rng.integers(0, config.T)) if t_override is None else t_override
    loss, g, inner_loss = gradient_matching_loss(field, sample, t, rng, config)
    grads = T.backward(loss, g.leaves())
    named = {name: grads[id(leaf)] for name, leaf in g.p.items()}
    if inner_step_counter is not None:
        inner_step_counter[0] += 1
    return loss.item(), inner_loss, named


def train_field(field: HypernetField, dataset, config: TrainConfig,
                state: TrainState | None = None, log_file=None,
                max_iterations: int | None = None):
    """Gradient-matching training loop over (sample, t) pairs.

    `state` resumes a run mid-flight; `max_iterations` stops early (for
    interrupt/resume testing) while keeping the iteration-indexed RNG streams
    identical to an uninterrupted run. Returns (field, logs, state,
    inner_step_count).
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if state is None:
        state = TrainState(iteration=0, adam=AdamState.fresh(field.params))
    logs = []
    start = time.monotonic()
    stop = config.iterations if max_iterations is None else min(
        config.iterations, max_iterations)
    inner_steps = [0]
    while state.iteration < stop:
        it = state.iteration
        total = {k: np.zeros_like(v) for k, v in field.params.items()}
        gm_sum = 0.0
        task_sum = 0.0
        for slot in range(config.batch_size):
            gm, tl, named = _accumulate_pair_grads(
                field, dataset, config, it, slot, inner_step_counter=inner_steps)
            gm_sum += gm
            task_sum += tl
            for k in total:
                total[k] += named[k]
        for k in total:
            total[k] /= config.batch_size
        adam_update(field.params, total, state.adam, config,
                    lr=config.outer_lr_at(it))
        state.iteration += 1
        if config.record_every > 0 and (
                state.iteration % config.record_every == 0 or state.iteration == stop):
            rec = TrainLogRecord(
                iteration=state.iteration,
                gm_loss=gm_sum / config.batch_size,
                mean_task_loss=task_sum / config.batch_size,
                wallclock_ms=(time.monotonic() - start) * 1e3,
                rng_checkpoint=(config.seed, state.iteration),
            )
            logs.append(rec)
            if log_file is not None:
                log_file.write(rec.csv_row())
    return field, logs, state, inner_steps[0]


@dataclass
class BaselineCostReport:
    phase1_inner_steps: int
    phase1_wallclock_s: float
    phase2_iterations: int
    phase2_wallclock_s: float
    num_samples: int


def train_baseline_precomputed(field: HypernetField, dataset, config: TrainConfig):
    """Classic two-phase hypernetwork training: precompute converged task
    weights per sample with the per-sample oracle, then regress H(x, T) onto
    them. Returns (field, logs, cost_report)."""
    if not dataset:
        raise ValueError("dataset is empty")
    t0 = time.monotonic()
    targets = {}
    for i, sample in enumerate(dataset):
        rng = derive_rng(config.seed, STREAM_ORACLE, i)
        snaps = per_sample_optimize(
            sample, field.spec, field.theta0, config.T, config.eta_inner,
            record_every=0, rng=rng, batch_size=config.oracle_batch)
        targets[i] = snaps[-1][1].values
    phase1_s = time.monotonic() - t0
    phase1_steps = config.T * len(dataset)

    t1 = time.monotonic()
    state = TrainState(iteration=0, adam=AdamState.fresh(field.params))
    logs = []
    start = time.monotonic()
    while state.iteration < config.iterations:
        it = state.iteration
        total = {k: np.zeros_like(v) for k, v in field.params.items()}
        loss_sum = 0.0
        for slot in range(config.batch_size):
            rng = derive_rng(config.seed, STREAM_TRAIN, it, slot)
            i = int(rng.integers(0, len(dataset)))
            g = FieldGraph(field)
            cond = g.encode_condition(dataset[i].cond_points)
            pred = g.predict_weights(cond, config.T)
            resid = T.sub(T.Tensor(targets[i].reshape(1, -1)), pred)
            loss = T.reduce_mean(T.mul(resid, resid))
            grads = T.backward(loss, g.leaves())
            loss_sum += loss.item()
            for k, leaf in g.p.items():
                total[k] += grads[id(leaf)]
        for k in total:
            total[k] /= config.batch_size
        adam_update(field.params, total, state.adam, config,
                    lr=config.outer_lr_at(it))
        state.iteration += 1
        if config.record_every > 0 and state.iteration % config.record_every == 0:
            logs.append(TrainLogRecord(
                iteration=state.iteration,
                gm_loss=loss_sum / config.batch_size,
                mean_task_loss=float("nan"),
                wallclock_ms=(time.monotonic() - start) * 1e3,
                rng_checkpoint=(config.seed, state.iteration),
            ))
    report = BaselineCostReport(
        phase1_inner_steps=phase1_steps,
        phase1_wallclock_s=phase1_s,
        phase2_iterations=config.iterations,
        phase2_wallclock_s=time.monotonic() - t1,
        num_samples=len(dataset),
    )
    return field, logs, report


def train_ablation_recon(field: HypernetField, dataset, config: TrainConfig,
                         log_file=None):
    """Ablation: train the field directly on the task loss of H(x, T),
    differentiated through the field. Returns (field, logs)."""
    if not dataset:
        raise ValueError("dataset is empty")
    from .tasknet import task_loss_graph

    state = TrainState(iteration=0, adam=AdamState.fresh(field.params))
    logs = []
    start = time.monotonic()
    while state.iteration < config.iterations:
        it = state.iteration
        total = {k: np.zeros_like(v) for k, v in field.params.items()}
        loss_sum = 0.0
        for slot in range(config.batch_size):
            rng = derive_rng(config.seed, STREAM_TRAIN, it, slot)
            sample = dataset[int(rng.integers(0, len(dataset)))]
            batch = sample_query_batch(sample.query_pool, config.inner_batch, rng)
            g = FieldGraph(field)
            cond = g.encode_condition(sample.cond_points)
            layers = g.predict_layer_params(cond, config.T)
            loss = task_loss_graph(layers, batch)
            grads = T.backward(loss, g.leaves())
            loss_sum += loss.item()
            for k, leaf in g.p.items():
                total[k] += grads[id(leaf)]
        for k in total:
            total[k] /= config.batch_size
        adam_update(field.params, total, state.adam, config,
                    lr=config.outer_lr_at(it))
        state.iteration += 1
        if config.record_every > 0 and state.iteration % config.record_every == 0:
            rec = TrainLogRecord(
                iteration=state.iteration,
                gm_loss=loss_sum / config.batch_size,
                mean_task_loss=loss_sum / config.batch_size,
                wallclock_ms=(time.monotonic() - start) * 1e3,
                rng_checkpoint=(config.seed, state.iteration),
            )
            logs.append(rec)
            if log_file is not None:
                log_file.write(rec.csv_row())
    return field, logs


def fast_finetune(weights: FlatWeights, sample, steps: int, eta: float, rng,
                  batch_size: int = 256) -> FlatWeights:
    """Short SGD continuation of the task loss from the given weights."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    theta = weights.copy()
    for _ in range(steps):
        batch = sample_query_batch(sample.query_pool, batch_size, rng)
        theta = gradient_step(theta, batch, eta)
    return theta
