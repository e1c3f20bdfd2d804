"""The weight-predicting field H(x, t): point-cloud condition encoder,
sinusoidal timestep embedding, MLP trunk, per-layer weight decoder heads,
and the offset parameterization theta0 + (t/T) * raw(x, t)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tasknet import FlatWeights, TaskNetSpec, init_theta, param_count


@dataclass(frozen=True)
class HypernetConfig:
    T: int = 4096
    cond_hidden: int = 64
    cond_dim: int = 128
    time_dim: int = 64
    trunk_width: int = 256
    trunk_depth: int = 4

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("trajectory horizon T must be >= 2")
        if self.time_dim % 2 != 0:
            raise ValueError("time_dim must be even")


@dataclass
class HypernetField:
    """Trainable parameters plus the fixed task-net starting weights theta0."""

    spec: TaskNetSpec
    config: HypernetConfig
    theta0: FlatWeights          # fixed, never trained
    params: dict                 # name -> np.ndarray, insertion order = layout

    @property
    def T(self) -> int:
        return self.config.T

    def param_layout(self):
        return [(name, arr.shape) for name, arr in self.params.items()]

    def copy(self) -> "HypernetField":
        return HypernetField(
            spec=self.spec, config=self.config, theta0=self.theta0.copy(),
            params={k: v.copy() for k, v in self.params.items()},
        )


def timestep_embedding(t: int, dim: int, T: int) -> np.ndarray:
    """Sinusoidal embedding with a geometric frequency ladder over [1/T, 1].

    The slowest cosine component is monotone on [0, T], so the embedding is
    injective on integer timesteps; embedding(0) = (sines 0, cosines 1).
    """
    half = dim // 2
    k = np.arange(half, dtype=np.float64)
    freqs = T ** (-k / max(half - 1, 1))  # 1 down to 1/T
    ang = t * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)])


def init_field(spec: TaskNetSpec, config: HypernetConfig, rng) -> HypernetField:
    """theta0 drawn once; decoder head final layers zero-initialized so the
    raw field is identically zero and the field starts as the constant theta0."""
    theta0 = init_theta(spec, rng)

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    p = {}
    d = spec.input_dim
    p["enc_w1"] = uniform(d, (d, config.cond_hidden))
    p["enc_b1"] = uniform(d, (config.cond_hidden,))
    p["enc_w2"] = uniform(config.cond_hidden, (config.cond_hidden, config.cond_dim))
    p["enc_b2"] = uniform(config.cond_hidden, (config.cond_dim,))

    in_dim = config.cond_dim + config.time_dim
    for i in range(config.trunk_depth):
        p[f"trunk_w{i}"] = uniform(in_dim, (in_dim, config.trunk_width))
        p[f"trunk_b{i}"] = uniform(in_dim, (config.trunk_width,))
        in_dim = config.trunk_width

    for i, n_i in enumerate(spec.layer_param_counts()):
        p[f"head_w{i}"] = np.zeros((config.trunk_width, n_i))
        p[f"head_b{i}"] = np.zeros((n_i,))

    return HypernetField(spec=spec, config=config, theta0=theta0, params=p)


class FieldGraph:
    """One tape over a field's parameters: leaf tensors plus forward helpers.

    Build one per loss evaluation; gradients come from the scalar loss via
    `leaves()`.
    """

    def __init__(self, field: HypernetField):
        self.field = field
        self.p = {k: T.Tensor(v, leaf=True) for k, v in field.params.items()}
        self.theta0 = T.Tensor(field.theta0.values.reshape(1, -1))

    def leaves(self):
        return list(self.p.values())

    def leaf_names(self):
        return list(self.p.keys())

    def encode_condition(self, cond_points: np.ndarray) -> T.Tensor:
        """Per-point MLP then coordinatewise max over points: (1, cond_dim)."""
        pts = np.asarray(cond_points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.field.spec.input_dim:
            raise T.ShapeError(
                f"condition cloud shape {pts.shape} does not match input dim "
                f"{self.field.spec.input_dim}")
        h = T.relu(T.add(T.matmul(T.Tensor(pts), self.p["enc_w1"]), self.p["enc_b1"]))
        h = T.add(T.matmul(h, self.p["enc_w2"]), self.p["enc_b2"])
        pooled = T.max_over_axis(h, 0)
        return T.reshape(pooled, (1, self.field.config.cond_dim))

    def trunk_features(self, cond_embed: T.Tensor, t: int) -> T.Tensor:
        cfg = self.field.config
        emb = timestep_embedding(t, cfg.time_dim, cfg.T).reshape(1, -1)
        h = T.concat([cond_embed, T.Tensor(emb)], axis=1)
        for i in range(cfg.trunk_depth):
            h = T.relu(T.add(T.matmul(h, self.p[f"trunk_w{i}"]),
                             self.p[f"trunk_b{i}"]))
        return h

    def raw_field(self, cond_embed: T.Tensor, t: int) -> T.Tensor:
        """Concatenated decoder head outputs, shape (1, param_count(spec))."""
        if not 0 <= t <= self.field.T:
            raise ValueError(f"timestep {t} outside [0, {self.field.T}]")
        h = self.trunk_features(cond_embed, t)
        slices = []
        for i in range(self.field.spec.num_layers):
            slices.append(T.add(T.matmul(h, self.p[f"head_w{i}"]),
                                self.p[f"head_b{i}"]))
        return T.concat(slices, axis=1)

    def predict_weights(self, cond_embed: T.Tensor, t: int) -> T.Tensor:
        """theta0 + (t/T) * raw(x, t), shape (1, param_count); exactly theta0
        at t=0 for any parameters."""
        raw = self.raw_field(cond_embed, t)
        return T.add(self.theta0, T.scale(raw, t / self.field.T))

    def predict_layer_params(self, cond_embed: T.Tensor, t: int):
        """Predicted weights as [(W_i, b_i)] tape tensors for task-net forward."""
        flat = self.predict_weights(cond_embed, t)
        spec = self.field.spec
        sizes = []
        for (w_shape, b_shape) in spec.layer_shapes():
            sizes.append(w_shape[0] * w_shape[1])
            sizes.append(b_shape[0])
        pieces = T.split(flat, sizes, axis=1)
        layers = []
        for i, (w_shape, b_shape) in enumerate(spec.layer_shapes()):
            w = T.reshape(pieces[2 * i], w_shape)
            b = T.reshape(pieces[2 * i + 1], b_shape)
            layers.append((w, b))
        return layers


# Convenience non-graph entry points ----------------------------------------

def encode_condition(field: HypernetField, cond_points: np.ndarray) -> np.ndarray:
    g = FieldGraph(field)
    return g.encode_condition(cond_points).data.reshape(-1).copy()


def raw_field(field: HypernetField, cond_points: np.ndarray, t: int) -> np.ndarray:
    g = FieldGraph(field)
    return g.raw_field(g.encode_condition(cond_points), t).data.reshape(-1).copy()


def predict_weights(field: HypernetField, cond_points: np.ndarray,
                    t: int) -> FlatWeights:
    """Field evaluation detached from any tape."""
    if not isinstance(t, (int, np.integer)):
        raise ValueError(f"timestep must be an integer, got {t!r}")
    g = FieldGraph(field)
    flat = g.predict_weights(g.encode_condition(cond_points), int(t))
    return FlatWeights(field.spec, flat.data.reshape(-1).copy())
