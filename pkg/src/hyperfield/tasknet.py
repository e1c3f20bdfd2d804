"""The task-specific occupancy network: flat weight layout, forward pass,
MSE task loss, single SGD steps, and the per-sample optimization oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T


class DivergenceError(RuntimeError):
    """Per-sample optimization diverged; carries the recorded trajectory prefix."""

    def __init__(self, msg, trajectory=None, step=None, loss=None):
        super().__init__(msg)
        self.trajectory = trajectory or []
        self.step = step
        self.loss = loss


class NumericalError(RuntimeError):
    """Non-finite value in a gradient computation."""

    def __init__(self, msg, loss=None, step=None):
        super().__init__(msg)
        self.loss = loss
        self.step = step


@dataclass(frozen=True)
class TaskNetSpec:
    """MLP layer widths: input coordinate dim first, scalar occupancy last.

    Hidden activations are ReLU, the output is a sigmoid.
    """

    layer_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError(f"need at least one linear layer, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")
        if dims[-1] != 1:
            raise ValueError(f"output dim must be 1, got {dims}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_layers(self) -> int:
        return len(self.layer_dims) - 1

    def layer_shapes(self):
        """[(weight_shape, bias_shape)] per linear layer, canonical order."""
        d = self.layer_dims
        return [((d[i], d[i + 1]), (d[i + 1],)) for i in range(len(d) - 1)]

    def layer_param_counts(self):
        d = self.layer_dims
        return [d[i] * d[i + 1] + d[i + 1] for i in range(len(d) - 1)]


def param_count(spec: TaskNetSpec) -> int:
    return sum(spec.layer_param_counts())


@dataclass
class FlatWeights:
    """A task network's full parameter set as one flat vector.

    Canonical layout: layer 0 weight matrix row-major, layer 0 bias,
    layer 1 weight matrix, layer 1 bias, ...
    """

    spec: TaskNetSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        expected = param_count(self.spec)
        if self.values.size != expected:
            raise ValueError(
                f"flat vector length {self.values.size} != param_count {expected}"
            )

    def unflatten(self):
        """Views [(W_i, b_i)] into the flat vector, canonical order."""
        out = []
        off = 0
        for (w_shape, b_shape) in self.spec.layer_shapes():
            wn = w_shape[0] * w_shape[1]
            w = self.values[off:off + wn].reshape(w_shape)
            off += wn
            b = self.values[off:off + b_shape[0]]
            off += b_shape[0]
            out.append((w, b))
        return out

    @staticmethod
    def flatten(spec: TaskNetSpec, layers) -> "FlatWeights":
        parts = []
        for w, b in layers:
            parts.append(np.asarray(w, dtype=np.float64).reshape(-1))
            parts.append(np.asarray(b, dtype=np.float64).reshape(-1))
        return FlatWeights(spec, np.concatenate(parts))

    def copy(self) -> "FlatWeights":
        return FlatWeights(self.spec, self.values.copy())


@dataclass
class QueryBatch:
    """Query coordinates in [-1,1]^d with binary occupancy labels."""

    points: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,) in {0, 1}

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        if self.points.ndim != 2 or self.points.shape[0] != self.labels.size:
            raise ValueError(
                f"points {self.points.shape} inconsistent with {self.labels.size} labels"
            )
        if self.points.shape[0] < 1:
            raise ValueError("empty query batch")

    def __len__(self):
        return self.points.shape[0]


# ---------------------------------------------------------------------------
# Forward pass and loss
# ---------------------------------------------------------------------------

def forward_from_layers(layer_tensors, points: T.Tensor) -> T.Tensor:
    """Occupancy forward on tape tensors: ReLU hidden layers, sigmoid output.

    `layer_tensors` is [(W, b)] with W of shape (in, out); returns (N, 1).
    """
    h = points
    last = len(layer_tensors) - 1
    for i, (w, b) in enumerate(layer_tensors):
        h = T.add(T.matmul(h, w), b)
        h = T.sigmoid(h) if i == last else T.relu(h)
    return h


def _leaf_layers(weights: FlatWeights):
    return [(T.Tensor(w, leaf=True), T.Tensor(b, leaf=True))
            for w, b in weights.unflatten()]


def occupancy_forward(weights: FlatWeights, points: np.ndarray) -> np.ndarray:
    """Plain numpy occupancy predictions in (0,1), shape (N,)."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != weights.spec.input_dim:
        raise ValueError(
            f"points shape {points.shape} does not match input dim "
            f"{weights.spec.input_dim}"
        )
    h = points
    layers = weights.unflatten()
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        h = T._stable_sigmoid(h) if i == len(layers) - 1 else np.maximum(h, 0.0)
    return h.reshape(-1)


def task_loss_graph(layer_tensors, batch: QueryBatch) -> T.Tensor:
    """MSE occupancy loss as a scalar on the tape."""
    pred = forward_from_layers(layer_tensors, T.Tensor(batch.points))
    resid = T.sub(pred, T.Tensor(batch.labels.reshape(-1, 1)))
    return T.reduce_mean(T.mul(resid, resid))


def task_loss(weights: FlatWeights, batch: QueryBatch) -> float:
    pred = occupancy_forward(weights, batch.points)
    return float(np.mean((pred - batch.labels) ** 2))


def task_gradient(weights: FlatWeights, batch: QueryBatch):
    """(loss value, flat gradient vector) of the MSE loss at `weights`."""
    layers = _leaf_layers(weights)
    loss = task_loss_graph(layers, batch)
    flat_leaves = [t for pair in layers for t in pair]
    grads = T.grads_of(loss, flat_leaves)
    flat = np.concatenate([g.reshape(-1) for g in grads])
    return loss.item(), flat


def gradient_step(weights: FlatWeights, batch: QueryBatch, eta: float) -> FlatWeights:
    """One plain SGD step on the task loss; the result carries no tape."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    loss, grad = task_gradient(weights, batch)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite task gradient", loss=loss)
    if eta == 0.0:
        return weights.copy()
    return FlatWeights(weights.spec, weights.values - eta * grad)


def sample_query_batch(pool: QueryBatch, batch_size: int, rng) -> QueryBatch:
    idx = rng.integers(0, len(pool), size=batch_size)
    return QueryBatch(pool.points[idx], pool.labels[idx])


def per_sample_optimize(sample, spec: TaskNetSpec, theta0: FlatWeights, T_steps: int,
                        eta: float, record_every: int, rng,
                        batch_size: int = 256):
    """T-step SGD fit of the occupancy net for one shape: the trajectory oracle.

    Resamples a fresh query batch from the sample's pool each step. Returns
    [(t, FlatWeights)] snapshots including t=0 and t=T_steps.
    """
    if theta0.spec != spec:
        raise ValueError("theta0 spec does not match requested spec")
    snapshots = [(0, theta0.copy())]
    theta = theta0
    initial_loss = None
    for t in range(T_steps):
        batch = sample_query_batch(sample.query_pool, batch_size, rng)
        loss = task_loss(theta, batch)
        if initial_loss is None:
            initial_loss = max(loss, 1e-12)
        if not np.isfinite(loss) or loss > 50.0 * initial_loss:
            raise DivergenceError(
                f"loss {loss} at step {t} exceeds 50x initial {initial_loss}",
                trajectory=snapshots, step=t, loss=loss,
            )
        try:
            theta = gradient_step(theta, batch, eta)
        except NumericalError as e:
            e.step = t
            raise
        step = t + 1
        if step == T_steps or (record_every > 0 and step % record_every == 0):
            snapshots.append((step, theta.copy()))
    return snapshots


def init_theta(spec: TaskNetSpec, rng) -> FlatWeights:
    """Fan-in-scaled uniform init (bound 1/sqrt(fan_in)) per layer."""
    layers = []
    for (w_shape, b_shape) in spec.layer_shapes():
        bound = 1.0 / np.sqrt(w_shape[0])
        layers.append((
            rng.uniform(-bound, bound, size=w_shape),
            rng.uniform(-bound, bound, size=b_shape),
        ))
    return FlatWeights.flatten(spec, layers)
