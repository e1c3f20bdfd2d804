"""Central-difference gradient checks for every primitive and for the
composed occupancy loss. Used by the CLI, the tests, and the acceptance
suite."""

from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .tasknet import QueryBatch, TaskNetSpec, _leaf_layers, init_theta, task_loss_graph

DEFAULT_SEEDS = range(10)
DEFAULT_EPSILON = 1e-5
TOLERANCE = 1e-4

PRIMITIVES = (
    "matmul", "add", "elementwise-mul", "relu", "sigmoid", "tanh", "sin",
    "cos", "reduce-mean", "reduce-sum", "max-over-axis", "concat",
    "scale-by-constant",
)


def _away_from_kink(rng, shape, margin=1e-3):
    """Random values with |x| > margin, so ReLU/max kinks cannot corrupt the
    finite-difference estimate."""
    x = rng.uniform(-1.0, 1.0, size=shape)
    x = np.where(np.abs(x) < margin, np.sign(x) * margin + x, x)
    return x


def _case(name: str, rng):
    """(f, leaves) for one primitive check; scalarized with reduce-mean."""
    m, k, n = rng.integers(2, 17, size=3)
    if name == "matmul":
        a = T.Tensor(rng.normal(size=(m, k)), leaf=True)
        b = T.Tensor(rng.normal(size=(k, n)), leaf=True)
        return (lambda ls: T.reduce_mean(T.matmul(ls[0], ls[1]))), [a, b]
    if name == "add":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        b = T.Tensor(rng.normal(size=(n,)), leaf=True)
        return (lambda ls: T.reduce_mean(T.add(ls[0], ls[1]))), [a, b]
    if name == "elementwise-mul":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        b = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        return (lambda ls: T.reduce_mean(T.mul(ls[0], ls[1]))), [a, b]
    if name == "relu":
        a = T.Tensor(_away_from_kink(rng, (m, n)), leaf=True)
        return (lambda ls: T.reduce_mean(T.relu(ls[0]))), [a]
    if name in ("sigmoid", "tanh", "sin", "cos"):
        fn = getattr(T, name)
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        return (lambda ls: T.reduce_mean(fn(ls[0]))), [a]
    if name == "reduce-mean":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        return (lambda ls: T.reduce_mean(ls[0])), [a]
    if name == "reduce-sum":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        return (lambda ls: T.reduce_sum(ls[0])), [a]
    if name == "max-over-axis":
        # well-separated values so the argmax is stable under perturbation
        vals = rng.permutation(m * n).astype(np.float64).reshape(m, n) * 0.1
        a = T.Tensor(vals, leaf=True)
        axis = int(rng.integers(0, 2))
        return (lambda ls: T.reduce_mean(T.max_over_axis(ls[0], axis))), [a]
    if name == "concat":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        b = T.Tensor(rng.normal(size=(k, n)), leaf=True)
        return (lambda ls: T.reduce_mean(
            T.mul(T.concat(ls, axis=0), T.concat(ls, axis=0)))), [a, b]
    if name == "scale-by-constant":
        a = T.Tensor(rng.normal(size=(m, n)), leaf=True)
        c = float(rng.normal())
        return (lambda ls: T.reduce_mean(T.scale(ls[0], c))), [a]
    raise ValueError(f"unknown primitive: {name!r}")


def occupancy_loss_case(rng):
    """Composed check: MSE occupancy loss of a small task net."""
    spec = TaskNetSpec((2, 8, 8, 1))
    w = init_theta(spec, rng)
    batch = QueryBatch(rng.uniform(-1, 1, size=(16, 2)),
                       rng.integers(0, 2, size=16))
    layers = _leaf_layers(w)
    leaves = [t for pair in layers for t in pair]

    def f(ls):
        lay = [(ls[2 * i], ls[2 * i + 1]) for i in range(len(ls) // 2)]
        return task_loss_graph(lay, batch)

    return f, leaves


def run_suite(seeds=DEFAULT_SEEDS, epsilon=DEFAULT_EPSILON, inject_fault=None):
    """Worst-case relative error per primitive (plus 'occupancy-loss').

    `inject_fault` corrupts one primitive's backward rule for the negative
    test path. Returns {name: max_rel_error}.
    """
    prev = T._FAULT_INJECT
    T._FAULT_INJECT = inject_fault
    try:
        results = {}
        for name in PRIMITIVES:
            worst = 0.0
            for seed in seeds:
                rng = np.random.default_rng(
                    np.random.SeedSequence(
                        seed, spawn_key=(zlib.crc32(name.encode()),)))
                f, leaves = _case(name, rng)
                worst = max(worst, T.grad_check(f, leaves, epsilon))
            results[name] = worst
        worst = 0.0
        for seed in seeds:
            rng = np.random.default_rng(seed)
            f, leaves = occupancy_loss_case(rng)
            worst = max(worst, T.grad_check(f, leaves, epsilon))
        results["occupancy-loss"] = worst
        return results
    finally:
        T._FAULT_INJECT = prev
