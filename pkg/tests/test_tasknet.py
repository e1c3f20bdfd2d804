import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from hyperfield import tasknet as tn
from hyperfield.shapes import sample_shape
from hyperfield.tasknet import (
    DivergenceError,
    FlatWeights,
    QueryBatch,
    TaskNetSpec,
    gradient_step,
    init_theta,
    occupancy_forward,
    param_count,
    per_sample_optimize,
    sample_query_batch,
    task_gradient,
    task_loss,
)


def test_param_count_worked_examples():
    assert param_count(TaskNetSpec((2, 8, 8, 1))) == 2 * 8 + 8 + 8 * 8 + 8 + 8 + 1
    assert param_count(TaskNetSpec((2, 32, 32, 1))) == 1185
    assert param_count(TaskNetSpec((2, 1))) == 3


def test_spec_validation():
    with pytest.raises(ValueError):
        TaskNetSpec((2,))
    with pytest.raises(ValueError):
        TaskNetSpec((2, 8, 2))  # output dim must be 1
    with pytest.raises(ValueError):
        TaskNetSpec((2, 0, 1))


def test_flatten_unflatten_round_trip():
    spec = TaskNetSpec((2, 5, 3, 1))
    rng = np.random.default_rng(0)
    for _ in range(100):
        flat = rng.normal(size=param_count(spec))
        w = FlatWeights(spec, flat.copy())
        back = FlatWeights.flatten(spec, w.unflatten())
        assert np.array_equal(back.values, flat)


def test_flat_weights_length_checked():
    spec = TaskNetSpec((2, 4, 1))
    with pytest.raises(ValueError, match="param_count"):
        FlatWeights(spec, np.zeros(7))


def test_zero_weights_predict_half():
    spec = TaskNetSpec((2, 16, 1))
    w = FlatWeights(spec, np.zeros(param_count(spec)))
    pts = np.random.default_rng(1).uniform(-1, 1, size=(32, 2))
    assert np.all(occupancy_forward(w, pts) == 0.5)


def test_forward_is_rowwise_and_bounded():
    spec = TaskNetSpec((2, 8, 1))
    rng = np.random.default_rng(2)
    w = init_theta(spec, rng)
    pts = rng.uniform(-1, 1, size=(10, 2))
    full = occupancy_forward(w, pts)
    for i in range(10):
        single = occupancy_forward(w, pts[i:i + 1])
        assert single[0] == full[i]
    assert np.all((full > 0) & (full < 1))


def test_task_loss_hand_value():
    # zero net predicts 0.5 everywhere; labels half 0 half 1 -> MSE = 0.25
    spec = TaskNetSpec((2, 4, 1))
    w = FlatWeights(spec, np.zeros(param_count(spec)))
    batch = QueryBatch(np.zeros((4, 2)), np.array([0, 1, 0, 1]))
    assert task_loss(w, batch) == pytest.approx(0.25)


def test_task_gradient_matches_finite_differences():
    spec = TaskNetSpec((2, 6, 1))
    rng = np.random.default_rng(3)
    w = init_theta(spec, rng)
    batch = QueryBatch(rng.uniform(-1, 1, size=(12, 2)),
                       rng.integers(0, 2, size=12))
    _, grad = task_gradient(w, batch)
    eps = 1e-6
    for j in rng.choice(param_count(spec), size=10, replace=False):
        bumped = w.copy()
        bumped.values[j] += eps
        dipped = w.copy()
        dipped.values[j] -= eps
        fd = (task_loss(bumped, batch) - task_loss(dipped, batch)) / (2 * eps)
        assert grad[j] == pytest.approx(fd, rel=1e-4, abs=1e-8)


def test_gradient_step_zero_eta_is_identity_copy():
    spec = TaskNetSpec((2, 4, 1))
    rng = np.random.default_rng(4)
    w = init_theta(spec, rng)
    batch = QueryBatch(rng.uniform(-1, 1, size=(8, 2)), rng.integers(0, 2, size=8))
    stepped = gradient_step(w, batch, 0.0)
    assert np.array_equal(stepped.values, w.values)
    assert stepped.values is not w.values


def test_gradient_step_closed_form_single_layer():
    # net: sigmoid(w.x + b); derive the SGD update by hand for one point
    spec = TaskNetSpec((1, 1))
    w = FlatWeights(spec, np.array([0.3, -0.1]))
    x, y, eta = 0.7, 1.0, 0.5
    batch = QueryBatch(np.array([[x]]), np.array([y]))
    s = 1.0 / (1.0 + np.exp(-(0.3 * x - 0.1)))
    common = 2.0 * (s - y) * s * (1.0 - s)
    expected = np.array([0.3 - eta * common * x, -0.1 - eta * common])
    stepped = gradient_step(w, batch, eta)
    assert np.allclose(stepped.values, expected, atol=1e-12)


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_gradient_step_descends_at_small_eta(seed):
    spec = TaskNetSpec((2, 8, 1))
    rng = np.random.default_rng(seed)
    w = init_theta(spec, rng)
    batch = QueryBatch(rng.uniform(-1, 1, size=(32, 2)),
                       rng.integers(0, 2, size=32))
    before = task_loss(w, batch)
    after = task_loss(gradient_step(w, batch, 1e-3), batch)
    assert after <= before + 1e-12


def test_sample_query_batch_draws_from_pool():
    pool = QueryBatch(np.arange(20, dtype=float).reshape(10, 2),
                      np.arange(10) % 2)
    rng = np.random.default_rng(5)
    batch = sample_query_batch(pool, 64, rng)
    assert len(batch) == 64
    # every drawn row is one of the pool rows with its own label
    for p, l in zip(batch.points, batch.labels):
        row = int(p[0]) // 2
        assert np.array_equal(pool.points[row], p)
        assert pool.labels[row] == l


def _desk_sample(seed=0):
    return sample_shape("circle", np.random.default_rng(seed),
                        cond_points=128, pool_size=1024)


def test_per_sample_optimize_contract_and_determinism():
    spec = TaskNetSpec((2, 16, 1))
    theta0 = init_theta(spec, np.random.default_rng(6))
    sample = _desk_sample()

    def run():
        return per_sample_optimize(sample, spec, theta0, T_steps=64, eta=0.5,
                                   record_every=16,
                                   rng=np.random.default_rng(7), batch_size=64)

    snaps = run()
    assert [t for t, _ in snaps] == [0, 16, 32, 48, 64]
    assert np.array_equal(snaps[0][1].values, theta0.values)
    again = run()
    for (t1, w1), (t2, w2) in zip(snaps, again):
        assert t1 == t2 and np.array_equal(w1.values, w2.values)


def test_per_sample_optimize_reduces_loss():
    spec = TaskNetSpec((2, 16, 1))
    theta0 = init_theta(spec, np.random.default_rng(8))
    sample = _desk_sample(1)
    snaps = per_sample_optimize(sample, spec, theta0, T_steps=1024, eta=1.0,
                                record_every=0,
                                rng=np.random.default_rng(9), batch_size=128)
    pool = sample.query_pool
    assert task_loss(snaps[-1][1], pool) < 0.5 * task_loss(theta0, pool)


def test_per_sample_optimize_divergence_guard(monkeypatch):
    spec = TaskNetSpec((2, 16, 1))
    theta0 = init_theta(spec, np.random.default_rng(10))
    sample = _desk_sample(2)
    losses = iter([0.01, 0.02, 5.0])  # 5.0 > 50x initial 0.01
    monkeypatch.setattr(tn, "task_loss", lambda w, b: next(losses))
    with pytest.raises(DivergenceError) as info:
        per_sample_optimize(sample, spec, theta0, T_steps=2000, eta=0.5,
                            record_every=1,
                            rng=np.random.default_rng(11), batch_size=64)
    err = info.value
    assert err.step == 2 and err.loss == 5.0
    assert len(err.trajectory) >= 1  # prefix available for diagnosis


def test_per_sample_optimize_rejects_non_finite_loss(monkeypatch):
    spec = TaskNetSpec((2, 16, 1))
    theta0 = init_theta(spec, np.random.default_rng(13))
    sample = _desk_sample(3)
    losses = iter([0.1, float("nan")])
    monkeypatch.setattr(tn, "task_loss", lambda w, b: next(losses))
    with pytest.raises(DivergenceError):
        per_sample_optimize(sample, spec, theta0, T_steps=10, eta=0.5,
                            record_every=0,
                            rng=np.random.default_rng(14), batch_size=32)


def test_init_theta_fan_in_bounds():
    spec = TaskNetSpec((2, 32, 32, 1))
    w = init_theta(spec, np.random.default_rng(12))
    for (wm, b), (w_shape, _) in zip(w.unflatten(), spec.layer_shapes()):
        bound = 1.0 / np.sqrt(w_shape[0])
        assert np.all(np.abs(wm) <= bound)
        assert np.all(np.abs(b) <= bound)


def test_query_batch_validation():
    with pytest.raises(ValueError):
        QueryBatch(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        QueryBatch(np.zeros((0, 2)), np.zeros(0))
