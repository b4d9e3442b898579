import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_h1
from tlfno.fno import Hyperparams, init_params
from tlfno.optim import (AdamW, OptimError, Pairs, TrainConfig, TrainingDiverged, adamw_step, finetune,
                         finite_diff, finite_diff_adjoint, mse_loss, sobolev_h1_loss, split_indices, train)


def test_finite_diff_replicates_last():
    u = np.array([[0.0, 1.0, 4.0, 9.0]])
    np.testing.assert_array_equal(finite_diff(u, "range"), [[1.0, 3.0, 5.0, 5.0]])
    np.testing.assert_array_equal(finite_diff(u.T, "depth"), [[1.0], [3.0], [5.0], [5.0]])
    np.testing.assert_array_equal(finite_diff(u, "range", 2), [[2.0, 2.0, 0.0, 0.0]])


def test_finite_diff_bad_axis():
    with pytest.raises(OptimError):
        finite_diff(np.zeros((3, 3)), "time")


@pytest.mark.parametrize("axis", ["range", "depth"])
@pytest.mark.parametrize("order", [1, 2])
def test_finite_diff_adjoint(rng, axis, order):
    u = rng.normal(size=(2, 6, 7))
    g = rng.normal(size=(2, 6, 7))
    lhs = np.sum(finite_diff(u, axis, order) * g)
    rhs = np.sum(u * finite_diff_adjoint(g, axis, order))
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_sobolev_matches_loops(rng):
    a, b = rng.normal(size=(2, 7, 9))
    assert sobolev_h1_loss(a, b) == pytest.approx(brute_h1(a, b), abs=1e-13)


def test_sobolev_zero_for_equal(rng):
    a = rng.normal(size=(5, 6))
    val, g = sobolev_h1_loss(a, a, with_grad=True)
    assert val == 0.0 and np.all(g == 0)


def test_sobolev_zero_target_rejected():
    with pytest.raises(OptimError):
        sobolev_h1_loss(np.ones((4, 4)), np.zeros((4, 4)))


@settings(max_examples=30, deadline=None)
@given(u=arrays(np.float64, (5, 6), elements=st.floats(-50, 50)),
       v=arrays(np.float64, (5, 6), elements=st.floats(-50, 50)),
       alpha=st.sampled_from([0.5, 3.0, -2.0, 1e-3, 1e4]))
def test_sobolev_scale_invariant(u, v, alpha):
    if np.sum(v * v) < 1e-6:
        return
    assert sobolev_h1_loss(alpha * u, alpha * v) == pytest.approx(sobolev_h1_loss(u, v), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("K", [0, 1, 2])
def test_sobolev_gradient(rng, K):
    p, t = rng.normal(size=(2, 6, 7))
    _, g = sobolev_h1_loss(p, t, K, with_grad=True)
    eps = 1e-6
    for idx in [(0, 0), (2, 3), (5, 6), (5, 0)]:
        d = np.zeros_like(p)
        d[idx] = eps
        fd = (sobolev_h1_loss(p + d, t, K) - sobolev_h1_loss(p - d, t, K)) / (2 * eps)
        assert g[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_sobolev_batched(rng):
    p, t = rng.normal(size=(2, 3, 5, 5))
    vals = sobolev_h1_loss(p, t)
    assert vals.shape == (3,)
    assert vals[1] == pytest.approx(sobolev_h1_loss(p[1], t[1]))


def test_mse_gradient(rng):
    p, t = rng.normal(size=(2, 4, 4))
    val, g = mse_loss(p, t, with_grad=True)
    assert val == pytest.approx(np.mean((p - t) ** 2))
    np.testing.assert_allclose(g, 2 * (p - t) / p.size)


def _reference_adamw(theta, grads, lr, b1, b2, eps, wd):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        theta = theta - lr * (mh / (np.sqrt(vh) + eps) + wd * theta)
    return theta


def test_adamw_matches_reference(rng):
    theta = rng.normal(size=5)
    grads = [rng.normal(size=5) for _ in range(7)]
    opt = AdamW(lr=0.01, weight_decay=0.1)
    p = {"w": theta.copy()}
    for g in grads:
        opt.step(p, {"w": g})
    np.testing.assert_allclose(p["w"], _reference_adamw(theta, grads, 0.01, 0.9, 0.999, 1e-8, 0.1), atol=1e-14)


def test_adamw_complex_is_per_component(rng):
    z = rng.normal(size=3) + 1j * rng.normal(size=3)
    gs = [rng.normal(size=3) + 1j * rng.normal(size=3) for _ in range(4)]
    opt = AdamW(lr=0.05, weight_decay=0.01)
    p = {"R": z.copy()}
    for g in gs:
        opt.step(p, {"R": g})
    re = _reference_adamw(z.real, [g.real for g in gs], 0.05, 0.9, 0.999, 1e-8, 0.01)
    im = _reference_adamw(z.imag, [g.imag for g in gs], 0.05, 0.9, 0.999, 1e-8, 0.01)
    np.testing.assert_allclose(p["R"], re + 1j * im, atol=1e-14)


def test_adamw_decay_only_shrinks():
    opt = AdamW(lr=0.1, weight_decay=0.5)
    p = {"w": np.array([2.0])}
    opt.step(p, {"w": np.array([0.0])})
    assert p["w"][0] == pytest.approx(2.0 * (1 - 0.05))


def test_adamw_rejects_nonfinite():
    with pytest.raises(OptimError):
        AdamW().step({"w": np.zeros(2)}, {"w": np.array([np.nan, 0.0])})


def test_functional_step_leaves_input():
    p = {"w": np.ones(2)}
    new, state = adamw_step(p, {"w": np.ones(2)})
    assert np.all(p["w"] == 1) and np.all(new["w"] < 1) and state.step_count == 1


def _toy_pairs(rng, S=12, M=8, N=10):
    z = np.linspace(0, 1, M)[:, None]
    r = np.linspace(0.1, 1, N)[None, :]
    inputs = np.empty((S, 4, M, N))
    targets = np.empty((S, M, N))
    for s in range(S):
        a = rng.uniform(0.5, 2.0)
        inputs[s, 0] = a * r + 0 * z
        inputs[s, 1] = a
        inputs[s, 1] += 0.01 * rng.normal(size=(M, N))
        inputs[s, 2] = r + 0 * z
        inputs[s, 3] = z + 0 * r
        targets[s] = 40 + 10 * a * r + 5 * z
    return Pairs(inputs, targets)


def test_training_reduces_loss(rng):
    data = _toy_pairs(rng)
    params, rep = train(Hyperparams(2, 6, 3, 3), TrainConfig(epochs=30, batch_size=4, lr=3e-3), data)
    assert rep.train_loss[-1] < 0.5 * rep.train_loss[0]
    assert len(rep.train_loss) == 30 and rep.best_epoch >= 1


def test_training_is_deterministic(rng):
    data = _toy_pairs(rng)
    cfg = TrainConfig(epochs=3, batch_size=4, seed=5)
    a, _ = train(Hyperparams(1, 4, 2, 2), cfg, data)
    b, _ = train(Hyperparams(1, 4, 2, 2), cfg, data)
    assert all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


def test_best_validation_kept(rng):
    data = _toy_pairs(rng)
    tr, va = data.subset(range(8)), data.subset(range(8, 12))
    p, rep = train(Hyperparams(1, 4, 2, 2), TrainConfig(epochs=6, batch_size=4), tr, va)
    assert rep.val_loss[rep.best_epoch - 1] == min(rep.val_loss)


def test_finetune_zero_epochs_identity(rng):
    data = _toy_pairs(rng)
    p, _ = train(Hyperparams(1, 4, 2, 2), TrainConfig(epochs=1, batch_size=4), data)
    q, _ = finetune(p, TrainConfig(epochs=0), data)
    assert all(np.array_equal(p.tensors[k], q.tensors[k]) for k in p.tensors)


def test_finetune_keeps_stats(rng):
    data = _toy_pairs(rng)
    p, _ = train(Hyperparams(1, 4, 2, 2), TrainConfig(epochs=1, batch_size=4), data)
    q, _ = finetune(p, TrainConfig(epochs=2, batch_size=4), data.subset(range(4)))
    assert q.stats == p.stats


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected(rng):
    data = _toy_pairs(rng)
    init = init_params(Hyperparams(1, 4, 2, 2))
    p, _ = train(Hyperparams(1, 4, 2, 2), TrainConfig(epochs=0), data, init=init)
    p.tensors["proj.w"][:] = 1e300
    with pytest.raises((TrainingDiverged, OptimError)):
        finetune(p, TrainConfig(epochs=2, batch_size=4), data)


def test_split_indices():
    tr, va = split_indices(20, 0.1, 0)
    assert len(va) == 2 and len(tr) == 18
    assert set(tr).isdisjoint(va) and set(tr) | set(va) == set(range(20))
    assert np.array_equal(split_indices(20, 0.1, 0)[1], va)
