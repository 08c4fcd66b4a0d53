"""Q-function tests: forward/backward, optimizer pieces, checkpoints."""

import numpy as np
import pytest

from bnbrl.codec import HistogramCodec
from bnbrl.features import NUM_FEATURES
from bnbrl.qfunc import (
    Adam,
    LOSS_HL_GAUSS_CE,
    LOSS_MSE,
    QFunction,
    TrainingError,
    clip_gradient,
    load_checkpoint,
    loss_and_gradient,
    save_checkpoint,
    soft_update,
)

CODEC = HistogramCodec()


def test_forward_deterministic_and_param_count_fixed():
    q = QFunction("mlp", NUM_FEATURES, CODEC, seed=3)
    x = np.random.default_rng(0).normal(size=(5, NUM_FEATURES))
    assert np.array_equal(q.logits(x), q.logits(x))
    n = q.num_params
    assert n == (12 * 64 + 64) + (64 * 64 + 64) + (64 * 18 + 18)
    q2 = QFunction("linear", NUM_FEATURES, None, seed=3)
    assert q2.num_params == 12 + 1


def test_theta_round_trip():
    q = QFunction("mlp", NUM_FEATURES, CODEC, seed=5)
    theta = q.get_theta()
    q.set_theta(theta * 2.0)
    assert np.array_equal(q.get_theta(), theta * 2.0)
    with pytest.raises(ValueError):
        q.set_theta(theta[:-1])


def test_head_init_gives_small_sane_values():
    q = QFunction("mlp", NUM_FEATURES, CODEC, seed=0)
    x = np.random.default_rng(1).normal(size=(8, NUM_FEATURES))
    vals = q.values(x)
    assert (vals < 0).all()
    assert (np.abs(vals) < 64).all()  # near the -4 init, not the -46341 tail


def test_gradient_against_finite_differences():
    """Central differences at 1e-5, ten random points, both losses and both
    approximator kinds; max relative error at most 1e-4."""
    rng = np.random.default_rng(7)
    for kind in ("linear", "mlp"):
        for loss in (LOSS_MSE, LOSS_HL_GAUSS_CE):
            q = QFunction(kind, NUM_FEATURES,
                          CODEC if loss == LOSS_HL_GAUSS_CE else None, seed=7,
                          head_init_value=None)
            worst = 0.0
            for _ in range(10):
                theta = rng.normal(scale=0.1, size=q.num_params)
                q.set_theta(theta)
                x = rng.normal(size=(3, NUM_FEATURES))
                y = -np.abs(rng.normal(size=3)) * 30 - 2
                w = rng.uniform(0.5, 1.0, size=3)
                _, grad = loss_and_gradient(q, x, y, w, loss)
                for i in rng.choice(q.num_params, size=min(25, q.num_params), replace=False):
                    h = 1e-5
                    tp = theta.copy(); tp[i] += h
                    q.set_theta(tp)
                    lp, _ = loss_and_gradient(q, x, y, w, loss)
                    tm = theta.copy(); tm[i] -= h
                    q.set_theta(tm)
                    lm, _ = loss_and_gradient(q, x, y, w, loss)
                    fd = (lp - lm) / (2 * h)
                    worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
                q.set_theta(theta)
            assert worst <= 1e-4, f"{kind}/{loss}: {worst}"


def test_ce_loss_minimum_at_matching_distribution():
    from bnbrl.codec import encode

    q = QFunction("linear", NUM_FEATURES, CODEC, seed=2)
    x = np.zeros((1, NUM_FEATURES))
    target = -20.0
    dist = encode(CODEC, target)
    # force logits to log target distribution via the bias
    q.weights[-1][...] = 0.0
    q.biases[-1][...] = np.log(dist + 1e-300)
    loss, grad = loss_and_gradient(q, x, np.array([target]), np.ones(1), LOSS_HL_GAUSS_CE)
    entropy = -float(np.sum(dist * np.log(dist + 1e-300)))
    assert loss == pytest.approx(entropy, abs=1e-9)
    assert np.abs(grad).max() <= 1e-9


def test_mse_zero_at_perfect_prediction():
    q = QFunction("linear", NUM_FEATURES, None, seed=2)
    x = np.zeros((2, NUM_FEATURES))
    q.weights[-1][...] = 0.0
    q.biases[-1][...] = -7.0
    loss, grad = loss_and_gradient(q, x, np.array([-7.0, -7.0]), np.ones(2), LOSS_MSE)
    assert loss == 0.0
    assert np.abs(grad).max() == 0.0


def test_nonfinite_forward_raises_training_error():
    q = QFunction("linear", NUM_FEATURES, None, seed=2)
    q.biases[-1][...] = np.inf
    with pytest.raises(TrainingError):
        loss_and_gradient(q, np.zeros((1, NUM_FEATURES)), np.array([-1.0]),
                          np.ones(1), LOSS_MSE)


def test_adam_and_clip():
    adam = Adam(3, lr=0.1)
    theta = np.zeros(3)
    g = np.array([1.0, -1.0, 0.5])
    theta2 = adam.step(theta, g)
    assert theta2[0] < 0 and theta2[1] > 0
    big = np.full(4, 100.0)
    clipped = clip_gradient(big, max_norm=10.0)
    assert np.linalg.norm(clipped) == pytest.approx(10.0)
    small = np.full(4, 0.1)
    assert np.array_equal(clip_gradient(small, 10.0), small)


def test_soft_update_exact_shrink_factor():
    online = QFunction("mlp", NUM_FEATURES, CODEC, seed=1)
    target = QFunction("mlp", NUM_FEATURES, CODEC, seed=9)
    tau = 1e-4
    before = np.linalg.norm(target.get_theta() - online.get_theta())
    soft_update(target, online, tau)
    after = np.linalg.norm(target.get_theta() - online.get_theta())
    assert after == pytest.approx((1 - tau) * before, rel=1e-12)


def test_checkpoint_round_trip(tmp_path):
    q = QFunction("mlp", NUM_FEATURES, CODEC, seed=4)
    path = tmp_path / "agent.qfn"
    save_checkpoint(str(path), q, {"preset": "x"}, step=123)
    data = path.read_bytes()
    assert data[:8] == b"BBMDPQFN"
    q2, meta = load_checkpoint(str(path))
    assert meta["step"] == 123
    assert np.array_equal(q2.get_theta(), q.get_theta())
    x = np.random.default_rng(0).normal(size=(3, NUM_FEATURES))
    assert np.array_equal(q2.values(x), q.values(x))


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.qfn"
    path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
    with pytest.raises(ValueError):
        load_checkpoint(str(path))
