import numpy as np
import pytest

from fuselm.errors import ConfigurationError
from fuselm.optim import AdamState, adam_step, clip_by_global_norm, init_adam


class _Scalar:
    """Minimal trainable object: one named scalar tensor."""

    def __init__(self, value):
        self.theta = np.array([value], dtype=np.float64)

    def tensors(self):
        return {"theta": self.theta}


def test_zero_gradient_leaves_params_unchanged():
    p = _Scalar(1.25)
    state = init_adam(p, lr=0.1)
    adam_step(p, {"theta": np.zeros(1)}, state)
    assert p.theta[0] == 1.25
    assert state.t == 1


def test_hand_computed_first_step():
    p = _Scalar(1.0)
    state = init_adam(p, lr=0.001)
    adam_step(p, {"theta": np.array([0.5])}, state)
    # m-hat = 0.5, v-hat = 0.25, step = lr * 0.5 / (0.5 + 1e-8)
    expected = 1.0 - 0.001 * 0.5 / (np.sqrt(0.25) + 1e-8)
    assert p.theta[0] == pytest.approx(expected, rel=1e-12)
    assert p.theta[0] == pytest.approx(0.999, abs=1e-6)


def test_repeated_identical_gradients_shrink_steps():
    p = _Scalar(1.0)
    state = init_adam(p, lr=0.001)
    adam_step(p, {"theta": np.array([0.5])}, state)
    d1 = 1.0 - p.theta[0]
    before = p.theta[0]
    adam_step(p, {"theta": np.array([0.5])}, state)
    d2 = before - p.theta[0]
    assert abs(d2) <= abs(d1) * (1 + 1e-6)


def test_update_opposes_gradient_sign():
    for g in (0.3, -0.7):
        p = _Scalar(0.0)
        state = init_adam(p, lr=0.01)
        adam_step(p, {"theta": np.array([g])}, state)
        assert np.sign(p.theta[0]) == -np.sign(g)


def test_lr_zero_is_identity_bitwise():
    rng = np.random.default_rng(0)
    p = _Scalar(0.123456789)
    state = init_adam(p, lr=0.0)
    for _ in range(5):
        adam_step(p, {"theta": rng.normal(size=1)}, state)
    assert p.theta[0] == 0.123456789


def test_determinism():
    runs = []
    for _ in range(2):
        p = _Scalar(1.0)
        state = init_adam(p, lr=0.05)
        rng = np.random.default_rng(9)
        for _ in range(20):
            adam_step(p, {"theta": rng.normal(size=1)}, state)
        runs.append(p.theta[0])
    assert runs[0] == runs[1]


def test_shape_mismatch_rejected():
    p = _Scalar(1.0)
    state = init_adam(p)
    with pytest.raises(ConfigurationError):
        adam_step(p, {"theta": np.zeros(2)}, state)
    with pytest.raises(ConfigurationError):
        adam_step(p, {"other": np.zeros(1)}, state)


def test_second_moment_nonnegative_and_t_increments():
    p = _Scalar(1.0)
    state = init_adam(p, lr=0.01)
    rng = np.random.default_rng(4)
    for k in range(10):
        adam_step(p, {"theta": rng.normal(size=1)}, state)
        assert state.t == k + 1
        assert (state.v["theta"] >= 0).all()


def test_clip_by_global_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
    norm = clip_by_global_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    total = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    assert total == pytest.approx(1.0)
    # under the cap nothing changes
    grads = {"a": np.array([0.3])}
    clip_by_global_norm(grads, 1.0)
    assert grads["a"][0] == 0.3
