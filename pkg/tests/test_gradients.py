"""Analytic gradients vs central finite differences on tiny models.

The finite-difference oracle is only valid away from ReLU kinks, so the
FFN check asserts its preactivations keep clear of zero first.
"""

import numpy as np
import pytest

from fuselm.model import (FFNConfig, FUSION_MODES, LMConfig, _ffn_states,
                          ffn_loss_and_grads, init_ffn, init_lm, loss_and_grads)

STEP = 1e-4
TOL = 1e-4


def max_rel_error(params, loss_fn, ids, A, step=STEP):
    _, _, grads = loss_fn(params, ids, A)
    worst = 0.0
    for name, arr in params.tensors().items():
        g = grads[name]
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            lp, _, _ = loss_fn(params, ids, A)
            arr[idx] = orig - step
            lm, _, _ = loss_fn(params, ids, A)
            arr[idx] = orig
            fd = (lp - lm) / (2 * step)
            denom = max(1e-6, abs(fd), abs(g[idx]))
            worst = max(worst, abs(fd - g[idx]) / denom)
    return worst


def toy_inputs(mode, T=5, D=3, seed=0):
    rng = np.random.default_rng(seed)
    ids = np.array([0, 3, 5, 4, 6, 2, 1])[:T + 1]
    ids = np.concatenate([ids[:-1], [1]])
    if mode.startswith("early"):
        A = np.tile(rng.normal(size=D), (len(ids) - 1, 1))
    else:
        A = rng.normal(size=(len(ids) - 1, D))
    return ids, A


@pytest.mark.parametrize("mode", FUSION_MODES)
def test_lm_gradients_match_finite_differences(mode):
    cfg = LMConfig(vocab_size=7, d_embed=5, hidden=4, artefact_dim=3,
                   mode=mode, seed=1, dtype="float64")
    params = init_lm(cfg)
    ids, A = toy_inputs(mode)
    assert max_rel_error(params, loss_and_grads, ids, A) < TOL


def test_lm_gradients_short_sentence():
    cfg = LMConfig(vocab_size=7, d_embed=5, hidden=4, artefact_dim=3,
                   mode="late-concat", seed=2, dtype="float64")
    params = init_lm(cfg)
    ids = np.array([0, 1])  # BOS -> EOS only
    A = np.random.default_rng(1).normal(size=(1, 3))
    assert max_rel_error(params, loss_and_grads, ids, A) < TOL


def _kink_distance(ffn, A):
    h1p = A @ ffn.W1.T + ffn.b1
    h1 = np.maximum(h1p, 0)
    h2p = h1 @ ffn.W2.T + ffn.b2
    return min(np.abs(h1p).min(), np.abs(h2p).min())


def test_ffn_gradients_match_finite_differences():
    cfg = FFNConfig(vocab_size=7, artefact_dim=3, width=6, seed=2,
                    dtype="float64")
    ffn = init_ffn(cfg)
    # push units firmly on or off so both ReLU branches are exercised
    # and every preactivation stays outside the finite-difference window
    signs = np.where(np.arange(cfg.width) % 2 == 0, 0.5, -0.5)
    ffn.b1[:] = signs
    ffn.b2[:] = -signs
    ids = np.array([0, 3, 5, 4, 6, 1])
    A = np.random.default_rng(3).normal(size=(5, 3))
    assert _kink_distance(ffn, A) > 20 * STEP
    assert max_rel_error(ffn, ffn_loss_and_grads, ids, A) < TOL
