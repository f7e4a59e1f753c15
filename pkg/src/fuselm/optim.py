"""Adam with bias correction, operating on named tensor dicts in place."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, lr: float = 1e-6, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    tensors = params.tensors()
    return AdamState(
        m={k: np.zeros_like(a) for k, a in tensors.items()},
        v={k: np.zeros_like(a) for k, a in tensors.items()},
        t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = total ** 0.5
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params, grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One update: m, v moments, bias correction, then the parameter step."""
    tensors = params.tensors()
    if set(grads) != set(tensors):
        missing = set(tensors) ^ set(grads)
        raise ConfigurationError(f"gradient/parameter name mismatch: {sorted(missing)}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, theta in tensors.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ConfigurationError(
                f"gradient shape {g.shape} does not match parameter "
                f"{name} shape {theta.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
