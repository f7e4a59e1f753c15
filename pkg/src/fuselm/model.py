"""Fusion LSTM language model and artefact-only feed-forward model.

Forward pass, summed cross-entropy loss, and exact analytic gradients via
backpropagation through time. Artefact vectors are inputs, never
parameters: no gradient flows into them.

Fusion modes:
  early-h0 / early-c0 / early-both  project the artefact into the initial
      LSTM state;
  late-concat / late-add / late-mul combine the artefact with each hidden
      state before the output projection.

For late-concat the output projection is stored as two blocks P (over the
hidden state) and P_artefact (over the artefact); proj = P@h + P_a@a is
the same map as a single concatenated matrix but keeps the zero-artefact
path bitwise identical to the no-fusion model.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .artefacts import NO_CROP, PositionContext
from .errors import ConfigurationError, InputError, NumericError

FUSION_MODES = (
    "none",
    "early-h0",
    "early-c0",
    "early-both",
    "late-concat",
    "late-add",
    "late-mul",
)

_CKPT_MAGIC = b"FLMC"
_CKPT_VERSION = 1


@dataclass(frozen=True)
class LMConfig:
    vocab_size: int
    d_embed: int = 512
    hidden: int = 256
    artefact_dim: int = 768
    mode: str = "none"
    seed: int = 0
    dtype: str = "float32"
    init_scale: float = 0.08

    def __post_init__(self):
        if self.mode not in FUSION_MODES:
            raise ConfigurationError(f"unknown fusion mode {self.mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class StepState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class LMParams:
    config: LMConfig
    E_in: np.ndarray
    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray
    P: np.ndarray
    E_out: np.ndarray
    b_out: np.ndarray
    A_early_h: np.ndarray | None = None
    A_early_c: np.ndarray | None = None
    A_late: np.ndarray | None = None
    P_artefact: np.ndarray | None = None

    _ORDER = ("E_in", "W_x", "W_h", "b", "A_early_h", "A_early_c", "A_late",
              "P", "P_artefact", "E_out", "b_out")

    def tensors(self) -> dict[str, np.ndarray]:
        """Declaration-ordered mapping of the tensors this mode actually uses."""
        out: dict[str, np.ndarray] = {}
        for name in self._ORDER:
            arr = getattr(self, name)
            if arr is not None:
                out[name] = arr
        return out

    def copy(self) -> "LMParams":
        kwargs = {n: (a.copy() if a is not None else None) for n, a in
                  ((n, getattr(self, n)) for n in self._ORDER)}
        return LMParams(config=self.config, **kwargs)


def _name_entropy(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def _seeded_uniform(shape, seed: int, name: str, dtype, scale: float = 0.08) -> np.ndarray:
    """Per-tensor seeded init so tensors shared between modes get equal values."""
    if scale == 0.0:
        return np.zeros(shape, dtype=dtype)
    ss = np.random.SeedSequence((seed, _name_entropy(name)))
    rng = np.random.Generator(np.random.PCG64(ss))
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def init_lm(config: LMConfig) -> LMParams:
    V, d_e, H, D = config.vocab_size, config.d_embed, config.hidden, config.artefact_dim
    dt = config.np_dtype
    seed = config.seed
    mode = config.mode
    sc = config.init_scale

    b = np.zeros(4 * H, dtype=dt)
    if sc > 0:
        b[H:2 * H] = 1.0  # forget-gate bias

    params = LMParams(
        config=config,
        E_in=_seeded_uniform((V, d_e), seed, "E_in", dt, sc),
        W_x=_seeded_uniform((4 * H, d_e), seed, "W_x", dt, sc),
        W_h=_seeded_uniform((4 * H, H), seed, "W_h", dt, sc),
        b=b,
        P=_seeded_uniform((d_e, H), seed, "P", dt, sc),
        E_out=_seeded_uniform((V, d_e), seed, "E_out", dt, sc),
        b_out=np.zeros(V, dtype=dt),
    )
    if mode in ("early-h0", "early-both"):
        params.A_early_h = _seeded_uniform((H, D), seed, "A_early_h", dt, sc)
    if mode in ("early-c0", "early-both"):
        params.A_early_c = _seeded_uniform((H, D), seed, "A_early_c", dt, sc)
    if mode in ("late-add", "late-mul"):
        params.A_late = _seeded_uniform((H, D), seed, "A_late", dt, sc)
    if mode == "late-concat":
        params.P_artefact = _seeded_uniform((d_e, D), seed, "P_artefact", dt, sc)
    return params


def param_count(params) -> int:
    return int(sum(a.size for a in params.tensors().values()))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(params: LMParams, x: np.ndarray, state: StepState) -> StepState:
    """One LSTM cell update with gate packing (i, f, g, o)."""
    H = params.config.hidden
    z = params.W_x @ x + params.W_h @ state.h + params.b
    i = _sigmoid(z[:H])
    f = _sigmoid(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = _sigmoid(z[3 * H:])
    c = f * state.c + i * g
    h = o * np.tanh(c)
    if not (np.isfinite(h).all() and np.isfinite(c).all()):
        raise NumericError("non-finite LSTM state")
    return StepState(h=h, c=c)


def fuse_early(params: LMParams, a: np.ndarray) -> StepState:
    """Initial state from the artefact: h0 and/or c0 per the early mode."""
    cfg = params.config
    if not cfg.mode.startswith("early"):
        raise ConfigurationError(f"fuse_early called for mode {cfg.mode!r}")
    if a.shape != (cfg.artefact_dim,):
        raise ConfigurationError(
            f"artefact shape {a.shape} does not match dimension {cfg.artefact_dim}"
        )
    H = cfg.hidden
    dt = cfg.np_dtype
    h0 = params.A_early_h @ a if params.A_early_h is not None else np.zeros(H, dtype=dt)
    c0 = params.A_early_c @ a if params.A_early_c is not None else np.zeros(H, dtype=dt)
    return StepState(h=np.asarray(h0, dtype=dt), c=np.asarray(c0, dtype=dt))


def fuse_late(params: LMParams, h: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Combine one hidden state with one artefact per the late mode."""
    mode = params.config.mode
    if a.shape != (params.config.artefact_dim,):
        raise ConfigurationError(
            f"artefact shape {a.shape} does not match dimension {params.config.artefact_dim}"
        )
    if mode == "late-concat":
        return np.concatenate([h, a])
    if mode == "late-add":
        return h + params.A_late @ a
    if mode == "late-mul":
        return h * (params.A_late @ a)
    raise ConfigurationError(f"fuse_late called for mode {mode!r}")


def _check_artefacts(params: LMParams, ids: np.ndarray, artefacts: np.ndarray) -> np.ndarray:
    cfg = params.config
    T = len(ids) - 1
    A = np.asarray(artefacts, dtype=cfg.np_dtype)
    if A.shape != (T, cfg.artefact_dim):
        raise InputError(
            f"artefact matrix shape {A.shape} does not match "
            f"({T}, {cfg.artefact_dim})"
        )
    if cfg.mode.startswith("early") and T > 1 and not (A == A[0]).all():
        raise InputError("early fusion needs one shared artefact per sentence")
    return A


@dataclass
class _Cache:
    xs: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    state0: StepState
    A: np.ndarray
    U: np.ndarray | None
    M: np.ndarray | None
    proj: np.ndarray
    logits: np.ndarray
    log_z: np.ndarray


def _forward(params: LMParams, ids: np.ndarray, artefacts: np.ndarray) -> _Cache:
    cfg = params.config
    H = cfg.hidden
    dt = cfg.np_dtype
    A = _check_artefacts(params, ids, artefacts)
    T = len(ids) - 1
    if T < 1:
        raise InputError("a sentence batch needs at least BOS and EOS")

    inputs = ids[:-1]
    xs = params.E_in[inputs]
    zx = xs @ params.W_x.T

    if cfg.mode.startswith("early"):
        state0 = fuse_early(params, A[0])
    else:
        state0 = StepState(h=np.zeros(H, dtype=dt), c=np.zeros(H, dtype=dt))

    i_s = np.empty((T, H), dtype=dt)
    f_s = np.empty((T, H), dtype=dt)
    g_s = np.empty((T, H), dtype=dt)
    o_s = np.empty((T, H), dtype=dt)
    c_s = np.empty((T, H), dtype=dt)
    tc_s = np.empty((T, H), dtype=dt)
    h_s = np.empty((T, H), dtype=dt)
    h_prev = np.empty((T, H), dtype=dt)
    c_prev = np.empty((T, H), dtype=dt)

    h, c = state0.h, state0.c
    for t in range(T):
        h_prev[t] = h
        c_prev[t] = c
        z = zx[t] + params.W_h @ h + params.b
        i = _sigmoid(z[:H])
        f = _sigmoid(z[H:2 * H])
        g = np.tanh(z[2 * H:3 * H])
        o = _sigmoid(z[3 * H:])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_s[t], f_s[t], g_s[t], o_s[t], c_s[t], tc_s[t], h_s[t] = i, f, g, o, c, tc, h

    U = None
    M = None
    mode = cfg.mode
    if mode == "late-concat":
        proj = h_s @ params.P.T + A @ params.P_artefact.T
    elif mode == "late-add":
        U = A @ params.A_late.T
        M = h_s + U
        proj = M @ params.P.T
    elif mode == "late-mul":
        U = A @ params.A_late.T
        M = h_s * U
        proj = M @ params.P.T
    else:
        proj = h_s @ params.P.T

    logits = proj @ params.E_out.T + params.b_out
    if not np.isfinite(logits).all():
        bad = int(np.argwhere(~np.isfinite(logits))[0][0])
        raise NumericError(f"non-finite logits at position {bad}")
    m = logits.max(axis=1)
    log_z = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))

    return _Cache(
        xs=xs, i=i_s, f=f_s, g=g_s, o=o_s, c=c_s, tanh_c=tc_s,
        h=h_s, h_prev=h_prev, c_prev=c_prev, state0=state0, A=A, U=U, M=M,
        proj=proj, logits=logits, log_z=log_z,
    )


def forward_sentence(params: LMParams, ids: np.ndarray, artefacts: np.ndarray) -> np.ndarray:
    """Per-position logits: row t scores the prediction of ids[t+1]."""
    return _forward(params, np.asarray(ids), artefacts).logits


def sentence_nll(params: LMParams, ids: np.ndarray, artefacts: np.ndarray
                 ) -> tuple[float, int, np.ndarray]:
    """Summed NLL, target count, and the per-token NLL vector."""
    ids = np.asarray(ids)
    cache = _forward(params, ids, artefacts)
    targets = ids[1:]
    rows = np.arange(len(targets))
    nlls = cache.log_z - cache.logits[rows, targets]
    return float(nlls.sum()), len(targets), nlls.astype(np.float64)


def loss_and_grads(params: LMParams, ids: np.ndarray, artefacts: np.ndarray
                   ) -> tuple[float, int, dict[str, np.ndarray]]:
    """Summed NLL plus exact gradients for every tensor of this mode."""
    ids = np.asarray(ids)
    cfg = params.config
    H = cfg.hidden
    mode = cfg.mode
    cache = _forward(params, ids, artefacts)
    T = len(ids) - 1
    targets = ids[1:]
    rows = np.arange(T)

    probs = np.exp(cache.logits - cache.log_z[:, None])
    nll = float((cache.log_z - cache.logits[rows, targets]).sum())

    dlogits = probs
    dlogits[rows, targets] -= 1.0

    grads: dict[str, np.ndarray] = {}
    grads["b_out"] = dlogits.sum(axis=0)
    grads["E_out"] = dlogits.T @ cache.proj
    dproj = dlogits @ params.E_out

    if mode == "late-concat":
        grads["P"] = dproj.T @ cache.h
        grads["P_artefact"] = dproj.T @ cache.A
        dH = dproj @ params.P
    elif mode == "late-add":
        grads["P"] = dproj.T @ cache.M
        dM = dproj @ params.P
        grads["A_late"] = dM.T @ cache.A
        dH = dM
    elif mode == "late-mul":
        grads["P"] = dproj.T @ cache.M
        dM = dproj @ params.P
        grads["A_late"] = (dM * cache.h).T @ cache.A
        dH = dM * cache.U
    else:
        grads["P"] = dproj.T @ cache.h
        dH = dproj @ params.P

    dt = cfg.np_dtype
    DZ = np.empty((T, 4 * H), dtype=dt)
    dh_rec = np.zeros(H, dtype=dt)
    dc_rec = np.zeros(H, dtype=dt)
    for t in range(T - 1, -1, -1):
        dh = dH[t] + dh_rec
        i, f, g, o = cache.i[t], cache.f[t], cache.g[t], cache.o[t]
        tc = cache.tanh_c[t]
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_rec
        di = dc * g
        dg = dc * i
        df = dc * cache.c_prev[t]
        dc_rec = dc * f
        dz = DZ[t]
        dz[:H] = di * i * (1.0 - i)
        dz[H:2 * H] = df * f * (1.0 - f)
        dz[2 * H:3 * H] = dg * (1.0 - g * g)
        dz[3 * H:] = do * o * (1.0 - o)
        dh_rec = params.W_h.T @ dz

    grads["W_x"] = DZ.T @ cache.xs
    grads["W_h"] = DZ.T @ cache.h_prev
    grads["b"] = DZ.sum(axis=0)

    dxs = DZ @ params.W_x
    dE_in = np.zeros_like(params.E_in)
    np.add.at(dE_in, ids[:-1], dxs)
    grads["E_in"] = dE_in

    if mode in ("early-h0", "early-both"):
        grads["A_early_h"] = np.outer(dh_rec, cache.A[0])
    if mode in ("early-c0", "early-both"):
        grads["A_early_c"] = np.outer(dc_rec, cache.A[0])

    return nll, T, grads


# --------------------------------------------------------------------------
# Artefact-only feed-forward model

@dataclass(frozen=True)
class FFNConfig:
    vocab_size: int
    artefact_dim: int
    width: int = 768
    seed: int = 0
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class FFNParams:
    """Position-blind predictor: three dense layers with ReLU between,
    then a linear map to the vocabulary."""

    config: FFNConfig
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    _ORDER = ("W1", "b1", "W2", "b2", "W3", "b3", "W_out", "b_out")

    def tensors(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in self._ORDER}

    def copy(self) -> "FFNParams":
        return FFNParams(config=self.config,
                         **{n: getattr(self, n).copy() for n in self._ORDER})


def init_ffn(config: FFNConfig) -> FFNParams:
    V, D, W = config.vocab_size, config.artefact_dim, config.width
    dt = config.np_dtype
    s = config.seed
    return FFNParams(
        config=config,
        W1=_seeded_uniform((W, D), s, "W1", dt),
        b1=np.zeros(W, dtype=dt),
        W2=_seeded_uniform((W, W), s, "W2", dt),
        b2=np.zeros(W, dtype=dt),
        W3=_seeded_uniform((W, W), s, "W3", dt),
        b3=np.zeros(W, dtype=dt),
        W_out=_seeded_uniform((V, W), s, "W_out", dt),
        b_out=np.zeros(V, dtype=dt),
    )


def _ffn_states(ffn: FFNParams, A: np.ndarray):
    h1 = np.maximum(A @ ffn.W1.T + ffn.b1, 0.0)
    h2 = np.maximum(h1 @ ffn.W2.T + ffn.b2, 0.0)
    h3 = h2 @ ffn.W3.T + ffn.b3
    logits = h3 @ ffn.W_out.T + ffn.b_out
    return h1, h2, h3, logits


def ffn_forward(ffn: FFNParams, a: np.ndarray) -> np.ndarray:
    """Logits from the artefact alone; ignorant of sentence position."""
    a = np.asarray(a, dtype=ffn.config.np_dtype)
    if a.shape != (ffn.config.artefact_dim,):
        raise ConfigurationError(
            f"artefact shape {a.shape} does not match dimension {ffn.config.artefact_dim}"
        )
    return _ffn_states(ffn, a[None, :])[3][0]


def ffn_sentence_nll(ffn: FFNParams, ids: np.ndarray, artefacts: np.ndarray
                     ) -> tuple[float, int, np.ndarray]:
    ids = np.asarray(ids)
    A = np.asarray(artefacts, dtype=ffn.config.np_dtype)
    targets = ids[1:]
    logits = _ffn_states(ffn, A)[3]
    if not np.isfinite(logits).all():
        raise NumericError("non-finite FFN logits")
    m = logits.max(axis=1)
    log_z = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    rows = np.arange(len(targets))
    nlls = log_z - logits[rows, targets]
    return float(nlls.sum()), len(targets), nlls.astype(np.float64)


def ffn_loss_and_grads(ffn: FFNParams, ids: np.ndarray, artefacts: np.ndarray
                       ) -> tuple[float, int, dict[str, np.ndarray]]:
    ids = np.asarray(ids)
    A = np.asarray(artefacts, dtype=ffn.config.np_dtype)
    T = len(ids) - 1
    if A.shape != (T, ffn.config.artefact_dim):
        raise InputError(
            f"artefact matrix shape {A.shape} does not match ({T}, {ffn.config.artefact_dim})"
        )
    targets = ids[1:]
    h1, h2, h3, logits = _ffn_states(ffn, A)
    if not np.isfinite(logits).all():
        raise NumericError("non-finite FFN logits")
    m = logits.max(axis=1)
    log_z = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    rows = np.arange(T)
    nll = float((log_z - logits[rows, targets]).sum())

    dlogits = np.exp(logits - log_z[:, None])
    dlogits[rows, targets] -= 1.0

    grads: dict[str, np.ndarray] = {}
    grads["b_out"] = dlogits.sum(axis=0)
    grads["W_out"] = dlogits.T @ h3
    dh3 = dlogits @ ffn.W_out
    grads["b3"] = dh3.sum(axis=0)
    grads["W3"] = dh3.T @ h2
    dh2 = (dh3 @ ffn.W3) * (h2 > 0)
    grads["b2"] = dh2.sum(axis=0)
    grads["W2"] = dh2.T @ h1
    dh1 = (dh2 @ ffn.W2) * (h1 > 0)
    grads["b1"] = dh1.sum(axis=0)
    grads["W1"] = dh1.T @ A
    return nll, T, grads


# --------------------------------------------------------------------------
# Generation

def generate(params: LMParams, vocab, provider, max_len: int,
             rng: np.random.Generator | None = None, strategy: str = "greedy"
             ) -> list[int]:
    """Decode from BOS until EOS or ``max_len`` tokens.

    The provider must be able to serve artefacts for incrementally grown
    prefixes (count-based providers always can; dense stores cannot).
    """
    if strategy not in ("greedy", "sample"):
        raise ConfigurationError(f"unknown strategy {strategy!r}")
    if strategy == "sample" and rng is None:
        raise ConfigurationError("sampling needs an rng")
    cfg = params.config
    out: list[int] = []
    ids = [vocab.bos_id]
    mode = cfg.mode

    def ctx_for(step_ids: list[int]) -> PositionContext:
        arr = np.asarray(step_ids + [vocab.eos_id], dtype=np.int64)
        return PositionContext(ids=arr)

    if mode.startswith("early"):
        a0 = provider.artefact(ctx_for(ids), 1, NO_CROP).values
        state = fuse_early(params, np.asarray(a0, dtype=cfg.np_dtype))
    else:
        state = StepState(h=np.zeros(cfg.hidden, dtype=cfg.np_dtype),
                          c=np.zeros(cfg.hidden, dtype=cfg.np_dtype))

    for _ in range(max_len):
        x = params.E_in[ids[-1]]
        state = lstm_step(params, x, state)
        t = len(ids)  # predicting position t, prefix has t-1 tokens
        if mode.startswith("late"):
            a = np.asarray(provider.artefact(ctx_for(ids), t, NO_CROP).values,
                           dtype=cfg.np_dtype)
        if mode == "late-concat":
            proj = params.P @ state.h + params.P_artefact @ a
        elif mode == "late-add":
            proj = params.P @ (state.h + params.A_late @ a)
        elif mode == "late-mul":
            proj = params.P @ (state.h * (params.A_late @ a))
        else:
            proj = params.P @ state.h
        logits = params.E_out @ proj + params.b_out
        if strategy == "greedy":
            nxt = int(np.argmax(logits))
        else:
            m = logits.max()
            p = np.exp(logits - m)
            p /= p.sum()
            nxt = int(rng.choice(len(p), p=p))
        if nxt == vocab.eos_id:
            break
        out.append(nxt)
        ids.append(nxt)
    return out


# --------------------------------------------------------------------------
# Checkpoints (shared by the LSTM LM and the FFN; Adam state appended)

def _write_blob(fh, obj) -> None:
    raw = json.dumps(obj, sort_keys=True).encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_blob(fh):
    (n,) = struct.unpack("<I", fh.read(4))
    return json.loads(fh.read(n).decode("utf-8"))


def _write_tensors(fh, tensors: dict[str, np.ndarray]) -> None:
    fh.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<I", d))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_tensors(fh) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", fh.read(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", fh.read(2))
        name = fh.read(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", fh.read(1))
        shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(fh.read(size * 4), dtype="<f4").reshape(shape)
        out[name] = arr
    return out


def save_checkpoint(path, params, adam_state=None) -> None:
    """Atomic write (temp file + rename) of params and optional Adam state."""
    from .optim import AdamState  # local import to avoid a cycle

    if isinstance(params, LMParams):
        cfg = params.config
        config_block = {
            "arch": "lstm", "vocab_size": cfg.vocab_size, "d_embed": cfg.d_embed,
            "hidden": cfg.hidden, "artefact_dim": cfg.artefact_dim,
            "mode": cfg.mode, "seed": cfg.seed, "dtype": cfg.dtype,
            "init_scale": cfg.init_scale,
        }
    elif isinstance(params, FFNParams):
        cfg = params.config
        config_block = {
            "arch": "ffn", "vocab_size": cfg.vocab_size,
            "artefact_dim": cfg.artefact_dim, "width": cfg.width,
            "seed": cfg.seed, "dtype": cfg.dtype,
        }
    else:
        raise ConfigurationError(f"cannot checkpoint {type(params).__name__}")

    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        _write_blob(fh, config_block)
        _write_tensors(fh, params.tensors())
        if adam_state is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            _write_blob(fh, {"lr": adam_state.lr, "beta1": adam_state.beta1,
                             "beta2": adam_state.beta2, "eps": adam_state.eps,
                             "t": adam_state.t})
            _write_tensors(fh, {f"m.{k}": v for k, v in adam_state.m.items()})
            _write_tensors(fh, {f"v.{k}": v for k, v in adam_state.v.items()})
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns (params, adam_state_or_None)."""
    from .optim import AdamState

    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _CKPT_VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
        block = _read_blob(fh)
        tensors = _read_tensors(fh)
        if block["arch"] == "lstm":
            cfg = LMConfig(
                vocab_size=block["vocab_size"], d_embed=block["d_embed"],
                hidden=block["hidden"], artefact_dim=block["artefact_dim"],
                mode=block["mode"], seed=block["seed"], dtype=block["dtype"],
                init_scale=block.get("init_scale", 0.08),
            )
            dt = cfg.np_dtype
            kwargs = {n: None for n in LMParams._ORDER}
            for name, arr in tensors.items():
                kwargs[name] = arr.astype(dt)
            params = LMParams(config=cfg, **kwargs)
        else:
            cfg = FFNConfig(
                vocab_size=block["vocab_size"], artefact_dim=block["artefact_dim"],
                width=block["width"], seed=block["seed"], dtype=block["dtype"],
            )
            dt = cfg.np_dtype
            params = FFNParams(config=cfg,
                               **{n: tensors[n].astype(dt) for n in FFNParams._ORDER})
        (has_adam,) = struct.unpack("<B", fh.read(1))
        adam = None
        if has_adam:
            hyper = _read_blob(fh)
            m = {k[2:]: v.astype(params.config.np_dtype)
                 for k, v in _read_tensors(fh).items()}
            v = {k[2:]: v_.astype(params.config.np_dtype)
                 for k, v_ in _read_tensors(fh).items()}
            adam = AdamState(m=m, v=v, t=hyper["t"], lr=hyper["lr"],
                             beta1=hyper["beta1"], beta2=hyper["beta2"],
                             eps=hyper["eps"])
    return params, adam
