"""Training orchestration: epochs, artefact dropout schedules, dev
evaluation, metrics emission, and atomic checkpointing."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from . import bpe
from .artefacts import (NO_CROP, CropSpec, apply_dropout, artefact_matrix,
                        make_context, sentence_dropout_rng)
from .corpus import Corpus, encode_corpus
from .errors import ConfigurationError, NumericError
from .model import (FFNParams, LMParams, ffn_loss_and_grads, ffn_sentence_nll,
                    loss_and_grads, param_count, save_checkpoint, sentence_nll)
from .optim import AdamState, adam_step, clip_by_global_norm, init_adam

log = logging.getLogger(__name__)

Schedule = tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    seed: int = 0
    lr: float = 1e-6
    crop: CropSpec = NO_CROP
    dropout_schedule: Schedule = ((0, 0.0),)
    eval_every: int = 1
    dev_dropout_policy: str = "none"  # none | schedule
    clip_norm: float | None = None
    checkpoint_path: str | None = None
    metrics_path: str | None = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.dev_dropout_policy not in ("none", "schedule"):
            raise ConfigurationError(
                f"dev_dropout_policy must be 'none' or 'schedule', "
                f"got {self.dev_dropout_policy!r}"
            )
        starts = [e for e, _ in self.dropout_schedule]
        if starts != sorted(set(starts)) or (starts and starts[0] != 0):
            raise ConfigurationError(
                "dropout schedule epochs must be strictly increasing and start at 0"
            )
        for _, p in self.dropout_schedule:
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"dropout probability {p} outside [0, 1]")


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    split: str
    nll: float
    ppl: float
    dropout_p: float
    seconds: float

    def to_json(self) -> str:
        return json.dumps({
            "epoch": self.epoch, "split": self.split, "nll": self.nll,
            "ppl": self.ppl, "dropout_p": self.dropout_p, "seconds": self.seconds,
        })


def wean_schedule(schedule: Schedule, epoch: int) -> float:
    """Step function: the dropout probability in effect at ``epoch``."""
    if epoch < 0:
        raise ConfigurationError("epoch must be non-negative")
    p = 0.0
    for start, value in schedule:
        if epoch >= start:
            p = value
        else:
            break
    return p


def wean_off_schedule(period: int = 15) -> Schedule:
    """Dropout grows 0 -> 100% in steps of 25 every ``period`` epochs."""
    return tuple((k * period, k * 0.25) for k in range(5))


def reverse_wean_schedule(period: int = 15) -> Schedule:
    """The mirrored schedule: full dropout first, none at the end."""
    return tuple((k * period, 1.0 - k * 0.25) for k in range(5))


def _loss_fn(params):
    if isinstance(params, FFNParams):
        return ffn_loss_and_grads
    if isinstance(params, LMParams):
        return loss_and_grads
    raise ConfigurationError(f"cannot train {type(params).__name__}")


def _nll_fn(params):
    return ffn_sentence_nll if isinstance(params, FFNParams) else sentence_nll


def _mode(params) -> str:
    return "none" if isinstance(params, FFNParams) else params.config.mode


def _contexts(corpus: Corpus, vocab: bpe.Vocab, provider):
    v = vocab if provider.needs_vocab_context() else None
    return [make_context(b, v) for b in encode_corpus(corpus, vocab)]


def _dev_nll(params, contexts, provider, crop, p_dev: float, seed: int,
             epoch: int) -> tuple[float, int]:
    nll_fn = _nll_fn(params)
    mode = _mode(params)
    dt = params.config.np_dtype
    total, count = 0.0, 0
    for ctx in contexts:
        A = artefact_matrix(provider, ctx, crop, mode, dtype=dt)
        if p_dev > 0.0:
            rng = sentence_dropout_rng(seed, epoch, ctx.sentence_idx, stream=1)
            A = apply_dropout(A, p_dev, rng)
        nll, n, _ = nll_fn(params, ctx.ids, A)
        total += nll
        count += n
    return total, count


class _MetricsWriter:
    def __init__(self, path):
        self.path = path
        self.records: list[MetricsRecord] = []
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def emit(self, record: MetricsRecord) -> None:
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def train(config: TrainConfig, params, corpus: Corpus, vocab: bpe.Vocab, provider,
          dev_corpus: Corpus | None = None, dev_provider=None,
          start_epoch: int = 0, adam: AdamState | None = None
          ) -> tuple[object, AdamState, list[MetricsRecord]]:
    """Run the per-sentence training loop.

    One parameter update per sentence with the summed sentence NLL.
    Returns the trained params, the Adam state, and all metrics records.
    Training can resume bitwise from (params, adam, start_epoch) because
    all randomness is keyed on (seed, epoch, sentence_idx).
    """
    if len(corpus) == 0:
        raise ConfigurationError("refusing to train on an empty corpus")
    loss_fn = _loss_fn(params)
    mode = _mode(params)
    dt = params.config.np_dtype
    if adam is None:
        adam = init_adam(params, lr=config.lr)
    contexts = _contexts(corpus, vocab, provider)
    dev_contexts = None
    if dev_corpus is not None:
        dev_contexts = _contexts(dev_corpus, vocab, dev_provider or provider)

    log.info("training %s: %d parameters, %d sentences, %d epochs",
             type(params).__name__, param_count(params), len(contexts), config.epochs)

    writer = _MetricsWriter(config.metrics_path)
    try:
        for epoch in range(start_epoch, config.epochs):
            p = wean_schedule(config.dropout_schedule, epoch)
            t0 = time.perf_counter()
            rng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((config.seed, epoch))))
            total_nll, total_count = 0.0, 0
            for idx in rng.permutation(len(contexts)):
                ctx = contexts[idx]
                A = artefact_matrix(provider, ctx, config.crop, mode, dtype=dt)
                if p > 0.0:
                    drop_rng = sentence_dropout_rng(config.seed, epoch, ctx.sentence_idx)
                    A = apply_dropout(A, p, drop_rng)
                try:
                    nll, count, grads = loss_fn(params, ctx.ids, A)
                except NumericError as exc:
                    raise NumericError(
                        f"epoch {epoch}, sentence {ctx.sentence_idx}: {exc}") from exc
                if not math.isfinite(nll):
                    raise NumericError(
                        f"epoch {epoch}, sentence {ctx.sentence_idx}: non-finite loss")
                if config.clip_norm is not None:
                    clip_by_global_norm(grads, config.clip_norm)
                adam_step(params, grads, adam)
                total_nll += nll
                total_count += count
            mean = total_nll / total_count
            writer.emit(MetricsRecord(
                epoch=epoch, split=corpus.split, nll=mean, ppl=math.exp(mean),
                dropout_p=p, seconds=time.perf_counter() - t0,
            ))

            is_eval_epoch = ((epoch + 1) % config.eval_every == 0
                             or epoch == config.epochs - 1)
            if dev_contexts is not None and is_eval_epoch:
                t1 = time.perf_counter()
                p_dev = p if config.dev_dropout_policy == "schedule" else 0.0
                dtotal, dcount = _dev_nll(
                    params, dev_contexts, dev_provider or provider,
                    config.crop, p_dev, config.seed, epoch)
                dmean = dtotal / dcount
                writer.emit(MetricsRecord(
                    epoch=epoch, split=dev_corpus.split, nll=dmean,
                    ppl=math.exp(dmean), dropout_p=p_dev,
                    seconds=time.perf_counter() - t1,
                ))
    finally:
        writer.close()

    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, params, adam)
    return params, adam, writer.records
