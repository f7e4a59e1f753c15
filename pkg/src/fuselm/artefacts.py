"""Artefact vectors: the per-prefix conditioning input of the fusion LM.

Sources: a constant zero vector, bag-of-words / TF-IDF counts over the
(cropped) prefix, or precomputed dense vectors loaded from an ARTF file.
Cropping restricts which part of the sentence the artefact may summarize.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from . import bpe
from .corpus import Corpus, SentenceBatch, completed_word_counts, word_count
from .errors import ConfigurationError, InputError, StoreFormatError, StoreKeyError

KIND_ZERO = "zero"
KIND_BOW = "bow"
KIND_TFIDF = "tfidf"
KIND_DENSE_PREFIX = "dense-prefix"
KIND_DENSE_FULL = "dense-full"
KIND_DENSE_FULL_MASKED = "dense-full-masked"

_STORE_KIND_CODES = {
    KIND_DENSE_PREFIX: 0,
    KIND_DENSE_FULL: 1,
    KIND_DENSE_FULL_MASKED: 2,
}
_STORE_KIND_NAMES = {v: k for k, v in _STORE_KIND_CODES.items()}

_CROP_SIDE_CODES = {"none": 0, "right": 1, "left": 2}
_CROP_SIDE_NAMES = {v: k for k, v in _CROP_SIDE_CODES.items()}

_ARTF_MAGIC = b"ARTF"
_ARTF_VERSION = 1
_HEADER = struct.Struct("<4sI B3x I B H Q")  # magic, version, kind, dim, side, pct_milli, count
_RECORD_KEY = struct.Struct("<QI")


@dataclass(frozen=True)
class Artefact:
    values: np.ndarray
    kind: str


@dataclass(frozen=True)
class CropSpec:
    """Restriction of the artefact's input span, relative to sentence length."""

    side: str = "none"  # none | right | left
    pct: float = 1.0

    def __post_init__(self):
        if self.side not in ("none", "right", "left"):
            raise ConfigurationError(f"unknown crop side {self.side!r}")
        if not 0.0 <= self.pct <= 1.0:
            raise ConfigurationError(f"crop pct {self.pct} outside [0, 1]")

    def is_full(self) -> bool:
        """Equivalent to no cropping at all."""
        return (
            self.side == "none"
            or (self.side == "right" and self.pct == 1.0)
            or (self.side == "left" and self.pct == 0.0)
        )

    def is_empty(self) -> bool:
        """Can never select any tokens (no-fusion boundary)."""
        return (self.side == "right" and self.pct == 0.0) or (
            self.side == "left" and self.pct == 1.0
        )


NO_CROP = CropSpec()


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def crop_range(sentence_len: int, predict_pos: int, spec: CropSpec) -> tuple[int, int] | None:
    """Inclusive 1-indexed token range the artefact may see, or None if empty.

    The prefix of prediction position t is tokens 1..t-1 (t = n+1 predicts
    EOS). A right crop keeps the first round(pct*n) prefix tokens; a left
    crop starts the span at token round(pct*n). Left crop at 100% is
    defined as empty for every t, matching the no-fusion boundary.
    """
    n, t = sentence_len, predict_pos
    if not 1 <= t <= n + 1:
        raise InputError(f"predict_pos {t} outside 1..{n + 1}")
    if t == 1:
        return None
    if spec.side == "none":
        return (1, t - 1)
    cut = _round_half_up(spec.pct * n)
    if spec.side == "right":
        end = min(t - 1, cut)
        return (1, end) if end >= 1 else None
    if spec.pct == 1.0:
        return None
    start = max(1, cut)
    return (start, t - 1) if start <= t - 1 else None


def zero_artefact(dim: int) -> Artefact:
    if dim <= 0:
        raise ConfigurationError(f"artefact dimension must be positive, got {dim}")
    return Artefact(values=np.zeros(dim, dtype=np.float64), kind=KIND_ZERO)


def _normalized(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 0 else vec


def bow_artefact(vocab: bpe.Vocab, prefix_ids) -> Artefact:
    """L2-normalized token counts over the prefix; BOS/EOS excluded."""
    counts = np.zeros(vocab.size, dtype=np.float64)
    for i in prefix_ids:
        i = int(i)
        if i != vocab.bos_id and i != vocab.eos_id:
            counts[i] += 1.0
    return Artefact(values=_normalized(counts), kind=KIND_BOW)


@dataclass(frozen=True)
class IdfTable:
    weights: np.ndarray  # per token id
    doc_count: int


def fit_idf(corpus: Corpus, vocab: bpe.Vocab) -> IdfTable:
    """Smoothed idf over the training sentences: ln((1+N)/(1+df)) + 1.

    Unseen tokens (df=0) automatically get the maximum weight.
    """
    n_docs = len(corpus.sentences)
    df = np.zeros(vocab.size, dtype=np.int64)
    for sentence in corpus.sentences:
        for tok in set(bpe.encode(vocab, sentence)):
            df[tok] += 1
    weights = np.log((1.0 + n_docs) / (1.0 + df.astype(np.float64))) + 1.0
    return IdfTable(weights=weights, doc_count=n_docs)


def tfidf_artefact(idf: IdfTable, vocab: bpe.Vocab, prefix_ids) -> Artefact:
    counts = np.zeros(len(idf.weights), dtype=np.float64)
    for i in prefix_ids:
        i = int(i)
        if i != vocab.bos_id and i != vocab.eos_id:
            counts[i] += 1.0
    return Artefact(values=_normalized(counts * idf.weights), kind=KIND_TFIDF)


# --------------------------------------------------------------------------
# ARTF binary store

@dataclass
class ArtefactStore:
    dim: int
    kind: str
    crop: CropSpec
    records: dict[tuple[int, int], np.ndarray]
    path: str = ""

    def __len__(self) -> int:
        return len(self.records)


def write_store(path, kind: str, dim: int, records, crop: CropSpec = NO_CROP) -> None:
    """Write an ARTF file. ``records`` maps (sentence_idx, prefix_len) to
    a length-``dim`` vector; keys are written in sorted order."""
    if kind not in _STORE_KIND_CODES:
        raise ConfigurationError(f"unknown store kind {kind!r}")
    items = sorted(records.items())
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(
            _ARTF_MAGIC, _ARTF_VERSION, _STORE_KIND_CODES[kind], dim,
            _CROP_SIDE_CODES[crop.side], int(round(crop.pct * 1000)), len(items),
        ))
        for (sidx, plen), vec in items:
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise ConfigurationError(
                    f"record ({sidx},{plen}) has shape {arr.shape}, expected ({dim},)"
                )
            fh.write(_RECORD_KEY.pack(sidx, plen))
            fh.write(arr.tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StoreFormatError(f"truncated store: expected {n} bytes for {what}")
    return data


def load_store(path) -> ArtefactStore:
    """Parse and validate an ARTF file; any violation raises StoreFormatError."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, _HEADER.size, "header")
        magic, version, kind_code, dim, side_code, pct_milli, count = _HEADER.unpack(header)
        if magic != _ARTF_MAGIC:
            raise StoreFormatError(f"bad magic {magic!r}")
        if version != _ARTF_VERSION:
            raise StoreFormatError(f"unsupported version {version}")
        if kind_code not in _STORE_KIND_NAMES:
            raise StoreFormatError(f"unknown artefact kind code {kind_code}")
        if dim == 0:
            raise StoreFormatError("dimension must be positive")
        if side_code not in _CROP_SIDE_NAMES:
            raise StoreFormatError(f"unknown crop side code {side_code}")
        if pct_milli > 1000:
            raise StoreFormatError(f"crop pct_milli {pct_milli} above 1000")
        records: dict[tuple[int, int], np.ndarray] = {}
        prev_key = None
        vec_bytes = dim * 4
        for r in range(count):
            key_raw = _read_exact(fh, _RECORD_KEY.size, f"record {r} key")
            sidx, plen = _RECORD_KEY.unpack(key_raw)
            key = (sidx, plen)
            if prev_key is not None and key <= prev_key:
                raise StoreFormatError(
                    f"records not strictly sorted: {key} after {prev_key}"
                )
            prev_key = key
            vec = np.frombuffer(_read_exact(fh, vec_bytes, f"record {r} values"), dtype="<f4")
            records[key] = vec
        trailing = fh.read(1)
        if trailing:
            raise StoreFormatError("trailing bytes after last record")
    crop = CropSpec(side=_CROP_SIDE_NAMES[side_code], pct=pct_milli / 1000.0)
    return ArtefactStore(
        dim=int(dim), kind=_STORE_KIND_NAMES[kind_code], crop=crop,
        records=records, path=str(path),
    )


def lookup(store: ArtefactStore, sentence_idx: int, prefix_len: int) -> Artefact:
    """Fetch one stored vector. dense-full stores ignore prefix_len."""
    if store.kind == KIND_DENSE_FULL:
        prefix_len = 0
    key = (sentence_idx, prefix_len)
    vec = store.records.get(key)
    if vec is None:
        raise StoreKeyError(
            f"store {store.path or '<memory>'} has no record for "
            f"(sentence_idx={sentence_idx}, prefix_len={prefix_len})"
        )
    return Artefact(values=vec, kind=store.kind)


# --------------------------------------------------------------------------
# Providers

@dataclass(frozen=True)
class PositionContext:
    """Everything a provider needs to serve one sentence's positions."""

    ids: np.ndarray
    sentence_idx: int | None = None
    completed_words: np.ndarray | None = None
    n_words: int = 0

    @property
    def n_subwords(self) -> int:
        return len(self.ids) - 2

    @property
    def n_examples(self) -> int:
        return len(self.ids) - 1


def make_context(batch: SentenceBatch, vocab: bpe.Vocab | None = None) -> PositionContext:
    """Precompute word-coordinate info when a vocab is given (store providers)."""
    if vocab is None:
        return PositionContext(ids=batch.ids, sentence_idx=batch.sentence_idx)
    return PositionContext(
        ids=batch.ids,
        sentence_idx=batch.sentence_idx,
        completed_words=completed_word_counts(vocab, batch.ids),
        n_words=word_count(vocab, batch.ids),
    )


class ZeroArtefacts:
    """The no-fusion baseline: a constant zero vector of fixed dimension."""

    kind = KIND_ZERO

    def __init__(self, dim: int):
        if dim <= 0:
            raise ConfigurationError(f"artefact dimension must be positive, got {dim}")
        self.dim = dim

    def needs_vocab_context(self) -> bool:
        return False

    def artefact(self, ctx: PositionContext, t: int, crop: CropSpec = NO_CROP) -> Artefact:
        crop_range(ctx.n_subwords, t, crop)  # validates t
        return zero_artefact(self.dim)


class _CountProvider:
    """Shared crop handling for the count-based providers."""

    def needs_vocab_context(self) -> bool:
        return False

    def artefact(self, ctx: PositionContext, t: int, crop: CropSpec = NO_CROP) -> Artefact:
        span = crop_range(ctx.n_subwords, t, crop)
        if span is None:
            return zero_artefact(self.dim)
        start, end = span
        prefix = ctx.ids[start:end + 1]  # ids[0] is BOS, token k is ids[k]
        return self._from_prefix(prefix)

    def _from_prefix(self, prefix) -> Artefact:
        raise NotImplementedError


class BagOfWords(_CountProvider):
    kind = KIND_BOW

    def __init__(self, vocab: bpe.Vocab):
        self.vocab = vocab
        self.dim = vocab.size

    def _from_prefix(self, prefix) -> Artefact:
        return bow_artefact(self.vocab, prefix)


class TfIdf(_CountProvider):
    kind = KIND_TFIDF

    def __init__(self, vocab: bpe.Vocab, idf: IdfTable):
        self.vocab = vocab
        self.idf = idf
        self.dim = vocab.size

    def _from_prefix(self, prefix) -> Artefact:
        return tfidf_artefact(self.idf, self.vocab, prefix)


class StoreArtefacts:
    """Serves precomputed dense vectors keyed by word-level prefix length."""

    def __init__(self, store: ArtefactStore, vocab: bpe.Vocab):
        self.store = store
        self.vocab = vocab
        self.dim = store.dim
        self.kind = store.kind

    def needs_vocab_context(self) -> bool:
        return True

    def _check_crop(self, crop: CropSpec) -> None:
        if crop.is_empty():
            return  # never triggers a lookup
        if self.kind in (KIND_DENSE_FULL, KIND_DENSE_FULL_MASKED):
            if not crop.is_full():
                raise ConfigurationError(
                    f"crop {crop.side}:{crop.pct} undefined for {self.kind} stores"
                )
            return
        stored = self.store.crop
        if crop.is_full() and stored.is_full():
            return
        if (crop.side, crop.pct) != (stored.side, stored.pct):
            raise ConfigurationError(
                f"store {self.store.path or '<memory>'} was exported for crop "
                f"{stored.side}:{stored.pct}, not {crop.side}:{crop.pct}"
            )

    def artefact(self, ctx: PositionContext, t: int, crop: CropSpec = NO_CROP) -> Artefact:
        if ctx.sentence_idx is None or ctx.completed_words is None:
            raise StoreKeyError(
                "dense store lookups need an indexed sentence context "
                "(sentence_idx and word counts)"
            )
        self._check_crop(crop)
        crop_range(ctx.n_subwords, t, crop)  # validates t
        completed = int(ctx.completed_words[t - 1])
        if self.kind == KIND_DENSE_FULL:
            return lookup(self.store, ctx.sentence_idx, 0)
        if self.kind == KIND_DENSE_FULL_MASKED:
            return lookup(self.store, ctx.sentence_idx, completed)
        span = _word_crop_span(ctx.n_words, completed, crop)
        if span is None:
            return zero_artefact(self.dim)
        return lookup(self.store, ctx.sentence_idx, span[1])


def _word_crop_span(n_words: int, completed: int, crop: CropSpec) -> tuple[int, int] | None:
    """Cropped word span of a prefix of ``completed`` whole words."""
    if completed <= 0:
        return None
    if crop.side == "none":
        return (1, completed)
    cut = _round_half_up(crop.pct * n_words)
    if crop.side == "right":
        end = min(completed, cut)
        return (1, end) if end >= 1 else None
    if crop.pct == 1.0:
        return None
    start = max(1, cut)
    return (start, completed) if start <= completed else None


def artefact_matrix(provider, ctx: PositionContext, crop: CropSpec, mode: str,
                    dtype=np.float64) -> np.ndarray:
    """Stack the per-position artefacts of one sentence into (n_examples, D).

    Early-fusion modes use one shared artefact: the one served at the
    first prediction position (empty prefix, or the per-sentence vector
    for full-sentence store kinds).
    """
    n = ctx.n_examples
    out = np.empty((n, provider.dim), dtype=dtype)
    if mode.startswith("early"):
        first = provider.artefact(ctx, 1, crop).values
        out[:] = first
        return out
    for t in range(1, n + 1):
        out[t - 1] = provider.artefact(ctx, t, crop).values
    return out


def apply_dropout(values: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Zero the artefact(s) with probability p (one draw for the whole array)."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"dropout probability {p} outside [0, 1]")
    if p == 0.0:
        return values
    if p == 1.0 or rng.random() < p:
        return np.zeros_like(values)
    return values


def sentence_dropout_rng(seed: int, epoch: int, sentence_idx: int,
                         stream: int = 0) -> np.random.Generator:
    """Reproducible per-sentence RNG, independent of iteration order.

    ``stream`` separates the training draws (0) from dev-time draws (1).
    """
    ss = np.random.SeedSequence((seed, epoch, sentence_idx, stream))
    return np.random.Generator(np.random.PCG64(ss))
