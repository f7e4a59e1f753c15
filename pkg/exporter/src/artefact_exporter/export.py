"""Turn a sentence corpus into an ARTF store of encoder representations.

Prefix granularity is word-level (space-delimited source words): the
autoregressive consumer maps its prediction position to the number of
completed source words, which is the only coordinate the two tokenizers
share. prefix_len 0 encodes the empty string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .artf import write_artf
from .encoders import EncoderError, build_encoder

KINDS = ("dense-prefix", "dense-full", "dense-full-masked")


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class ExportSpec:
    encoder: str
    pooling: str = "cls"          # cls | mean
    kind: str = "dense-prefix"
    crop_side: str = "none"       # none | right | left
    crop_pct: float = 1.0
    corpus_path: str = ""
    output_path: str = ""
    batch_size: int = 32

    def __post_init__(self):
        if self.pooling not in ("cls", "mean"):
            raise ExportError(f"pooling must be cls or mean, got {self.pooling!r}")
        if self.kind not in KINDS:
            raise ExportError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.crop_side not in ("none", "right", "left"):
            raise ExportError(f"unknown crop side {self.crop_side!r}")
        if not 0.0 <= self.crop_pct <= 1.0:
            raise ExportError(f"crop pct {self.crop_pct} outside [0, 1]")
        if self.kind != "dense-prefix" and self.crop_side != "none":
            raise ExportError(f"cropping applies only to dense-prefix stores")


def load_sentences(path) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ExportError(f"cannot read corpus {path}: {exc}") from exc
    return [line.rstrip("\r") for line in raw.split("\n") if line.rstrip("\r")]


def _cropped_span_text(words: list[str], prefix_len: int, side: str,
                       pct: float) -> str:
    """Text of the cropped span whose end is word ``prefix_len``."""
    if prefix_len <= 0:
        return ""
    n = len(words)
    cut = math.floor(pct * n + 0.5)
    if side == "right":
        end = min(prefix_len, cut)
        return " ".join(words[:end]) if end >= 1 else ""
    if side == "left":
        if pct == 1.0:
            return ""
        start = max(1, cut)
        return " ".join(words[start - 1:prefix_len]) if start <= prefix_len else ""
    return " ".join(words[:prefix_len])


def _plan(spec: ExportSpec, sentences: list[str], mask_token: str):
    """Yield ((sentence_idx, prefix_len), text_to_encode) pairs."""
    for sidx, sentence in enumerate(sentences):
        words = [w for w in sentence.split(" ") if w]
        n = len(words)
        if spec.kind == "dense-full":
            yield (sidx, 0), sentence
        elif spec.kind == "dense-full-masked":
            # one record per word position with that word masked; the key
            # n (the EOS prediction position) carries the unmasked sentence
            for pos in range(n):
                masked = words.copy()
                masked[pos] = mask_token
                yield (sidx, pos), " ".join(masked)
            yield (sidx, n), sentence
        else:
            for plen in range(n + 1):
                yield (sidx, plen), _cropped_span_text(
                    words, plen, spec.crop_side, spec.crop_pct)


def export(spec: ExportSpec) -> int:
    """Encode the corpus as described by ``spec`` and write the ARTF
    file. Returns the record count."""
    sentences = load_sentences(spec.corpus_path)
    try:
        encoder = build_encoder(spec.encoder)
    except EncoderError as exc:
        raise ExportError(str(exc)) from exc
    if hasattr(encoder, "batch_size"):
        encoder.batch_size = spec.batch_size
    keys, texts = [], []
    for key, text in _plan(spec, sentences, encoder.mask_token):
        keys.append(key)
        texts.append(text)
    try:
        vectors = encoder.encode_batch(texts, spec.pooling)
    except EncoderError as exc:
        raise ExportError(str(exc)) from exc
    records = {key: vectors[i] for i, key in enumerate(keys)}
    return write_artf(spec.output_path, spec.kind, encoder.dim, records,
                      crop_side=spec.crop_side, crop_pct=spec.crop_pct)


def expected_record_count(kind: str, sentences: list[str]) -> int:
    lengths = [len([w for w in s.split(" ") if w]) for s in sentences]
    if kind == "dense-full":
        return len(sentences)
    return sum(n + 1 for n in lengths)
