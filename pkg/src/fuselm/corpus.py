"""Sentence corpora: loading, splits, and per-sentence training batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import bpe
from .errors import CorpusError


@dataclass(frozen=True)
class Corpus:
    name: str
    sentences: tuple[str, ...]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class SentenceBatch:
    """One sentence as a batch: BOS + subwords + EOS.

    A batch of k ids yields k-1 prediction examples (every next-token
    target including EOS).
    """

    sentence_idx: int
    ids: np.ndarray

    @property
    def n_examples(self) -> int:
        return len(self.ids) - 1


def load_corpus(path, limit: int | None = None, name: str = "custom",
                split: str = "train") -> Corpus:
    """Read a one-sentence-per-line UTF-8 file, dropping empty lines.

    ``limit`` keeps only the first ``limit`` non-empty lines (data
    trimming for the limited-data sweeps).
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise CorpusError(f"corpus {path} is not valid UTF-8: {exc}") from exc
    sentences: list[str] = []
    for line in raw.split("\n"):
        if line.endswith("\r"):
            line = line[:-1]
        if line == "":
            continue
        sentences.append(line)
        if limit is not None and len(sentences) >= limit:
            break
    if limit is not None:
        sentences = sentences[:limit]
    return Corpus(name=name, sentences=tuple(sentences), split=split)


def encode_sentence(vocab: bpe.Vocab, sentence: str) -> np.ndarray:
    ids = [vocab.bos_id] + bpe.encode(vocab, sentence) + [vocab.eos_id]
    return np.asarray(ids, dtype=np.int64)


def encode_corpus(corpus: Corpus, vocab: bpe.Vocab) -> list[SentenceBatch]:
    """Tokenize every sentence once; batches() permutes these per epoch."""
    return [
        SentenceBatch(sentence_idx=i, ids=encode_sentence(vocab, s))
        for i, s in enumerate(corpus.sentences)
    ]


def batches(corpus: Corpus | Sequence[SentenceBatch], vocab: bpe.Vocab | None = None,
            epoch: int | None = None, seed: int = 0) -> Iterator[SentenceBatch]:
    """Stream one batch per sentence.

    With ``epoch=None`` the corpus order is kept (evaluation); otherwise
    the order is a seeded permutation so every epoch sees a different
    but reproducible order.
    """
    if isinstance(corpus, Corpus):
        if vocab is None:
            raise TypeError("vocab required when batching an unencoded corpus")
        encoded: Sequence[SentenceBatch] = encode_corpus(corpus, vocab)
    else:
        encoded = corpus
    if epoch is None:
        yield from encoded
        return
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, epoch))))
    for i in rng.permutation(len(encoded)):
        yield encoded[i]


def completed_word_counts(vocab: bpe.Vocab, ids: np.ndarray) -> np.ndarray:
    """For each prediction position t (1-based over a BOS..EOS batch), the
    number of fully emitted source words in the prefix ids[1:t].

    A word counts as complete once its last subword is in the prefix,
    i.e. when the token being predicted starts a new word or is EOS.
    """
    n_pred = len(ids) - 1
    counts = np.zeros(n_pred, dtype=np.int64)
    started = 0
    for t in range(1, n_pred + 1):
        if t >= 2 and vocab.is_word_initial(int(ids[t - 1])):
            started += 1
        completed = started
        if t < n_pred and started > 0 and not vocab.is_word_initial(int(ids[t])):
            completed = started - 1  # ids[t] continues the last word
        counts[t - 1] = completed
    return counts


def word_count(vocab: bpe.Vocab, ids: np.ndarray) -> int:
    """Number of source words in a BOS..EOS batch."""
    return sum(1 for i in ids[1:-1] if vocab.is_word_initial(int(i)))
