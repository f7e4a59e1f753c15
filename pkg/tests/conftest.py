"""Shared fixtures: toy vocabularies and synthetic topic corpora.

The topic corpora have single-character words drawn from disjoint
per-topic alphabets, so subword == word == character and entropy oracles
are exact at the subword level.
"""

import string

import numpy as np
import pytest

from fuselm import bpe
from fuselm.artefacts import CropSpec, write_store
from fuselm.corpus import Corpus

TOPIC_ALPHABETS = (
    tuple("abcdefghijkl"),
    tuple("mnopqrstuvwx"),
    tuple("yzABCDEFGHIJ"),
    tuple("KLMNOPQRSTUV"),
)
TOPIC_MARKERS = tuple("0123")  # sentence-initial topic determiners


def make_topic_corpus(n_sentences: int, length: int, seed: int,
                      name: str = "topic", split: str = "train",
                      marker: bool = False):
    """K=4 topics; each sentence samples uniformly from one topic's
    12-character alphabet. With ``marker`` the first word is the topic's
    dedicated marker character."""
    rng = np.random.default_rng(seed)
    topics = rng.integers(0, 4, size=n_sentences)
    sentences = []
    for t in topics:
        words = list(rng.choice(TOPIC_ALPHABETS[t], size=length))
        if marker:
            words = [TOPIC_MARKERS[t]] + words
        sentences.append(" ".join(words))
    return Corpus(name=name, sentences=tuple(sentences), split=split), topics


def char_vocab(corpus: Corpus) -> bpe.Vocab:
    """Zero-merge vocabulary: every single-character word is one token."""
    alphabet = sorted({c for s in corpus.sentences for c in s.split(" ")})
    return bpe.train_bpe(corpus.sentences, vocab_size=3 + len(alphabet))


def write_topic_store(path, topics, n_words: int, crop: CropSpec,
                      kind: str = "dense-prefix") -> None:
    """One-hot topic store simulating an encoder that can read the topic
    only from the sentence-initial word.

    dense-prefix: the vector at key (s, p) describes the cropped span
    ending at word p: one-hot(topic) when the span contains word 1,
    zeros otherwise (the empty prefix carries nothing).
    dense-full: one ground-truth one-hot per sentence, served everywhere.
    """
    records = {}
    for sidx, topic in enumerate(topics):
        onehot = np.zeros(4, dtype=np.float32)
        onehot[topic] = 1.0
        if kind == "dense-full":
            records[(sidx, 0)] = onehot
            continue
        for plen in range(n_words + 1):
            if plen == 0:
                vec = np.zeros(4, dtype=np.float32)
            elif crop.side == "right":
                vec = onehot  # span 1..min(plen, cut) always starts at word 1
            elif crop.side == "left":
                start = int(np.floor(crop.pct * n_words + 0.5))
                vec = onehot if start <= 1 else np.zeros(4, dtype=np.float32)
            else:
                vec = onehot
            records[(sidx, plen)] = vec
    write_store(path, kind=kind, dim=4, records=records, crop=crop)


def make_text_corpus(n_sentences: int, seed: int, name: str = "text",
                     split: str = "train") -> Corpus:
    """Pseudo-text over a small word list, for tokenizer and CLI tests."""
    words = (
        "the a cat dog tree house runs sleeps under over quickly slowly "
        "red blue old new river stone bird song winter summer light dark"
    ).split()
    rng = np.random.default_rng(seed)
    sentences = tuple(
        " ".join(rng.choice(words, size=rng.integers(3, 9)))
        for _ in range(n_sentences)
    )
    return Corpus(name=name, sentences=sentences, split=split)


@pytest.fixture(scope="session")
def tiny_vocab() -> bpe.Vocab:
    corpus = ["the cat sat", "the dog sat", "a cat ran"]
    return bpe.train_bpe(corpus, vocab_size=3 + 13 + 4)


@pytest.fixture(scope="session")
def text_corpus() -> Corpus:
    return make_text_corpus(60, seed=11)


@pytest.fixture(scope="session")
def text_vocab(text_corpus) -> bpe.Vocab:
    alphabet = {sym for s in text_corpus.sentences
                for w in s.split(" ") for sym in bpe._word_symbols(w)}
    return bpe.train_bpe(text_corpus.sentences, vocab_size=3 + len(alphabet) + 40)
