"""Byte-pair-encoding subword vocabulary: training, encoding, decoding, file IO.

The word-boundary convention is lossless: a sentence is split on single
space characters and the first symbol of every word carries a marker
prefix, so decoding is exact concatenation followed by marker-to-space
substitution. Merges never cross word boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigurationError, InputError

MARKER = "\u2581"

BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
UNK_TOKEN = "<unk>"
SPECIAL_TOKENS = (BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2

UNK_GLYPH = "\ufffd"

_VOCAB_MAGIC = "BPEVOCAB 1"


@dataclass(frozen=True)
class Vocab:
    """Trained subword vocabulary: token table plus ordered merge rules.

    Token ids are dense 0..size-1 with the special tokens pinned at
    ids 0 (BOS), 1 (EOS) and 2 (UNK).
    """

    tokens: tuple[str, ...]
    merges: tuple[tuple[str, str], ...]
    token_to_id: dict[str, int] = field(repr=False, compare=False, default=None)  # type: ignore[assignment]
    merge_rank: dict[tuple[str, str], int] = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.tokens)})
        object.__setattr__(self, "merge_rank", {m: r for r, m in enumerate(self.merges)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def bos_id(self) -> int:
        return BOS_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def is_word_initial(self, token_id: int) -> bool:
        """Whether this token begins a new source word (carries the marker)."""
        return self.tokens[token_id].startswith(MARKER)


def _word_symbols(word: str) -> list[str]:
    """Character symbols of one word, marker fused onto the first character."""
    if not word:
        return [MARKER]
    chars = list(word)
    chars[0] = MARKER + chars[0]
    return chars


def _sentence_words(sentence: str) -> list[str]:
    # Splitting on single spaces keeps runs of spaces representable as
    # empty words, which decode back exactly.
    return sentence.split(" ")


def train_bpe(corpus: Sequence[str] | Iterable[str], vocab_size: int) -> Vocab:
    """Learn a BPE vocabulary of exactly ``vocab_size`` tokens.

    Tokens are: the 3 special tokens, the base symbol alphabet of the
    corpus (sorted), then one token per merge in training order. Merge
    selection is highest pair frequency with ties broken by the
    lexicographically smallest pair, so training is deterministic.
    """
    sentences = list(corpus)
    if not sentences:
        raise ConfigurationError("cannot train BPE on an empty corpus")

    word_freq: dict[tuple[str, ...], int] = {}
    for sentence in sentences:
        for word in _sentence_words(sentence):
            key = tuple(_word_symbols(word))
            word_freq[key] = word_freq.get(key, 0) + 1

    alphabet = sorted({sym for word in word_freq for sym in word})
    base_count = len(SPECIAL_TOKENS) + len(alphabet)
    if vocab_size < base_count:
        raise ConfigurationError(
            f"vocab_size {vocab_size} is below the minimum {base_count} "
            f"(3 specials + {len(alphabet)} base symbols)"
        )

    tokens: list[str] = list(SPECIAL_TOKENS) + alphabet
    token_set = set(tokens)
    merges: list[tuple[str, str]] = []

    # Mutable symbol sequences plus an occurrence index pair -> word ids,
    # updated incrementally as merges are applied.
    words: list[list[str]] = [list(w) for w in word_freq]
    freqs: list[int] = list(word_freq.values())
    pair_counts: dict[tuple[str, str], int] = {}
    pair_words: dict[tuple[str, str], set[int]] = {}
    for wi, word in enumerate(words):
        f = freqs[wi]
        for a, b in zip(word, word[1:]):
            pair_counts[(a, b)] = pair_counts.get((a, b), 0) + f
            pair_words.setdefault((a, b), set()).add(wi)

    def bump(pair: tuple[str, str], delta: int, wi: int) -> None:
        new = pair_counts.get(pair, 0) + delta
        if new > 0:
            pair_counts[pair] = new
            if delta > 0:
                pair_words.setdefault(pair, set()).add(wi)
        else:
            pair_counts.pop(pair, None)
            pair_words.pop(pair, None)

    while len(tokens) < vocab_size:
        best = None
        for pair, count in pair_counts.items():
            if pair[0] + pair[1] in token_set:
                continue  # would duplicate an existing token string
            if best is None or count > best[1] or (count == best[1] and pair < best[0]):
                best = (pair, count)
        if best is None:
            raise ConfigurationError(
                f"corpus exhausted after {len(tokens)} tokens; "
                f"cannot reach vocab_size {vocab_size}"
            )
        pair = best[0]
        merged = pair[0] + pair[1]
        merges.append(pair)
        tokens.append(merged)
        token_set.add(merged)

        for wi in sorted(pair_words.get(pair, ())):
            word = words[wi]
            f = freqs[wi]
            i = 0
            out: list[str] = []
            # Whether out[-1] was produced by a merge in this scan; its
            # right adjacency is then not yet materialized in the counts.
            fresh = False
            while i < len(word):
                if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
                    if out:
                        if not fresh:
                            bump((out[-1], pair[0]), -f, wi)
                        bump((out[-1], merged), f, wi)
                    bump(pair, -f, wi)
                    if i + 2 < len(word):
                        # (b, right) disappears even when right begins the
                        # next overlapping occurrence of the pair.
                        bump((pair[1], word[i + 2]), -f, wi)
                    out.append(merged)
                    fresh = True
                    i += 2
                else:
                    if out and fresh:
                        bump((out[-1], word[i]), f, wi)
                    out.append(word[i])
                    fresh = False
                    i += 1
            words[wi] = out

    return Vocab(tokens=tuple(tokens), merges=tuple(merges))


def _encode_word(vocab: Vocab, word: str) -> list[int]:
    symbols = _word_symbols(word)
    rank = vocab.merge_rank
    while len(symbols) > 1:
        best_rank = None
        best_pair = None
        for a, b in zip(symbols, symbols[1:]):
            r = rank.get((a, b))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_pair = (a, b)
        if best_pair is None:
            break
        merged = best_pair[0] + best_pair[1]
        out: list[str] = []
        i = 0
        while i < len(symbols):
            if (
                i + 1 < len(symbols)
                and symbols[i] == best_pair[0]
                and symbols[i + 1] == best_pair[1]
            ):
                out.append(merged)
                i += 2
            else:
                out.append(symbols[i])
                i += 1
        symbols = out
    to_id = vocab.token_to_id
    return [to_id.get(s, UNK_ID) for s in symbols]


def encode(vocab: Vocab, text: str) -> list[int]:
    """Tokenize ``text`` into subword ids. Unknown symbols become UNK.

    No BOS/EOS are added; that is the batching layer's job.
    """
    if text == "":
        return []
    ids: list[int] = []
    for word in _sentence_words(text):
        ids.extend(_encode_word(vocab, word))
    return ids


def decode(vocab: Vocab, ids: Sequence[int]) -> str:
    """Invert :func:`encode`. UNK renders as U+FFFD; BOS/EOS render empty."""
    pieces: list[str] = []
    for i in ids:
        if not 0 <= i < vocab.size:
            raise InputError(f"token id {i} out of range for vocab of size {vocab.size}")
        if i == BOS_ID or i == EOS_ID:
            continue
        if i == UNK_ID:
            pieces.append(UNK_GLYPH)
        else:
            pieces.append(vocab.tokens[i])
    text = "".join(pieces).replace(MARKER, " ")
    if text.startswith(" "):
        text = text[1:]
    return text


def _escape(token: str) -> str:
    return token.replace("\\", "\\\\").replace("\n", "\\n").replace("\t", "\\t")


def _unescape(token: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(token):
        c = token[i]
        if c == "\\" and i + 1 < len(token):
            nxt = token[i + 1]
            if nxt == "n":
                out.append("\n")
            elif nxt == "t":
                out.append("\t")
            elif nxt == "\\":
                out.append("\\")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def save_vocab(vocab: Vocab, path) -> None:
    lines = [_VOCAB_MAGIC, f"size {vocab.size}"]
    lines.extend(_escape(t) for t in vocab.tokens)
    lines.append("MERGES")
    lines.extend(f"{_escape(a)}\t{_escape(b)}" for a, b in vocab.merges)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocab:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0] != _VOCAB_MAGIC:
        raise ConfigurationError(f"{path}: not a vocab file (bad magic line)")
    if len(lines) < 2 or not lines[1].startswith("size "):
        raise ConfigurationError(f"{path}: missing size line")
    size = int(lines[1][len("size "):])
    tokens = [_unescape(t) for t in lines[2:2 + size]]
    if len(tokens) != size or lines[2 + size] != "MERGES":
        raise ConfigurationError(f"{path}: token count does not match size header")
    merges = []
    for line in lines[3 + size:]:
        left, sep, right = line.partition("\t")
        if not sep:
            raise ConfigurationError(f"{path}: malformed merge line {line!r}")
        merges.append((_unescape(left), _unescape(right)))
    return Vocab(tokens=tuple(tokens), merges=tuple(merges))
