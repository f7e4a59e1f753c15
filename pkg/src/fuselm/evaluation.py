"""Evaluation: subword perplexity, word surprisal, reading-time
correlation, and prefix-embedding similarity profiles."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bpe
from .artefacts import (NO_CROP, ArtefactStore, CropSpec, KIND_DENSE_PREFIX,
                        artefact_matrix, make_context)
from .corpus import Corpus, encode_corpus
from .errors import (AlignmentError, ConfigurationError, CorpusError,
                     StoreKeyError, UndefinedCorrelationError)
from .model import FFNParams, ffn_sentence_nll, sentence_nll


@dataclass(frozen=True)
class EvalReport:
    corpus: str
    mode: str
    provider: str
    ppl: float
    nlls: tuple[float, ...]
    token_count: int

    @property
    def mean_nll(self) -> float:
        return sum(self.nlls) / self.token_count

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus, "mode": self.mode, "provider": self.provider,
            "ppl": self.ppl, "token_count": self.token_count,
            "nlls": list(self.nlls),
        }


@dataclass(frozen=True)
class ReadingTimeRecord:
    word: str
    mean_rt: float


def _nll_fn(params):
    return ffn_sentence_nll if isinstance(params, FFNParams) else sentence_nll


def _mode(params) -> str:
    return "none" if isinstance(params, FFNParams) else params.config.mode


def perplexity(params, corpus: Corpus, vocab: bpe.Vocab, provider,
               crop: CropSpec = NO_CROP, threads: int = 1) -> EvalReport:
    """exp of the mean per-subword NLL over the whole corpus, EOS included.

    Sentences may be scored in parallel; the reduction order is the fixed
    corpus order either way.
    """
    nll_fn = _nll_fn(params)
    mode = _mode(params)
    dt = params.config.np_dtype
    v = vocab if provider.needs_vocab_context() else None
    contexts = [make_context(b, v) for b in encode_corpus(corpus, vocab)]

    def score(ctx):
        A = artefact_matrix(provider, ctx, crop, mode, dtype=dt)
        return nll_fn(params, ctx.ids, A)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score, contexts))
    else:
        results = [score(ctx) for ctx in contexts]

    nlls: list[float] = []
    for _, _, per_token in results:
        nlls.extend(float(x) for x in per_token)
    count = len(nlls)
    if count == 0:
        raise ConfigurationError("cannot evaluate an empty corpus")
    mean = sum(nlls) / count
    return EvalReport(
        corpus=corpus.name, mode=mode, provider=getattr(provider, "kind", "?"),
        ppl=math.exp(mean), nlls=tuple(nlls), token_count=count,
    )


def cross_domain(params, vocab: bpe.Vocab, provider, corpora,
                 crop: CropSpec = NO_CROP, threads: int = 1) -> list[EvalReport]:
    """Same checkpoint over several corpora; one report row per corpus.

    ``provider`` may be a single provider or a {corpus_name: provider}
    mapping (dense stores are corpus-specific)."""
    reports = []
    for corpus in corpora:
        prov = provider[corpus.name] if isinstance(provider, dict) else provider
        reports.append(perplexity(params, corpus, vocab, prov, crop, threads))
    return reports


# --------------------------------------------------------------------------
# Word-level surprisal and reading times

def word_surprisals(params, vocab: bpe.Vocab, provider, sentences,
                    crop: CropSpec = NO_CROP) -> list[tuple[str, float]]:
    """Per-word surprisal: the summed NLL of the word's subwords.

    Contexts advance left to right through each sentence and reset at
    sentence boundaries; the EOS target belongs to no word.
    """
    nll_fn = _nll_fn(params)
    mode = _mode(params)
    dt = params.config.np_dtype
    v = vocab if provider.needs_vocab_context() else None
    out: list[tuple[str, float]] = []
    corpus = Corpus(name="text", sentences=tuple(sentences))
    for batch in encode_corpus(corpus, vocab):
        ctx = make_context(batch, v)
        A = artefact_matrix(provider, ctx, crop, mode, dtype=dt)
        _, _, nlls = nll_fn(params, ctx.ids, A)
        ids = batch.ids
        n = len(ids) - 2  # subword count
        word_tokens: list[str] = []
        word_nll = 0.0

        def flush():
            if word_tokens:
                text = "".join(word_tokens).replace(bpe.MARKER, "")
                if text:
                    out.append((text, word_nll))

        for j in range(1, n + 1):  # targets ids[1..n]; nlls[j-1] is its NLL
            tok = int(ids[j])
            if vocab.is_word_initial(tok) and word_tokens:
                flush()
                word_tokens = []
                word_nll = 0.0
            piece = bpe.UNK_GLYPH if tok == vocab.unk_id else vocab.tokens[tok]
            word_tokens.append(piece)
            word_nll += float(nlls[j - 1])
        flush()
    return out


def pearson(x, y) -> float:
    """Product-moment correlation with 64-bit accumulation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise UndefinedCorrelationError("inputs must be equal-length vectors")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise UndefinedCorrelationError("zero variance in one argument")
    return float((xc @ yc) / math.sqrt(vx * vy))


def load_reading_times(path) -> list[ReadingTimeRecord]:
    """TSV with header 'word<TAB>mean_rt_ms'."""
    records: list[ReadingTimeRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header.split("\t") != ["word", "mean_rt_ms"]:
            raise CorpusError(f"{path}: expected header 'word\\tmean_rt_ms', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 2 tab-separated fields")
            word, rt_raw = parts
            rt = float(rt_raw)
            if not rt > 0:
                raise CorpusError(f"{path}:{lineno}: mean_rt must be positive, got {rt}")
            records.append(ReadingTimeRecord(word=word, mean_rt=rt))
    return records


_TERMINAL_PUNCT = ".,;:!?\"')]}…"


def normalize_word(word: str) -> str:
    return word.lower().rstrip(_TERMINAL_PUNCT)


def correlate_reading_times(params, vocab: bpe.Vocab, provider, sentences,
                            rt_records, crop: CropSpec = NO_CROP
                            ) -> tuple[float, list[dict]]:
    """Pearson r between per-word surprisal and mean reading time.

    The text and the reading-time file must align word for word after
    lowercasing and stripping terminal punctuation; any divergence is
    fatal rather than skipped.
    """
    surprisals = word_surprisals(params, vocab, provider, sentences, crop)
    if len(surprisals) != len(rt_records):
        raise AlignmentError(
            f"text has {len(surprisals)} words but reading-time file has "
            f"{len(rt_records)}"
        )
    pairs: list[dict] = []
    for i, ((word, s), rec) in enumerate(zip(surprisals, rt_records)):
        if normalize_word(word) != normalize_word(rec.word):
            raise AlignmentError(
                f"word {i} diverges: text {word!r} vs reading times {rec.word!r}"
            )
        pairs.append({"word": word, "surprisal": s, "mean_rt": rec.mean_rt})
    r = pearson([p["surprisal"] for p in pairs], [p["mean_rt"] for p in pairs])
    return r, pairs


# --------------------------------------------------------------------------
# Prefix-embedding similarity profile

@dataclass(frozen=True)
class ProfileRow:
    prefix_len: int
    consecutive: float  # mean cos(e_{i-1}, e_i)
    to_last: float      # mean cos(e_{i-1}, e_last)
    count: int


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.astype(np.float64), b.astype(np.float64)) / (na * nb))


def similarity_profile(store: ArtefactStore, min_count: int = 10) -> list[ProfileRow]:
    """How similar consecutive prefix embeddings are, aggregated by prefix
    length; rows with fewer than ``min_count`` sentences are dropped."""
    if store.kind != KIND_DENSE_PREFIX:
        raise ConfigurationError(
            f"similarity profile needs a dense-prefix store, got {store.kind}"
        )
    by_sentence: dict[int, list[int]] = {}
    for sidx, plen in store.records:
        by_sentence.setdefault(sidx, []).append(plen)
    sums: dict[int, list[float]] = {}
    for sidx, lens in by_sentence.items():
        lens.sort()
        n = lens[-1]
        if lens != list(range(n + 1)):
            missing = sorted(set(range(n + 1)) - set(lens))
            raise StoreKeyError(
                f"sentence {sidx}: missing intermediate prefix keys {missing[:5]}"
            )
        last = store.records[(sidx, n)]
        for i in range(1, n + 1):
            prev = store.records[(sidx, i - 1)]
            cur = store.records[(sidx, i)]
            acc = sums.setdefault(i, [0.0, 0.0, 0])
            acc[0] += _cosine(prev, cur)
            acc[1] += _cosine(prev, last)
            acc[2] += 1
    rows = []
    for i in sorted(sums):
        s_consec, s_last, count = sums[i]
        if count >= min_count:
            rows.append(ProfileRow(
                prefix_len=i, consecutive=s_consec / count,
                to_last=s_last / count, count=count,
            ))
    return rows


# --------------------------------------------------------------------------
# Plot-ready outputs

def metrics_to_csv(metrics_path, csv_path, split: str = "dev") -> int:
    """Extract (epoch, ppl) rows for one split from a metrics JSONL file."""
    rows = []
    with open(metrics_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec["split"] == split:
                rows.append((rec["epoch"], rec["ppl"]))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "ppl"])
        writer.writerows(rows)
    return len(rows)
