"""Sentence encoders: a pretrained bidirectional MLM via transformers, or
a deterministic hash encoder for hermetic tests and plumbing checks."""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(Exception):
    pass


class HashEncoder:
    """Deterministic pseudo-embeddings derived from content hashes.

    cls pooling hashes the whole text; mean pooling averages per-word
    hash vectors. Not semantically meaningful, but bitwise reproducible,
    which is what the format and pipeline tests need.
    """

    mask_token = "[MASK]"

    def __init__(self, dim: int):
        if dim <= 0:
            raise EncoderError(f"dimension must be positive, got {dim}")
        self.dim = dim

    def _vec(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.standard_normal(self.dim).astype(np.float32)

    def encode_batch(self, texts: list[str], pooling: str) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            if pooling == "cls":
                out[i] = self._vec("\x00cls\x00" + text)
            else:
                words = [w for w in text.split(" ") if w]
                if not words:
                    out[i] = self._vec("\x00empty\x00")
                else:
                    out[i] = np.mean([self._vec(w) for w in words], axis=0)
        return out


class TransformersEncoder:
    """Last-layer representations of a local pretrained encoder.

    cls pooling takes the first token's vector; mean pooling averages all
    non-padding tokens. The model is frozen and run in eval mode.
    """

    def __init__(self, name_or_path: str, batch_size: int = 32):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderError(
                f"transformers/torch unavailable for encoder {name_or_path!r}: {exc}"
            ) from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path)
            self.model = AutoModel.from_pretrained(name_or_path)
        except Exception as exc:
            raise EncoderError(
                f"cannot load encoder {name_or_path!r}: {exc}") from exc
        self.model.eval()
        self._torch = torch
        self.batch_size = batch_size
        self.dim = int(self.model.config.hidden_size)
        self.mask_token = self.tokenizer.mask_token or "[MASK]"

    def _run(self, texts: list[str], pooling: str) -> np.ndarray:
        torch = self._torch
        enc = self.tokenizer(texts, return_tensors="pt", padding=True,
                             truncation=True)
        with torch.no_grad():
            hidden = self.model(**enc).last_hidden_state
        if pooling == "cls":
            pooled = hidden[:, 0, :]
        else:
            mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
            pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return pooled.cpu().numpy().astype(np.float32)

    def encode_batch(self, texts: list[str], pooling: str) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        start = 0
        batch = self.batch_size
        while start < len(texts):
            chunk = texts[start:start + batch]
            try:
                out[start:start + len(chunk)] = self._run(chunk, pooling)
            except RuntimeError as exc:
                if "out of memory" in str(exc).lower() and batch > 1:
                    batch = max(1, batch // 2)  # back off and retry
                    continue
                raise EncoderError(f"encoder failed: {exc}") from exc
            start += len(chunk)
        return out


def build_encoder(spec: str):
    """`hash:<dim>` for the deterministic encoder, anything else is a
    transformers model name or local path."""
    if spec.startswith("hash:"):
        return HashEncoder(int(spec[len("hash:"):]))
    return TransformersEncoder(spec)
