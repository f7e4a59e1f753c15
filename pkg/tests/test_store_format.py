import struct

import numpy as np
import pytest

from fuselm.artefacts import (CropSpec, KIND_DENSE_FULL, NO_CROP, load_store,
                              lookup, write_store)
from fuselm.errors import StoreFormatError, StoreKeyError


def _sample_store(path, dim=6, sentences=3, max_len=4):
    rng = np.random.default_rng(5)
    records = {}
    for s in range(sentences):
        for p in range(max_len + 1):
            records[(s, p)] = rng.normal(size=dim).astype(np.float32)
    write_store(path, kind="dense-prefix", dim=dim, records=records)
    return records


def test_round_trip(tmp_path):
    path = tmp_path / "x.artf"
    records = _sample_store(path)
    store = load_store(path)
    assert store.dim == 6
    assert store.kind == "dense-prefix"
    assert store.crop.side == "none"
    assert len(store) == len(records)
    for key, vec in records.items():
        got = lookup(store, *key).values
        np.testing.assert_array_equal(got, vec)


def test_lookup_is_stable(tmp_path):
    path = tmp_path / "x.artf"
    _sample_store(path)
    store = load_store(path)
    a = lookup(store, 0, 0).values
    b = lookup(store, 0, 0).values
    np.testing.assert_array_equal(a, b)


def test_missing_key_names_the_key(tmp_path):
    path = tmp_path / "x.artf"
    _sample_store(path, sentences=1, max_len=1)
    store = load_store(path)
    with pytest.raises(StoreKeyError, match=r"sentence_idx=9.*prefix_len=0"):
        lookup(store, 9, 0)


def test_dense_full_ignores_prefix_len(tmp_path):
    path = tmp_path / "f.artf"
    vec = np.arange(4, dtype=np.float32)
    write_store(path, kind="dense-full", dim=4, records={(2, 0): vec})
    store = load_store(path)
    assert store.kind == KIND_DENSE_FULL
    np.testing.assert_array_equal(lookup(store, 2, 17).values, vec)


def test_crop_header_round_trip(tmp_path):
    path = tmp_path / "c.artf"
    write_store(path, kind="dense-prefix", dim=2,
                records={(0, 0): np.zeros(2, np.float32)},
                crop=CropSpec("left", 0.25))
    store = load_store(path)
    assert store.crop == CropSpec("left", 0.25)


def test_truncated_record_rejected(tmp_path):
    path = tmp_path / "t.artf"
    _sample_store(path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])  # cut into the last vector
    with pytest.raises(StoreFormatError):
        load_store(path)


# --------------------------------------------------------------------------
# corruption generator (shared with the acceptance fuzz)

CORRUPTION_KINDS = (
    "bad-magic", "bad-version", "bad-kind", "zero-dim", "bad-side",
    "bad-pct", "count-too-large", "count-too-small", "truncated",
    "unsorted", "duplicate-key", "trailing-garbage",
)

_HEADER = struct.Struct("<4sI B3x I B H Q")


def corrupt_store(raw: bytes, kind: str, rng: np.random.Generator) -> bytes:
    magic, version, kcode, dim, side, pct, count = _HEADER.unpack(raw[:_HEADER.size])
    body = raw[_HEADER.size:]

    def header(**kw):
        vals = dict(magic=magic, version=version, kcode=kcode, dim=dim,
                    side=side, pct=pct, count=count)
        vals.update(kw)
        return _HEADER.pack(vals["magic"], vals["version"], vals["kcode"],
                            vals["dim"], vals["side"], vals["pct"], vals["count"])

    if kind == "bad-magic":
        return header(magic=bytes(rng.integers(0, 256, 4, dtype=np.uint8))
                      if rng.random() < 0.5 else b"FRTA") + body
    if kind == "bad-version":
        return header(version=int(rng.integers(2, 1 << 31))) + body
    if kind == "bad-kind":
        return header(kcode=int(rng.integers(3, 256))) + body
    if kind == "zero-dim":
        return header(dim=0) + body
    if kind == "bad-side":
        return header(side=int(rng.integers(3, 256))) + body
    if kind == "bad-pct":
        return header(pct=int(rng.integers(1001, 1 << 16))) + body
    if kind == "count-too-large":
        return header(count=count + int(rng.integers(1, 10))) + body
    if kind == "count-too-small":
        if count < 1:
            return header(count=count + 1) + body
        return header(count=count - 1) + body
    if kind == "truncated":
        cut = int(rng.integers(1, max(2, len(body))))
        return header() + body[:-cut]
    if kind == "unsorted" or kind == "duplicate-key":
        rec_size = 12 + dim * 4
        if count < 2:
            return header(count=count + 1) + body
        i = int(rng.integers(1, count))
        first = body[:rec_size]
        target = bytearray(body)
        if kind == "duplicate-key":
            target[i * rec_size:(i + 1) * rec_size] = first
        else:
            # swap record i with record 0
            other = bytes(target[i * rec_size:(i + 1) * rec_size])
            target[i * rec_size:(i + 1) * rec_size] = first
            target[0:rec_size] = other
        return header() + bytes(target)
    if kind == "trailing-garbage":
        return raw + bytes(rng.integers(0, 256, int(rng.integers(1, 16)),
                                        dtype=np.uint8))
    raise ValueError(kind)


@pytest.mark.parametrize("kind", CORRUPTION_KINDS)
def test_each_corruption_kind_rejected(tmp_path, kind):
    path = tmp_path / "x.artf"
    _sample_store(path)
    raw = path.read_bytes()
    rng = np.random.default_rng(42)
    bad = tmp_path / "bad.artf"
    bad.write_bytes(corrupt_store(raw, kind, rng))
    with pytest.raises(StoreFormatError):
        load_store(bad)
