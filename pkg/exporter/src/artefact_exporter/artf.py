"""ARTF binary store writer (and a reader for self-checks).

Little-endian layout: magic "ARTF", version u32=1, artefact_kind u8
(0=dense-prefix, 1=dense-full, 2=dense-full-masked), 3 reserved bytes,
dim u32, crop_side u8 (0=none, 1=right, 2=left), crop_pct_milli u16,
record_count u64, then records sorted by (sentence_idx u64,
prefix_len u32), each followed by dim f32 values.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"ARTF"
VERSION = 1

KIND_CODES = {"dense-prefix": 0, "dense-full": 1, "dense-full-masked": 2}
SIDE_CODES = {"none": 0, "right": 1, "left": 2}

_HEADER = struct.Struct("<4sI B3x I B H Q")
_KEY = struct.Struct("<QI")


class ArtfError(Exception):
    pass


def write_artf(path, kind: str, dim: int, records: dict,
               crop_side: str = "none", crop_pct: float = 1.0) -> int:
    """Write records ({(sentence_idx, prefix_len): vector}) sorted by key.
    Returns the record count."""
    if kind not in KIND_CODES:
        raise ArtfError(f"unknown kind {kind!r}")
    if crop_side not in SIDE_CODES:
        raise ArtfError(f"unknown crop side {crop_side!r}")
    items = sorted(records.items())
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, KIND_CODES[kind], dim,
                              SIDE_CODES[crop_side], int(round(crop_pct * 1000)),
                              len(items)))
        for (sidx, plen), vec in items:
            arr = np.asarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise ArtfError(
                    f"record ({sidx},{plen}): shape {arr.shape} != ({dim},)")
            fh.write(_KEY.pack(sidx, plen))
            fh.write(arr.tobytes())
    return len(items)


def read_artf(path):
    """Minimal reader returning (kind, dim, crop_side, crop_pct, records)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ArtfError("truncated header")
        magic, version, kcode, dim, side, pct, count = _HEADER.unpack(header)
        if magic != MAGIC or version != VERSION:
            raise ArtfError("bad magic or version")
        kinds = {v: k for k, v in KIND_CODES.items()}
        sides = {v: k for k, v in SIDE_CODES.items()}
        records = {}
        for _ in range(count):
            raw = fh.read(_KEY.size)
            sidx, plen = _KEY.unpack(raw)
            vec = np.frombuffer(fh.read(dim * 4), dtype="<f4")
            records[(sidx, plen)] = vec
        return kinds[kcode], dim, sides[side], pct / 1000.0, records
