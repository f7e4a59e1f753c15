"""Exporter conformance: the ARTF output is accepted and consumed by the
primary toolkit through its public surfaces (inspect-store, train, eval).

The primary is driven as a subprocess through its CLI; nothing from its
internals is imported here.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from artefact_exporter.artf import read_artf
from artefact_exporter.cli import run as export_run
from artefact_exporter.export import expected_record_count

PASS = "ACCEPTANCE PASS:"

SENTENCES = [
    "the river bends past the old mill",
    "a cold wind moved over the water",
    "she counted the boats from the bridge",
    "the miller slept through the storm",
    "light broke across the valley floor",
    "the dog waited at the gate all day",
    "rain fell softly on the tin roof",
    "he carried the sacks into the barn",
    "the road to town was washed out",
    "children raced sticks down the stream",
    "an early frost silvered the fields",
    "the bell rang twice before noon",
    "smoke rose from the far chimney",
    "she mended the net by the fire",
    "the horses stamped in the cold",
    "a lantern swung in the doorway",
    "the ferry crossed against the current",
    "he read the letter one more time",
    "the river bends past the old mill",
    "a cold wind moved over the water",
]


def _fuselm(*args):
    return subprocess.run([sys.executable, "-m", "fuselm", *args],
                          capture_output=True, text=True)


def test_exporter_conformance(tmp_path):
    corpus = tmp_path / "corpus.txt"
    corpus.write_text("\n".join(SENTENCES) + "\n", encoding="utf-8")
    store = tmp_path / "prefixes.artf"

    rc = export_run(["--encoder", "hash:768", "--kind", "prefix",
                     "--in", str(corpus), "--out", str(store)])
    assert rc == 0

    # the primary's store inspector accepts the file and reports the header
    proc = _fuselm("inspect-store", "--store", str(store))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["dim"] == 768
    assert doc["kind"] == "dense-prefix"  # kind code 0
    assert doc["records"] == expected_record_count("dense-prefix", SENTENCES)
    assert doc["sentences"] == len(SENTENCES)

    # duplicated sentences produce bitwise-identical vectors
    _, _, _, _, records = read_artf(store)
    n18 = len(SENTENCES[18].split())
    for plen in range(n18 + 1):
        np.testing.assert_array_equal(records[(0, plen)], records[(18, plen)])
        np.testing.assert_array_equal(records[(1, plen)], records[(19, plen)])

    # the primary trains and evaluates end to end from this store
    vocab = tmp_path / "corpus.vocab"
    proc = _fuselm("train-bpe", "--corpus", str(corpus),
                   "--vocab-size", "120", "--out", str(vocab))
    assert proc.returncode == 0, proc.stderr

    ckpt = tmp_path / "model.ckpt"
    proc = _fuselm("train", "--corpus", str(corpus), "--vocab", str(vocab),
                   "--fusion", "late-concat", "--provider", f"store:{store}",
                   "--epochs", "1", "--lr", "0.01", "--seed", "1",
                   "--d-embed", "8", "--hidden", "8",
                   "--checkpoint", str(ckpt))
    assert proc.returncode == 0, proc.stderr

    report_path = tmp_path / "report.json"
    proc = _fuselm("eval", "--checkpoint", str(ckpt), "--vocab", str(vocab),
                   "--corpus", str(corpus), "--provider", f"store:{store}",
                   "--out", str(report_path))
    assert proc.returncode == 0, proc.stderr
    report = json.loads(report_path.read_text())
    assert math.isfinite(report["ppl"])
    assert report["ppl"] > 1.0

    print(f"{PASS} exporter conformance: {doc['records']} records, dim 768, "
          f"kind dense-prefix; duplicates bitwise-identical; primary eval "
          f"ppl {report['ppl']:.3f} (finite)")
