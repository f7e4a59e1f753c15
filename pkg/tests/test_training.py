import json
import math

import numpy as np
import pytest

from conftest import char_vocab, make_topic_corpus
from fuselm.artefacts import ZeroArtefacts
from fuselm.corpus import Corpus
from fuselm.errors import ConfigurationError, NumericError
from fuselm.model import LMConfig, init_lm, load_checkpoint
from fuselm.training import (MetricsRecord, TrainConfig, reverse_wean_schedule,
                             train, wean_off_schedule, wean_schedule)


def test_wean_off_preset_boundaries():
    s = wean_off_schedule()
    assert wean_schedule(s, 0) == 0.0
    assert wean_schedule(s, 14) == 0.0
    assert wean_schedule(s, 15) == 0.25
    assert wean_schedule(s, 29) == 0.25
    assert wean_schedule(s, 30) == 0.5
    assert wean_schedule(s, 45) == 0.75
    assert wean_schedule(s, 60) == 1.0
    assert wean_schedule(s, 500) == 1.0


def test_reverse_preset_starts_full():
    s = reverse_wean_schedule()
    assert wean_schedule(s, 0) == 1.0
    assert wean_schedule(s, 15) == 0.75
    assert wean_schedule(s, 60) == 0.0


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=1, dropout_schedule=((0, 0.0), (0, 0.5)))
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=1, dropout_schedule=((5, 0.0),))
    with pytest.raises(ConfigurationError):
        TrainConfig(epochs=1, dropout_schedule=((0, 1.5),))


def _setup(n_sentences=8, seed=0, mode="none", dtype="float32"):
    corpus, _ = make_topic_corpus(n_sentences, length=3, seed=seed)
    dev, _ = make_topic_corpus(4, length=3, seed=seed + 1, split="dev")
    vocab = char_vocab(Corpus(name="all", sentences=corpus.sentences + dev.sentences))
    cfg = LMConfig(vocab_size=vocab.size, d_embed=6, hidden=6, artefact_dim=2,
                   mode=mode, seed=seed, dtype=dtype)
    return corpus, dev, vocab, init_lm(cfg), ZeroArtefacts(2)


def test_training_determinism(tmp_path):
    outputs = []
    for run in range(2):
        corpus, dev, vocab, params, provider = _setup()
        ckpt = tmp_path / f"run{run}.ckpt"
        tc = TrainConfig(epochs=2, seed=3, lr=1e-2, checkpoint_path=str(ckpt))
        _, _, records = train(tc, params, corpus, vocab, provider, dev_corpus=dev)
        outputs.append((ckpt.read_bytes(), records))
    assert outputs[0][0] == outputs[1][0]
    for r1, r2 in zip(outputs[0][1], outputs[1][1]):
        assert (r1.epoch, r1.split, r1.nll, r1.ppl, r1.dropout_p) == \
            (r2.epoch, r2.split, r2.nll, r2.ppl, r2.dropout_p)


def test_checkpoint_resume_is_bitwise(tmp_path):
    corpus, dev, vocab, params, provider = _setup()
    full = tmp_path / "full.ckpt"
    tc = TrainConfig(epochs=2, seed=5, lr=1e-2, checkpoint_path=str(full))
    train(tc, params, corpus, vocab, provider)

    corpus, dev, vocab, params2, provider = _setup()
    part = tmp_path / "part.ckpt"
    tc1 = TrainConfig(epochs=1, seed=5, lr=1e-2, checkpoint_path=str(part))
    train(tc1, params2, corpus, vocab, provider)
    loaded, adam = load_checkpoint(part)
    resumed = tmp_path / "resumed.ckpt"
    tc2 = TrainConfig(epochs=2, seed=5, lr=1e-2, checkpoint_path=str(resumed))
    train(tc2, loaded, corpus, vocab, provider, start_epoch=1, adam=adam)
    assert full.read_bytes() == resumed.read_bytes()


def test_full_dropout_concat_matches_no_fusion_trajectory():
    """p=1 late-concat with aligned shared-weight init follows the
    no-fusion run's dev NLL trajectory exactly."""
    trajectories = []
    for mode, schedule in (("none", ((0, 0.0),)), ("late-concat", ((0, 1.0),))):
        corpus, dev, vocab, params, provider = _setup(mode=mode, seed=2)
        tc = TrainConfig(epochs=3, seed=2, lr=1e-2, dropout_schedule=schedule,
                         dev_dropout_policy="schedule")
        _, _, records = train(tc, params, corpus, vocab, provider, dev_corpus=dev)
        trajectories.append([r.nll for r in records if r.split == "dev"])
    assert trajectories[0] == trajectories[1]


def test_metrics_monotonic_and_well_formed(tmp_path):
    corpus, dev, vocab, params, provider = _setup()
    path = tmp_path / "m.jsonl"
    tc = TrainConfig(epochs=4, seed=1, lr=1e-2, eval_every=2,
                     metrics_path=str(path))
    train(tc, params, corpus, vocab, provider, dev_corpus=dev)
    train_epochs = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            assert set(rec) == {"epoch", "split", "nll", "ppl", "dropout_p",
                                "seconds"}
            assert rec["ppl"] == pytest.approx(math.exp(rec["nll"]), rel=1e-12)
            if rec["split"] == "train":
                train_epochs.append(rec["epoch"])
    assert train_epochs == [0, 1, 2, 3]


def test_eval_every_controls_dev_records(tmp_path):
    corpus, dev, vocab, params, provider = _setup()
    tc = TrainConfig(epochs=5, seed=1, lr=1e-2, eval_every=2)
    _, _, records = train(tc, params, corpus, vocab, provider, dev_corpus=dev)
    dev_epochs = [r.epoch for r in records if r.split == "dev"]
    assert dev_epochs == [1, 3, 4]  # every 2nd epoch plus the final one


def test_non_finite_loss_names_sentence():
    corpus, dev, vocab, params, provider = _setup(dtype="float32")
    params.E_in[:] = np.nan  # poison the first forward pass
    tc = TrainConfig(epochs=1, seed=0, lr=1e-2)
    with pytest.raises(NumericError, match=r"sentence \d+"):
        train(tc, params, corpus, vocab, provider)


def test_empty_corpus_refused():
    corpus, dev, vocab, params, provider = _setup()
    empty = Corpus(name="e", sentences=())
    with pytest.raises(ConfigurationError):
        train(TrainConfig(epochs=1), params, empty, vocab, provider)


def test_dropout_probability_recorded(tmp_path):
    corpus, dev, vocab, params, provider = _setup()
    tc = TrainConfig(epochs=4, seed=1, lr=1e-2,
                     dropout_schedule=((0, 0.0), (2, 0.75)))
    _, _, records = train(tc, params, corpus, vocab, provider)
    by_epoch = {r.epoch: r.dropout_p for r in records if r.split == "train"}
    assert by_epoch == {0: 0.0, 1: 0.0, 2: 0.75, 3: 0.75}
