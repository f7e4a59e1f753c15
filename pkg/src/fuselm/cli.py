"""Command-line entry point: every pipeline stage as a subcommand.

Flags resolve as: built-in default < config file (--config, JSON) <
explicit flag. The effective values are written to a RunManifest next to
each output, together with sha256 digests of every input file read.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bpe, evaluation
from .artefacts import (BagOfWords, CropSpec, StoreArtefacts, TfIdf,
                        ZeroArtefacts, fit_idf, load_store)
from .corpus import Corpus, load_corpus
from .errors import ConfigurationError, FuselmError
from .manifest import RunManifest, now
from .model import (FFNConfig, FUSION_MODES, LMConfig, generate, init_ffn,
                    init_lm, load_checkpoint)
from .training import (TrainConfig, reverse_wean_schedule, train,
                       wean_off_schedule)

_MODEL_FLAGS = {
    "fusion": "none", "d_embed": 512, "hidden": 256, "artefact_dim": 768,
    "ffn_width": 768, "arch": "lstm", "dtype": "float32", "init_scale": 0.08,
}
_CROP_FLAGS = {"crop_side": "none", "crop_pct": 100.0}
_TRAIN_FLAGS = {
    "lr": 1e-6, "epochs": 10, "seed": None, "limit": None, "eval_every": 1,
    "dropout_schedule": "0:0", "dev_dropout": "none", "clip_norm": None,
    "metrics": None, "dev": None, "dev_provider": None,
}

_DEFAULTS: dict[str, dict] = {
    "train-bpe": {"vocab_size": 8192, "limit": None},
    "train": {**_MODEL_FLAGS, **_CROP_FLAGS, **_TRAIN_FLAGS, "provider": "zero",
              "tfidf_corpus": None},
    "eval": {**_CROP_FLAGS, "provider": "zero", "threads": 1, "limit": None,
             "tfidf_corpus": None},
    "crop-sweep": {"provider": "zero", "threads": 1, "limit": None,
                   "pcts": "0,25,50,75,100", "side": "right",
                   "tfidf_corpus": None},
    "data-sweep": {**_MODEL_FLAGS, **_CROP_FLAGS, **_TRAIN_FLAGS,
                   "provider": "zero", "sizes": "1000,3000,10000,30000,100000",
                   "tfidf_corpus": None},
    "wean": {**_MODEL_FLAGS, **_CROP_FLAGS, **_TRAIN_FLAGS, "provider": "zero",
             "preset": "wean-off", "period": 15, "dev_dropout": "schedule",
             "tfidf_corpus": None},
    "correlate": {**_CROP_FLAGS, "provider": "zero", "threads": 1,
                  "tfidf_corpus": None},
    "similarity": {"csv": None},
    "generate": {"provider": "zero", "max_len": 50, "strategy": "greedy",
                 "seed": None, "tfidf_corpus": None},
    "inspect-store": {},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fuselm",
        description="Train and evaluate LSTM language models with artefact fusion.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with flag defaults")
        return sp

    def model_flags(sp):
        sp.add_argument("--fusion", choices=FUSION_MODES,
                        help="fusion mode (default none)")
        sp.add_argument("--arch", choices=("lstm", "ffn"),
                        help="model family: fusion LSTM or artefact-only FFN")
        sp.add_argument("--d-embed", type=int, help="input embedding width (512)")
        sp.add_argument("--hidden", type=int, help="LSTM hidden size (256)")
        sp.add_argument("--artefact-dim", type=int,
                        help="artefact dimension for the zero provider (768)")
        sp.add_argument("--ffn-width", type=int, help="FFN layer width (768)")
        sp.add_argument("--dtype", choices=("float32", "float64"))
        sp.add_argument("--init-scale", type=float,
                        help="uniform init half-width; 0 gives all-zero weights")

    def crop_flags(sp):
        sp.add_argument("--crop-side", choices=("none", "right", "left"))
        sp.add_argument("--crop-pct", type=float, help="crop percentage 0..100")

    def provider_flag(sp):
        sp.add_argument("--provider",
                        help="artefact source: zero | bow | tfidf | store:<path>")
        sp.add_argument("--tfidf-corpus",
                        help="training split to fit idf on (required for tfidf "
                             "outside `train`)")

    def train_flags(sp):
        sp.add_argument("--corpus", required=True, help="training corpus file")
        sp.add_argument("--vocab", required=True, help="trained vocab file")
        sp.add_argument("--dev", help="dev corpus for periodic evaluation")
        sp.add_argument("--dev-provider",
                        help="artefact source for --dev (store files are keyed "
                             "by their own corpus, so dev needs its own)")
        sp.add_argument("--lr", type=float, help="Adam learning rate (1e-6)")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--seed", type=int, help="fallback: FUSELM_SEED env, then 0")
        sp.add_argument("--limit", type=int, help="keep only the first N sentences")
        sp.add_argument("--eval-every", type=int)
        sp.add_argument("--dropout-schedule",
                        help="artefact dropout steps, e.g. 0:0,15:0.25,30:0.5")
        sp.add_argument("--dev-dropout", choices=("none", "schedule"))
        sp.add_argument("--clip-norm", type=float)
        sp.add_argument("--metrics", help="metrics JSONL output path")

    sp = add("train-bpe", "train a BPE vocabulary")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--vocab-size", type=int)
    sp.add_argument("--limit", type=int)
    sp.add_argument("--out", required=True, help="vocab file to write")

    sp = add("train", "train a language model")
    train_flags(sp)
    model_flags(sp)
    crop_flags(sp)
    provider_flag(sp)
    sp.add_argument("--checkpoint", required=True, help="checkpoint output path")

    sp = add("eval", "perplexity of a checkpoint on one or more corpora")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--corpus", required=True, action="append",
                    help="corpus file, optionally name=path; repeatable")
    sp.add_argument("--limit", type=int)
    sp.add_argument("--threads", type=int)
    crop_flags(sp)
    provider_flag(sp)
    sp.add_argument("--out", required=True, help="JSON report path")

    sp = add("crop-sweep", "evaluate a checkpoint over a crop grid")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--side", choices=("right", "left", "both"))
    sp.add_argument("--pcts", help="comma list of percentages")
    sp.add_argument("--limit", type=int)
    sp.add_argument("--threads", type=int)
    provider_flag(sp)
    sp.add_argument("--out", required=True, help="JSON rows path")

    sp = add("data-sweep", "train once per training-data size")
    train_flags(sp)
    model_flags(sp)
    crop_flags(sp)
    provider_flag(sp)
    sp.add_argument("--sizes", help="comma list of sentence counts")
    sp.add_argument("--out-dir", required=True,
                    help="directory for per-size metrics and checkpoints")

    sp = add("wean", "train with an artefact dropout wean-off preset")
    train_flags(sp)
    model_flags(sp)
    crop_flags(sp)
    provider_flag(sp)
    sp.add_argument("--preset", choices=("wean-off", "reverse"))
    sp.add_argument("--period", type=int, help="epochs per dropout stage (15)")
    sp.add_argument("--checkpoint", required=True)

    sp = add("correlate", "Pearson r of word surprisal vs reading times")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--text", required=True, help="story text, one sentence per line")
    sp.add_argument("--rt", required=True, help="TSV: word<TAB>mean_rt_ms")
    sp.add_argument("--threads", type=int)
    crop_flags(sp)
    provider_flag(sp)
    sp.add_argument("--out", required=True)

    sp = add("similarity", "prefix-embedding similarity profile of a store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--csv", help="also write a plot-ready CSV")
    sp.add_argument("--out", required=True)

    sp = add("generate", "decode a sequence from a trained checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--max-len", type=int)
    sp.add_argument("--strategy", choices=("greedy", "sample"))
    sp.add_argument("--seed", type=int)
    provider_flag(sp)
    sp.add_argument("--out", help="optional JSON output path")

    sp = add("inspect-store", "validate an ARTF store and print its header")
    sp.add_argument("--store", required=True)

    return p


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """default < config file < explicit flag."""
    effective = dict(_DEFAULTS[command])
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        for key, value in file_cfg.items():
            effective[key.replace("-", "_")] = value
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            effective[key] = value
        else:
            effective.setdefault(key, None)
    return effective


def _seed(cfg: dict) -> int:
    if cfg.get("seed") is not None:
        return int(cfg["seed"])
    return int(os.environ.get("FUSELM_SEED", "0"))


def _crop(cfg: dict) -> CropSpec:
    return CropSpec(side=cfg["crop_side"], pct=float(cfg["crop_pct"]) / 100.0)


def _parse_schedule(text: str):
    steps = []
    for part in text.split(","):
        epoch, _, p = part.strip().partition(":")
        steps.append((int(epoch), float(p)))
    return tuple(steps)


def _build_provider(spec: str, vocab, cfg: dict, manifest: RunManifest,
                    default_dim: int, train_corpus: Corpus | None = None):
    if spec == "zero":
        return ZeroArtefacts(default_dim)
    if spec == "bow":
        return BagOfWords(vocab)
    if spec == "tfidf":
        if train_corpus is None:
            path = cfg.get("tfidf_corpus")
            if not path:
                raise ConfigurationError(
                    "tfidf provider needs --tfidf-corpus (the training split)")
            manifest.record_input(path)
            train_corpus = load_corpus(path, name="tfidf-train")
        return TfIdf(vocab, fit_idf(train_corpus, vocab))
    if spec.startswith("store:"):
        path = spec[len("store:"):]
        manifest.record_input(path)
        return StoreArtefacts(load_store(path), vocab)
    raise ConfigurationError(f"unknown provider spec {spec!r}")


def _load_vocab(path, manifest: RunManifest):
    manifest.record_input(path)
    return bpe.load_vocab(path)


def _load_corpus(path, manifest: RunManifest, limit=None, name=None, split="train"):
    manifest.record_input(path)
    inferred = name or os.path.splitext(os.path.basename(path))[0]
    return load_corpus(path, limit=limit, name=inferred, split=split)


def _init_model(cfg: dict, vocab_size: int, artefact_dim: int, seed: int):
    if cfg["arch"] == "ffn":
        return init_ffn(FFNConfig(
            vocab_size=vocab_size, artefact_dim=artefact_dim,
            width=int(cfg["ffn_width"]), seed=seed, dtype=cfg["dtype"]))
    return init_lm(LMConfig(
        vocab_size=vocab_size, d_embed=int(cfg["d_embed"]),
        hidden=int(cfg["hidden"]), artefact_dim=artefact_dim,
        mode=cfg["fusion"], seed=seed, dtype=cfg["dtype"],
        init_scale=float(cfg["init_scale"])))


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# Subcommands

def cmd_train_bpe(cfg: dict, manifest: RunManifest) -> int:
    corpus = _load_corpus(cfg["corpus"], manifest, limit=cfg["limit"])
    vocab = bpe.train_bpe(corpus.sentences, int(cfg["vocab_size"]))
    bpe.save_vocab(vocab, cfg["out"])
    manifest.finished = now()
    manifest.write(cfg["out"])
    print(f"wrote vocab of {vocab.size} tokens to {cfg['out']}")
    return 0


def _run_training(cfg: dict, manifest: RunManifest, schedule, checkpoint: str,
                  metrics: str | None, limit=None) -> None:
    seed = _seed(cfg)
    vocab = _load_vocab(cfg["vocab"], manifest)
    corpus = _load_corpus(cfg["corpus"], manifest, limit=limit, split="train")
    dev = None
    if cfg.get("dev"):
        dev = _load_corpus(cfg["dev"], manifest, name=None, split="dev")
    provider = _build_provider(cfg["provider"], vocab, cfg, manifest,
                               int(cfg["artefact_dim"]), train_corpus=corpus)
    dev_provider = None
    if dev is not None:
        if cfg.get("dev_provider"):
            dev_provider = _build_provider(cfg["dev_provider"], vocab, cfg,
                                           manifest, int(cfg["artefact_dim"]),
                                           train_corpus=corpus)
        elif cfg["provider"].startswith("store:"):
            raise ConfigurationError(
                "a store provider is keyed by the training corpus; pass "
                "--dev-provider (e.g. store:<dev.artf>) to evaluate on --dev")
    params = _init_model(cfg, vocab.size, provider.dim, seed)
    tc = TrainConfig(
        epochs=int(cfg["epochs"]), seed=seed, lr=float(cfg["lr"]),
        crop=_crop(cfg), dropout_schedule=schedule,
        eval_every=int(cfg["eval_every"]), dev_dropout_policy=cfg["dev_dropout"],
        clip_norm=cfg["clip_norm"], checkpoint_path=checkpoint,
        metrics_path=metrics,
    )
    train(tc, params, corpus, vocab, provider, dev_corpus=dev,
          dev_provider=dev_provider)
    if metrics and dev is not None:
        evaluation.metrics_to_csv(metrics, f"{metrics}.csv", split="dev")


def cmd_train(cfg: dict, manifest: RunManifest) -> int:
    schedule = _parse_schedule(cfg["dropout_schedule"])
    metrics = cfg.get("metrics") or f"{cfg['checkpoint']}.metrics.jsonl"
    _run_training(cfg, manifest, schedule, cfg["checkpoint"], metrics,
                  limit=cfg["limit"])
    manifest.finished = now()
    manifest.write(cfg["checkpoint"])
    print(f"wrote checkpoint {cfg['checkpoint']} and metrics {metrics}")
    return 0


def cmd_wean(cfg: dict, manifest: RunManifest) -> int:
    period = int(cfg["period"])
    if cfg["preset"] == "wean-off":
        schedule = wean_off_schedule(period)
    else:
        schedule = reverse_wean_schedule(period)
    metrics = cfg.get("metrics") or f"{cfg['checkpoint']}.metrics.jsonl"
    _run_training(cfg, manifest, schedule, cfg["checkpoint"], metrics,
                  limit=cfg["limit"])
    manifest.finished = now()
    manifest.write(cfg["checkpoint"])
    print(f"wean preset {cfg['preset']} (period {period}) done; "
          f"checkpoint {cfg['checkpoint']}")
    return 0


def cmd_data_sweep(cfg: dict, manifest: RunManifest) -> int:
    sizes = [int(s) for s in str(cfg["sizes"]).split(",")]
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    schedule = _parse_schedule(cfg["dropout_schedule"])
    for size in sizes:
        ckpt = os.path.join(out_dir, f"model-{size}.ckpt")
        metrics = os.path.join(out_dir, f"metrics-{size}.jsonl")
        _run_training(cfg, manifest, schedule, ckpt, metrics, limit=size)
        print(f"size {size}: checkpoint {ckpt}, metrics {metrics}")
    manifest.finished = now()
    manifest.write(os.path.join(out_dir, "data-sweep"))
    return 0


def _load_eval_model(cfg: dict, manifest: RunManifest):
    manifest.record_input(cfg["checkpoint"])
    params, _ = load_checkpoint(cfg["checkpoint"])
    vocab = _load_vocab(cfg["vocab"], manifest)
    if vocab.size != params.config.vocab_size:
        raise ConfigurationError(
            f"vocab size {vocab.size} does not match checkpoint "
            f"vocab_size {params.config.vocab_size}")
    return params, vocab


def _check_provider_dim(provider, params) -> None:
    if provider.dim != params.config.artefact_dim:
        raise ConfigurationError(
            f"provider dimension {provider.dim} does not match the "
            f"checkpoint's artefact dimension {params.config.artefact_dim}")


def cmd_eval(cfg: dict, manifest: RunManifest) -> int:
    params, vocab = _load_eval_model(cfg, manifest)
    reports = []
    for entry in cfg["corpus"]:
        name, sep, path = entry.partition("=")
        if not sep:
            name, path = None, entry
        corpus = _load_corpus(path, manifest, limit=cfg["limit"], name=name,
                              split="eval")
        provider = _build_provider(cfg["provider"], vocab, cfg, manifest,
                                   params.config.artefact_dim)
        _check_provider_dim(provider, params)
        report = evaluation.perplexity(params, corpus, vocab, provider,
                                       crop=_crop(cfg), threads=int(cfg["threads"]))
        reports.append(report.to_dict())
        print(f"{corpus.name}: ppl {report.ppl:.4f} over {report.token_count} tokens")
    _write_json(cfg["out"], reports[0] if len(reports) == 1 else reports)
    manifest.finished = now()
    manifest.write(cfg["out"])
    return 0


def cmd_crop_sweep(cfg: dict, manifest: RunManifest) -> int:
    params, vocab = _load_eval_model(cfg, manifest)
    corpus = _load_corpus(cfg["corpus"], manifest, limit=cfg["limit"], split="eval")
    sides = ("right", "left") if cfg["side"] == "both" else (cfg["side"],)
    pcts = [float(x) for x in str(cfg["pcts"]).split(",")]
    rows = []
    for side in sides:
        for pct in pcts:
            crop = CropSpec(side=side, pct=pct / 100.0)
            if crop.is_empty():
                provider = ZeroArtefacts(params.config.artefact_dim)
            else:
                spec = cfg["provider"].replace("{side}", side)
                spec = spec.replace("{pct}", str(int(pct)))
                provider = _build_provider(spec, vocab, cfg, manifest,
                                           params.config.artefact_dim)
            _check_provider_dim(provider, params)
            report = evaluation.perplexity(params, corpus, vocab, provider,
                                           crop=crop, threads=int(cfg["threads"]))
            rows.append({"side": side, "pct": pct, "ppl": report.ppl,
                         "token_count": report.token_count})
            print(f"{side} {pct:g}%: ppl {report.ppl:.4f}")
    _write_json(cfg["out"], rows)
    manifest.finished = now()
    manifest.write(cfg["out"])
    return 0


def cmd_correlate(cfg: dict, manifest: RunManifest) -> int:
    params, vocab = _load_eval_model(cfg, manifest)
    manifest.record_input(cfg["text"])
    text = load_corpus(cfg["text"], name="story", split="eval")
    manifest.record_input(cfg["rt"])
    rt = evaluation.load_reading_times(cfg["rt"])
    provider = _build_provider(cfg["provider"], vocab, cfg, manifest,
                               params.config.artefact_dim)
    _check_provider_dim(provider, params)
    r, pairs = evaluation.correlate_reading_times(
        params, vocab, provider, text.sentences, rt, crop=_crop(cfg))
    _write_json(cfg["out"], {"pearson_r": r, "pairs": pairs})
    manifest.finished = now()
    manifest.write(cfg["out"])
    print(f"pearson r = {r:.4f} over {len(pairs)} words")
    return 0


def cmd_similarity(cfg: dict, manifest: RunManifest) -> int:
    manifest.record_input(cfg["store"])
    store = load_store(cfg["store"])
    rows = evaluation.similarity_profile(store)
    doc = [{"prefix_len": r.prefix_len, "consecutive": r.consecutive,
            "to_last": r.to_last, "count": r.count} for r in rows]
    _write_json(cfg["out"], doc)
    if cfg.get("csv"):
        with open(cfg["csv"], "w", encoding="utf-8") as fh:
            fh.write("prefix_len,consecutive,to_last,count\n")
            for r in rows:
                fh.write(f"{r.prefix_len},{r.consecutive},{r.to_last},{r.count}\n")
    manifest.finished = now()
    manifest.write(cfg["out"])
    print(f"{len(rows)} profile rows (count >= 10)")
    return 0


def cmd_generate(cfg: dict, manifest: RunManifest) -> int:
    params, vocab = _load_eval_model(cfg, manifest)
    provider = _build_provider(cfg["provider"], vocab, cfg, manifest,
                               params.config.artefact_dim)
    _check_provider_dim(provider, params)
    seed = _seed(cfg)
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = generate(params, vocab, provider, max_len=int(cfg["max_len"]),
                   rng=rng, strategy=cfg["strategy"])
    text = bpe.decode(vocab, ids)
    print(text)
    if cfg.get("out"):
        _write_json(cfg["out"], {"ids": ids, "text": text})
        manifest.finished = now()
        manifest.write(cfg["out"])
    return 0


def cmd_inspect_store(cfg: dict, manifest: RunManifest) -> int:
    store = load_store(cfg["store"])
    sentences = sorted({s for s, _ in store.records})
    doc = {
        "path": cfg["store"], "kind": store.kind, "dim": store.dim,
        "crop_side": store.crop.side, "crop_pct": store.crop.pct,
        "records": len(store.records), "sentences": len(sentences),
    }
    print(json.dumps(doc, indent=2))
    return 0


_COMMANDS = {
    "train-bpe": cmd_train_bpe,
    "train": cmd_train,
    "eval": cmd_eval,
    "crop-sweep": cmd_crop_sweep,
    "data-sweep": cmd_data_sweep,
    "wean": cmd_wean,
    "correlate": cmd_correlate,
    "similarity": cmd_similarity,
    "generate": cmd_generate,
    "inspect-store": cmd_inspect_store,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = _resolve(args, args.command)
    manifest = RunManifest(command=args.command, config=_jsonable(cfg),
                           seed=_seed(cfg) if "seed" in cfg else 0,
                           started=now())
    try:
        return _COMMANDS[args.command](cfg, manifest)
    except FuselmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _jsonable(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items()
            if isinstance(v, (int, float, str, bool, list, tuple, type(None)))}


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
