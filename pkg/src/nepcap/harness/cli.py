"""``nepcap`` command-line interface.

Every subcommand accepts ``--config FILE`` (``key = value`` lines whose keys
are the long option names, with ``-`` or ``_``); explicit flags override
values from the file.  The cache root defaults to ``$NEPCAP_CACHE_DIR`` or
``./nepcap-cache``.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from ..corpus import (
    Vocabulary,
    build_vocab,
    filter_rare,
    load_corpus,
    parse_annotations,
    save_corpus,
    split_by_video,
    split_counts,
)
from ..errors import ConfigError, NepcapError
from ..kvdoc import format_kv, read_kv

CACHE_ENV = "NEPCAP_CACHE_DIR"
CORPUS_FILE = "corpus.csv"
VOCAB_FILE = "vocab.txt"

log = logging.getLogger("nepcap")


def _cache_root(args):
    return Path(args.cache_dir or os.environ.get(CACHE_ENV) or "nepcap-cache")


def _ratios(text):
    parts = [float(x) for x in str(text).split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return tuple(parts)


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _load_data(data_dir):
    data_dir = Path(data_dir)
    records = load_corpus(data_dir / CORPUS_FILE)
    vocab = Vocabulary.load(data_dir / VOCAB_FILE)
    return records, vocab


def _write_or_print(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def cmd_prepare(args):
    from ..toy import toy_records

    sources = [s for s in (args.annotations, args.corpus, args.toy or None) if s]
    if len(sources) != 1:
        raise ConfigError("prepare needs exactly one of --annotations, --corpus, --toy")
    if args.toy:
        records = toy_records()
    elif args.annotations:
        records = parse_annotations(Path(args.annotations).read_text(encoding="utf-8"))
    else:
        records = load_corpus(args.corpus)

    if any(r.split is None for r in records):
        records = split_by_video(records, args.ratios, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not all(r.nepali for r in records):
        save_corpus(records, out / CORPUS_FILE)
        print(f"split {len(records)} untranslated captions; run 'translate' then 'prepare --corpus'")
        return 0
    before = len(records)
    records = filter_rare(records, args.min_count)
    vocab = build_vocab(records)
    save_corpus(records, out / CORPUS_FILE)
    vocab.save(out / VOCAB_FILE)
    counts = split_counts(records)
    print(
        f"prepared {len(records)} captions ({before - len(records)} rare-word captions dropped), "
        f"videos train/val/test {counts['train']}/{counts['val']}/{counts['test']}, vocab {vocab.size}"
    )
    return 0


def cmd_translate(args):
    from ..translation import GoogleTranslateClient, TranslationCache, translate_corpus

    records = load_corpus(args.corpus)
    cache = TranslationCache(args.cache or _cache_root(args) / "translations.tsv")
    translator = None if args.offline else GoogleTranslateClient()
    done = translate_corpus(
        records, translator, cache, max_attempts=args.max_attempts, max_workers=args.workers, rate_limit=args.rate_limit
    )
    save_corpus(done, args.out or args.corpus)
    print(f"translated {len(done)} captions")
    return 0


def cmd_features(args):
    from ..frames import extract_features, extract_frames, get_backbone, open_video, find_videos, save_features
    from ..toy import toy_videos

    kwargs = {}
    if args.backbone == "precomputed":
        if not args.precomputed_root:
            raise ConfigError("the precomputed backbone needs --precomputed-root")
        kwargs["root"] = args.precomputed_root
    elif args.backbone != "synthetic":
        kwargs["device"] = args.device
    backbone = get_backbone(args.backbone, **kwargs)
    if args.toy:
        videos = toy_videos()
    elif args.videos:
        videos = [open_video(vid, p) for vid, p in find_videos(args.videos).items()]
    else:
        raise ConfigError("features needs --videos or --toy")
    root = _cache_root(args)
    for video in videos:
        save_features(extract_features(extract_frames(video), backbone), root)
    print(f"cached {len(videos)} {args.backbone} feature tensors under {root}")
    return 0


def cmd_train(args):
    from ..datagen import BatchGenerator, make_pairs
    from ..frames import FeatureStore
    from ..seq2seq import ModelConfig, TrainConfig, build_model, save_checkpoint, train

    records, vocab = _load_data(args.data)
    store = FeatureStore(_cache_root(args), args.backbone)
    tr = [r for r in records if r.split == "train"]
    va = [r for r in records if r.split == "val"]
    pairs = make_pairs(tr, store, vocab)
    if not pairs:
        raise ConfigError("training split is empty")
    dim = store[pairs[0][0]].shape[1]
    cfg = ModelConfig(args.backbone, args.decoder, args.hidden_dim, vocab.size, encoder_dim=dim,
                      mask_pad_loss=args.mask_pad_loss)
    tcfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs, seed=args.seed, learning_rate=args.learning_rate)
    train_gen = BatchGenerator(pairs, store, vocab, args.batch_size, seed=args.seed)
    val_gen = BatchGenerator(make_pairs(va, store, vocab), store, vocab, args.batch_size, shuffle=False) if va else None
    result = train(build_model(cfg, seed=args.seed), train_gen, val_gen, tcfg, vocab.fingerprint())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.final.vocab = vocab
    save_checkpoint(result.final, out)
    if args.best_out:
        result.best.vocab = vocab
        save_checkpoint(result.best, args.best_out)
    _, last_train, last_val = result.history[-1]
    print(f"trained {args.epochs} epochs: train loss {last_train:.4f}, val loss {last_val:.4f}; saved {out}")
    return 0


def _checkpoint_and_vocab(args):
    from ..seq2seq import load_checkpoint

    vocab = Vocabulary.load(Path(args.data) / VOCAB_FILE) if args.data else None
    ckpt = load_checkpoint(args.checkpoint, vocab)
    vocab = vocab or ckpt.vocab
    if vocab is None:
        raise ConfigError(f"{args.checkpoint} carries no vocabulary; pass --data")
    return ckpt, vocab


def cmd_caption(args):
    from ..frames import load_features
    from ..seq2seq import greedy_decode

    ckpt, vocab = _checkpoint_and_vocab(args)
    feats = load_features(args.video, ckpt.config.backbone, _cache_root(args)).features
    print(greedy_decode(ckpt.to_model(), feats, vocab, args.max_steps))
    return 0


def _read_tsv_captions(path):
    out = {}
    with open(path, encoding="utf-8") as fp:
        for n, line in enumerate(fp, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            vid, sep, text = line.partition("\t")
            if not sep:
                raise ConfigError(f"{path}:{n}: expected 'video_id<TAB>caption'")
            out.setdefault(vid, []).append(text)
    return out


def cmd_eval(args):
    from ..frames import FeatureStore
    from ..metrics import evaluate_model, score_texts

    if args.candidates:
        if not args.references:
            raise ConfigError("eval with --candidates needs --references")
        cands = {vid: texts[0] for vid, texts in _read_tsv_captions(args.candidates).items()}
        report = score_texts(cands, _read_tsv_captions(args.references), args.label)
    elif args.checkpoint:
        from ..seq2seq import load_checkpoint

        if not args.data:
            raise ConfigError("eval with --checkpoint needs --data")
        records, vocab = _load_data(args.data)
        ckpt = load_checkpoint(args.checkpoint, vocab)
        test = [r for r in records if r.split == args.split]
        store = FeatureStore(_cache_root(args), ckpt.config.backbone)
        report = evaluate_model(ckpt, test, store, vocab, args.label, args.max_steps)
    else:
        raise ConfigError("eval needs --candidates/--references or --checkpoint/--data")
    _write_or_print(format_kv(report.to_kv()), args.out)
    return 0


def cmd_grid(args):
    from .grid import GridSpec, run_grid

    spec = GridSpec(
        backbones=args.backbones, decoders=args.decoders, hidden_dims=args.hidden_dims,
        batch_sizes=args.batch_sizes, epochs=args.epochs, seeds=args.seeds, learning_rate=args.learning_rate,
    )
    records, vocab = _load_data(args.data)
    before = len(list(Path(args.out).glob("*/record.txt"))) if Path(args.out).exists() else 0
    done = run_grid(spec, records, vocab, _cache_root(args), args.out, workers=args.workers)
    total = len(spec.points())
    print(f"{len(done)}/{total} grid runs complete ({max(len(done) - before, 0)} new) in {args.out}")
    return 0 if len(done) == total else 1


def cmd_report(args):
    from .grid import load_records
    from .report import load_baselines, render_report

    records = load_records(args.runs)
    if not records:
        raise ConfigError(f"no completed runs under {args.runs}")
    baselines = None if args.no_baselines else load_baselines()
    _write_or_print(render_report(records, baselines), args.out)
    return 0


# -- parser ----------------------------------------------------------------------


# per-subcommand option defaults, applied after the config file
DEFAULTS = {
    "prepare": {"ratios": (0.8, 0.1, 0.1), "seed": 0, "min_count": 2, "toy": False},
    "translate": {"offline": False, "max_attempts": 3, "workers": 1},
    "features": {"backbone": "synthetic", "device": "cpu", "toy": False},
    "train": {"backbone": "synthetic", "decoder": "lstm", "hidden_dim": 512, "batch_size": 128, "epochs": 30,
              "seed": 0, "learning_rate": 1e-3, "mask_pad_loss": False},
    "caption": {"max_steps": 10},
    "eval": {"split": "test", "label": "", "max_steps": 10},
    "grid": {"batch_sizes": "128", "epochs": "30", "seeds": "0", "learning_rate": 1e-3, "workers": 1},
    "report": {"no_baselines": False},
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value document supplying option values")
    common.add_argument("--cache-dir", help=f"cache root (default ${CACHE_ENV} or ./nepcap-cache)")
    common.add_argument("-v", "--verbose", action="store_const", const=True, default=None)

    parser = argparse.ArgumentParser(prog="nepcap", description="Nepali video captioning toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, argument_default=None)
        p.set_defaults(func=func)
        return p

    p = add("prepare", cmd_prepare, "parse, split, filter and build the vocabulary")
    p.add_argument("--annotations", help="MSVD-style '<video_id> <caption>' file")
    p.add_argument("--corpus", help="corpus CSV (e.g. the output of translate)")
    p.add_argument("--toy", action="store_const", const=True, help="use the built-in 8-video toy corpus")
    p.add_argument("--out", required=False, help="output directory for corpus.csv and vocab.txt")
    p.add_argument("--ratios", type=_ratios)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-count", type=int)

    p = add("translate", cmd_translate, "fill Nepali captions through the translation cache/client")
    p.add_argument("--corpus")
    p.add_argument("--out", help="output CSV (default: overwrite --corpus)")
    p.add_argument("--cache", help="translation cache file")
    p.add_argument("--offline", action="store_const", const=True, help="never call the online client")
    p.add_argument("--max-attempts", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--rate-limit", type=float, help="requests per second")

    p = add("features", cmd_features, "sample frames, extract and cache backbone features")
    p.add_argument("--videos", help="directory of video files or per-video image directories")
    p.add_argument("--toy", action="store_const", const=True, help="use the toy videos")
    p.add_argument("--backbone")
    p.add_argument("--device")
    p.add_argument("--precomputed-root")

    p = add("train", cmd_train, "train one model")
    p.add_argument("--data", help="directory written by prepare")
    p.add_argument("--backbone")
    p.add_argument("--decoder")
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--mask-pad-loss", action="store_const", const=True)
    p.add_argument("--out", help="checkpoint path for the final epoch")
    p.add_argument("--best-out", help="checkpoint path for the lowest-validation-loss epoch")

    p = add("caption", cmd_caption, "greedy-decode a caption for one cached video")
    p.add_argument("--video")
    p.add_argument("--checkpoint")
    p.add_argument("--data", help="directory holding vocab.txt (default: vocabulary inside the checkpoint)")
    p.add_argument("--max-steps", type=int)

    p = add("eval", cmd_eval, "score captions with BLEU-1..4 and METEOR")
    p.add_argument("--candidates", help="TSV of video_id<TAB>caption")
    p.add_argument("--references", help="TSV of video_id<TAB>caption, repeated ids allowed")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--split")
    p.add_argument("--label")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--out", help="write the report here instead of stdout")

    p = add("grid", cmd_grid, "train and evaluate a cross-product of configurations")
    p.add_argument("--data")
    p.add_argument("--backbones")
    p.add_argument("--decoders")
    p.add_argument("--hidden-dims")
    p.add_argument("--batch-sizes")
    p.add_argument("--epochs")
    p.add_argument("--seeds")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="run directory")

    p = add("report", cmd_report, "render the comparison table")
    p.add_argument("--runs", help="run directory written by grid")
    p.add_argument("--no-baselines", action="store_const", const=True, help="omit the published reference rows")
    p.add_argument("--out")
    return parser


REQUIRED = {
    "prepare": ("out",),
    "translate": ("corpus",),
    "train": ("data", "out"),
    "caption": ("video", "checkpoint"),
    "grid": ("data", "backbones", "decoders", "hidden_dims", "out"),
    "report": ("runs",),
}


def _apply_config(parser, args):
    """Fill options left unset on the command line from --config, then from DEFAULTS."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    if args.config:
        for key, raw in read_kv(args.config).items():
            dest = key.replace("-", "_")
            action = actions.get(dest)
            if action is None or dest in ("config", "help", "func"):
                raise ConfigError(f"{args.config}: unknown option {key!r} for '{args.command}'")
            if getattr(args, dest) is not None:
                continue
            if action.const is True:
                value = _bool(raw)
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"{args.config}: bad value for {key}: {exc}") from None
            else:
                value = raw
            setattr(args, dest, value)
    for dest, value in DEFAULTS.get(args.command, {}).items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    for dest in REQUIRED.get(args.command, ()):
        if getattr(args, dest, None) in (None, ""):
            raise ConfigError(f"'{args.command}' needs --{dest.replace('_', '-')} (flag or config key)")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _apply_config(parser, args)
        return args.func(args)
    except (NepcapError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
