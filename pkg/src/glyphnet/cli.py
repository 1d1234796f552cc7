"""Command-line interface.

Subcommands: ``dataset`` builds a labeled corpus from offline category
files, ``train`` fits a model from a JSON run config, ``eval`` scores
checkpoints (optionally fused), ``analyze`` emits occlusion heatmaps or
nearest-neighbor tables, and ``render`` dumps glyph images for
debugging. Exit codes: 0 success, 2 configuration error, 3 data error,
4 contract violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, corpus, model as model_mod
from .errors import ConfigError, ContractViolation, DataError
from .model import TrainConfig, load_checkpoint, make_provider, save_checkpoint, save_epoch_log, train_model

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONTRACT = 4

_TOP_KEYS = {
    "seed", "out", "model", "epochs", "batch_size", "seq_len", "d_c", "d_h", "eta",
    "categories", "corpus", "glyphs", "fusion", "warm_start",
}
_CORPUS_KEYS = {"train", "valid", "test", "freqs"}
_FUSION_KEYS = {"kind", "threshold"}
_WARM_KEYS = {"lookup", "visual"}


def _reject_unknown(mapping, allowed, context):
    extra = set(mapping) - allowed
    if extra:
        raise ConfigError(f"unknown {context} config keys: {sorted(extra)}")


class RunConfig:
    """A JSON run configuration; unknown keys are rejected."""

    def __init__(self, raw: dict):
        if not isinstance(raw, dict):
            raise ConfigError("run config must be a JSON object")
        _reject_unknown(raw, _TOP_KEYS, "top-level")
        _reject_unknown(raw.get("corpus", {}), _CORPUS_KEYS, "corpus")
        _reject_unknown(raw.get("fusion", {}), _FUSION_KEYS, "fusion")
        _reject_unknown(raw.get("warm_start", {}), _WARM_KEYS, "warm_start")
        try:
            self.train = TrainConfig(
                batch_size=raw.get("batch_size", 400),
                seq_len=raw.get("seq_len", 10),
                d_c=raw.get("d_c", 128),
                d_h=raw.get("d_h", 128),
                eta=raw.get("eta", 0.001),
                epochs=raw.get("epochs", 10),
                seed=raw.get("seed", 0),
                model=raw.get("model", "lookup"),
            )
        except TypeError as exc:
            raise ConfigError(f"bad training option: {exc}") from exc
        self.out = raw.get("out", "runs/latest")
        self.categories = list(raw.get("categories", corpus.DEFAULT_CATEGORIES))
        self.corpus = dict(raw.get("corpus", {}))
        self.glyphs = raw.get("glyphs")
        self.fusion = {"kind": "none", "threshold": 0.0, **raw.get("fusion", {})}
        self.warm_start = dict(raw.get("warm_start", {}))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# dataset
# ----------------------------------------------------------------------

def cmd_dataset(args) -> int:
    categories = _load_categories(args.categories)
    graph = corpus.CategoryGraph.from_tsv(args.graph, roots=categories)
    memberships = corpus.load_memberships_tsv(args.memberships)

    kept_titles = set(corpus.filter_titles(list(memberships)))
    filtered = {t: cats for t, cats in memberships.items() if t in kept_titles}
    labels = corpus.assign_labels_min_depth(graph, filtered)

    index = {name: i for i, name in enumerate(categories)}
    instances = [corpus.Instance(title=t, label=index[root]) for t, root in labels.items()]
    if len(instances) < 5:
        raise DataError(f"only {len(instances)} labeled instances; need at least 5 to split")
    assigned = corpus.split_corpus(instances, args.seed)

    out = _outdir(args.out)
    by_split = {s: [i for i in assigned if i.split == s] for s in corpus.SPLITS}
    for split, insts in by_split.items():
        corpus.save_corpus_tsv(out / f"{split}.tsv", insts, categories)
    corpus.save_split_manifest(out / "splits.tsv", assigned)
    table = corpus.char_frequency_table(by_split["train"])
    corpus.save_frequency_table(out / "char_freq.tsv", table)
    summary = corpus.summarize(assigned, categories)
    summary["splits"] = {s: len(v) for s, v in by_split.items()}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)

    print(f"labeled {len(instances)} titles "
          f"(train/valid/test = {len(by_split['train'])}/{len(by_split['valid'])}/{len(by_split['test'])})")
    print(f"title length {summary['title_length_mean']} +- {summary['title_length_sd']}")
    print(f"wrote corpus files to {out}")
    return 0


def _load_categories(path) -> list[str]:
    if path is None:
        return list(corpus.DEFAULT_CATEGORIES)
    try:
        with open(path, encoding="utf-8") as fh:
            cats = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise ConfigError(f"cannot read categories {path}: {exc}") from exc
    if len(cats) < 2:
        raise ConfigError("need at least 2 categories")
    return cats


# ----------------------------------------------------------------------
# train
# ----------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if "train" not in cfg.corpus:
        raise ConfigError("config needs corpus.train")
    train = corpus.load_corpus_tsv(cfg.corpus["train"], cfg.categories)
    valid = corpus.load_corpus_tsv(cfg.corpus["valid"], cfg.categories) if cfg.corpus.get("valid") else []

    provider = None
    if cfg.train.model in ("visual", "early"):
        if cfg.glyphs is None:
            raise ConfigError(f"model {cfg.train.model!r} needs a glyphs provider config")
        provider = make_provider(cfg.glyphs)

    warm_lookup = warm_visual = None
    if cfg.warm_start.get("lookup"):
        warm_lookup = load_checkpoint(cfg.warm_start["lookup"])
    if cfg.warm_start.get("visual"):
        warm_visual = load_checkpoint(cfg.warm_start["visual"])

    trained, history = train_model(
        train, valid, cfg.train, cfg.categories,
        provider=provider, provider_config=cfg.glyphs,
        warm_lookup=warm_lookup, warm_visual=warm_visual,
    )

    out = _outdir(cfg.out)
    save_checkpoint(trained, out / "model.ckpt")
    save_epoch_log(out / "epochs.jsonl", history)
    for r in history:
        vacc = "-" if r.valid_acc is None else f"{r.valid_acc:.4f}"
        print(f"epoch {r.epoch}: loss {r.mean_loss:.4f} train-acc {r.train_acc:.4f} valid-acc {vacc}")
    print(f"wrote checkpoint to {out / 'model.ckpt'}")
    return 0


# ----------------------------------------------------------------------
# eval
# ----------------------------------------------------------------------

def cmd_eval(args) -> int:
    ckpts = [load_checkpoint(p) for p in args.checkpoint]
    if len(ckpts) not in (1, 2):
        raise ConfigError("eval takes one or two --checkpoint paths")
    first = ckpts[0]
    for other in ckpts[1:]:
        if other.categories != first.categories:
            raise ConfigError("checkpoints disagree on categories")
        if other.vocab.codepoints != first.vocab.codepoints:
            raise ConfigError("checkpoints disagree on vocabulary")

    lookup_model = visual_model = None
    if len(ckpts) == 2:
        kinds = sorted(m.kind for m in ckpts)
        if kinds != ["lookup", "visual"]:
            raise ConfigError(f"two-checkpoint eval needs one lookup and one visual model, got {kinds}"
                              " (early fusion is a single jointly trained checkpoint)")
        for m in ckpts:
            if m.kind == "lookup":
                lookup_model = m
            else:
                visual_model = m
    elif args.fusion != "none":
        raise ConfigError(f"{args.fusion} fusion needs two checkpoints")
    else:
        lookup_model = first

    test = corpus.load_corpus_tsv(args.test, first.categories)
    freqs = corpus.load_frequency_table(args.freqs)

    records = analysis.evaluate(
        test, freqs,
        lookup_model=lookup_model, visual_model=visual_model,
        fusion=args.fusion, threshold=args.threshold,
    )
    out = _outdir(args.out)
    analysis.save_records_jsonl(out / "records.jsonl", records)
    curve = analysis.cumulative_rarity_curve(records)
    analysis.save_curve_tsv(out / "curve.tsv", curve)

    report = {
        "fusion": args.fusion,
        "threshold": args.threshold,
        "instances": len(records),
        "accuracy": analysis.accuracy(records),
        "k_rarest": {str(k): analysis.k_rarest_accuracy(records, k)
                     for k in (100, 1000, 10000) if k <= len(records)},
    }
    if args.fusion == "fallback":
        report["routing"] = {
            "visual": sum(1 for r in records if r.route == "visual"),
            "lookup": sum(1 for r in records if r.route == "lookup"),
        }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)

    print(f"accuracy {report['accuracy']:.4f} over {len(records)} instances (fusion={args.fusion})")
    for k, acc in report["k_rarest"].items():
        print(f"  {k}-rarest accuracy {acc:.4f}")
    if "routing" in report:
        print(f"  routed {report['routing']['visual']} to visual, {report['routing']['lookup']} to lookup")
    print(f"wrote report to {out}")
    return 0


# ----------------------------------------------------------------------
# analyze / render
# ----------------------------------------------------------------------

def _gather_chars(args) -> list[str]:
    chars = list(args.chars or "")
    if args.chars_file:
        try:
            with open(args.chars_file, encoding="utf-8") as fh:
                chars += [ch for line in fh for ch in line.strip()]
        except OSError as exc:
            raise ConfigError(f"cannot read {args.chars_file}: {exc}") from exc
    chars = list(dict.fromkeys(chars))
    if not chars:
        raise ConfigError("no characters given (use --chars or --chars-file)")
    return chars


def cmd_analyze(args) -> int:
    mdl = load_checkpoint(args.checkpoint)
    chars = _gather_chars(args)
    out = _outdir(args.out)

    if args.mode == "occlusion":
        if mdl.cnn is None:
            raise ConfigError("occlusion analysis needs a visual or early checkpoint")
        for ch in chars:
            img = mdl.provider.render(ord(ch))
            heat = analysis.occlusion_heatmap(mdl, img)
            analysis.save_heatmap(out / f"occlusion_{ord(ch):04x}", img, heat)
        print(f"wrote {len(chars)} occlusion heatmaps to {out}")
        return 0

    queries = list(args.query) if args.query else chars
    with open(out / "knn.tsv", "w", encoding="utf-8") as fh:
        for q in queries:
            for ch, dist in analysis.knn_chars(mdl, chars, q, k=args.k):
                fh.write(f"{q}\t{ch}\t{dist:.6f}\n")
    print(f"wrote neighbor table for {len(queries)} queries to {out / 'knn.tsv'}")
    return 0


def cmd_render(args) -> int:
    if args.font:
        provider = make_provider({"provider": "font", "font_path": args.font, "pixel_size": args.pixel_size})
    else:
        provider = make_provider({"provider": "fixture", "fixture_set": args.fixture_set})
    chars = _gather_chars(args)
    out = _outdir(args.out)
    from .glyphs import write_pgm

    for ch in chars:
        write_pgm(provider.render(ord(ch)), out / f"glyph_{ord(ch):04x}.pgm")
    print(f"wrote {len(chars)} glyphs to {out}")
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glyphnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset", help="build a labeled corpus from category files")
    p.add_argument("--graph", required=True, help="TSV of parent<TAB>child category edges")
    p.add_argument("--memberships", required=True, help="TSV of title<TAB>category lines")
    p.add_argument("--categories", help="file with one main category per line (default: built-in 12)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a test split")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--freqs", required=True, help="character frequency TSV from the dataset step")
    p.add_argument("--fusion", choices=("none", "late", "fallback"), default="none")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="occlusion heatmaps or nearest neighbors")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("occlusion", "knn"), required=True)
    p.add_argument("--chars", help="characters given inline")
    p.add_argument("--chars-file", help="file of characters")
    p.add_argument("--query", action="append", help="query character(s) for knn (default: all chars)")
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("render", help="dump glyph bitmaps for inspection")
    p.add_argument("--chars", help="characters given inline")
    p.add_argument("--chars-file", help="file of characters")
    p.add_argument("--font", help="TTF/OTF path (otherwise the fixture provider is used)")
    p.add_argument("--pixel-size", type=int, default=128)
    p.add_argument("--fixture-set", default="radicals-v1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
