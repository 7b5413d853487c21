"""Command-line entry point: ``tapa <command> [flags]``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric
contract failure (for example a gradient check over tolerance).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import model_gradcheck, toy_config, toy_model
from .config import ExperimentConfig, load_config, save_config
from .corpus import load_contextual, load_pairs, load_vocab, save_vocab
from .errors import ConfigError, ContractError, DataError, TapaError
from .evaluate import evaluate, run_ablation
from .lda import infer_doc, load_topic_model, save_topic_model
from .model import TapaModel
from .synthetic import KINDS, bow_baseline_f1, make_splits, make_synthetic, topic_groups
from .train import (DEFAULT_SPACE, fit_topic_model, load_checkpoint, random_search,
                    save_checkpoint, train)

logger = logging.getLogger("tapa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# helpers


def _config(args, required=True) -> ExperimentConfig:
    if args.config is None:
        if required:
            raise UsageError("--config is required for this command")
        return ExperimentConfig()
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(init_seed=args.seed, shuffle_seed=args.seed, lda_seed=args.seed)
    return cfg


def _out(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(out: Path, command: str, argv, config: ExperimentConfig | None = None, **extra):
    record = {
        "command": command,
        "argv": list(argv),
        "config": dataclasses.asdict(config) if config else None,
        "seeds": ({k: getattr(config, k) for k in ("init_seed", "shuffle_seed", "lda_seed")}
                  if config else None),
        "versions": {"tapa": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
    }
    record.update(extra)
    (out / "manifest.json").write_text(json.dumps(record, indent=2, default=str) + "\n")


def _split(data: Path, name: str, cfg: ExperimentConfig, required: bool = True):
    path = data / f"{name}.tsv"
    if not path.is_file():
        if required:
            raise DataError(f"missing {name} split: {path}")
        return []
    return load_pairs(path, cfg.data_format, name)


def _contextual(data: Path, cfg: ExperimentConfig, splits):
    if not cfg.contextual:
        return None
    table = {}
    for name in splits:
        path = data / f"{name}.ctx.tsv"
        if path.is_file():
            table.update(load_contextual(path))
    if not table:
        raise DataError(f"contextual channel enabled but no <split>.ctx.tsv files in {data}")
    return table


def _data_dir(args) -> Path:
    if args.data is None:
        raise UsageError("--data is required for this command")
    data = Path(args.data)
    if not data.exists():
        raise DataError(f"data path not found: {data}")
    return data


def _emit(report: dict, as_json: bool, text: str):
    print(json.dumps(report, indent=2, default=str) if as_json else text)


# ---------------------------------------------------------------------------
# commands


def cmd_make_synthetic(args, argv):
    out = _out(args)
    if args.kind not in KINDS:
        raise UsageError(f"--kind must be one of {KINDS}")
    if args.split_sizes:
        sizes = [int(s) for s in args.split_sizes.split(",")]
        splits = make_splits(args.kind, sizes, args.seed or 0, out)
        counts = {k: len(v) for k, v in splits.items()}
    else:
        pairs = make_synthetic(args.kind, args.size, args.seed or 0, out / f"{args.kind}.tsv")
        splits = {args.kind: pairs}
        counts = {args.kind: len(pairs)}
    extra = {}
    if args.kind == "topical":
        # sanity oracle: the planted vocabularies alone should separate the labels
        everything = [p for pairs in splits.values() for p in pairs]
        extra["bow_baseline_f1"] = bow_baseline_f1(everything, topic_groups("topical", args.seed or 0))
    _manifest(out, "make-synthetic", argv, kind=args.kind, seed=args.seed or 0, counts=counts,
              **extra)
    print(f"wrote {counts} to {out}")
    if extra:
        print(f"bag-of-words baseline F1 {extra['bow_baseline_f1']:.4f}")


def cmd_lda_fit(args, argv):
    cfg = _config(args, required=False)
    if args.seed is not None:
        cfg = cfg.replace(lda_seed=args.seed)
    data = _data_dir(args)
    pairs = _split(data, "train", cfg) if data.is_dir() else load_pairs(data, cfg.data_format)
    out = _out(args)
    model = fit_topic_model(cfg, pairs)
    save_topic_model(model, out / "topics.lda")
    _manifest(out, "lda-fit", argv, cfg)
    print(f"topic model: K={model.num_topics} V={model.vocab_size} -> {out / 'topics.lda'}")


def cmd_lda_infer(args, argv):
    if args.model is None:
        raise UsageError("--model (a topics.lda file) is required")
    model = load_topic_model(args.model)
    data = _data_dir(args)
    cfg = _config(args, required=False)
    pairs = load_pairs(data, cfg.data_format)
    out = _out(args)
    with (out / "doc_topics.tsv").open("w", encoding="utf-8") as fh:
        for p in pairs:
            for side, toks in ((1, p.q1_tokens), (2, p.q2_tokens)):
                vec = infer_doc(model, toks)
                fh.write(f"{p.id}\t{side}\t" + " ".join(repr(float(v)) for v in vec) + "\n")
    _manifest(out, "lda-infer", argv, cfg, topic_model=str(args.model))
    print(f"inferred topics for {len(pairs)} pairs -> {out / 'doc_topics.tsv'}")


def _save_model(out: Path, model: TapaModel):
    save_checkpoint(model.params.state(), out / "checkpoint.bin")
    save_config(model.config, out / "config.cfg")
    save_vocab(model.vocab, out / "vocab.txt")
    if model.topic_model is not None:
        save_topic_model(model.topic_model, out / "topics.lda")


def _load_model(path: Path, contextual=None) -> TapaModel:
    cfg = load_config(path / "config.cfg")
    vocab = load_vocab(path / "vocab.txt", cfg.min_count)
    topics = load_topic_model(path / "topics.lda") if cfg.use_topics else None
    model = TapaModel.build(cfg.replace(embedding_path=""), vocab, topics, contextual=contextual)
    model.config = cfg
    model.params.load_state(load_checkpoint(path / "checkpoint.bin"))
    return model


def cmd_train(args, argv):
    cfg = _config(args)
    data = _data_dir(args)
    out = _out(args)
    train_pairs, dev_pairs = _split(data, "train", cfg), _split(data, "dev", cfg, required=False)
    topic_model = load_topic_model(args.topics) if args.topics else None
    ctx = _contextual(data, cfg, ("train", "dev"))
    model, history = train(cfg, train_pairs, dev_pairs, topic_model, ctx)
    test_pairs = _split(data, "test", cfg, required=False)
    if test_pairs:
        model.contextual = _contextual(data, cfg, ("test",)) or {}
        history.test_f1 = evaluate(model, test_pairs, "test").f1
    _save_model(out, model)
    (out / "history.tsv").write_text(history.to_tsv())
    _manifest(out, "train", argv, cfg, best_epoch=history.best_epoch, test_f1=history.test_f1)
    report = {"best_epoch": history.best_epoch, "train_loss": history.train_loss,
              "dev_f1": history.dev_f1, "test_f1": history.test_f1}
    text = "\n".join(f"epoch {i}: loss {l:.6f} dev F1 {f:.4f}"
                     for i, (l, f) in enumerate(zip(history.train_loss, history.dev_f1)))
    if history.test_f1 is not None:
        text += f"\ntest F1 {history.test_f1:.4f} (best epoch {history.best_epoch})"
    _emit(report, args.json, text)


def _dump_affinity(model: TapaModel, pairs, directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    for s in range(0, len(pairs), 64):
        chunk = pairs[s:s + 64]
        stack = model.affinity_stack(model.batch(chunk))
        for b, pair in enumerate(chunk):
            n, m = stack.valid_region[b]
            for c in range(stack.num_channels):
                grid = stack.channels.data[b, c, :n, :m]
                name = "emb" if c == 0 else "topic"
                with (directory / f"{pair.id}.{name}.tsv").open("w") as fh:
                    for row in grid:
                        fh.write("\t".join(f"{v:.6f}" for v in row) + "\n")


def cmd_eval(args, argv):
    if args.model is None:
        raise UsageError("--model (a directory written by 'tapa train') is required")
    mdir = Path(args.model)
    if not (mdir / "checkpoint.bin").is_file():
        raise DataError(f"no checkpoint in {mdir}")
    cfg = load_config(mdir / "config.cfg")
    data = _data_dir(args)
    if data.is_dir():
        pairs = _split(data, "test", cfg)
        ctx = _contextual(data, cfg, ("test",))
    else:
        pairs = load_pairs(data, cfg.data_format, "test")
        ctx = load_contextual(data.with_suffix(".ctx.tsv")) if cfg.contextual else None
    model = _load_model(mdir, ctx)
    report = evaluate(model, pairs, str(data))
    out = _out(args)
    (out / "eval.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n")
    if args.dump_affinity:
        _dump_affinity(model, pairs, Path(args.dump_affinity))
    _manifest(out, "eval", argv, cfg, model=str(mdir))
    _emit(report.as_dict(), args.json,
          f"F1 {report.f1:.4f}  P {report.precision:.4f}  R {report.recall:.4f}  "
          f"acc {report.accuracy:.4f}  (n={report.size})")


def cmd_ablate(args, argv):
    cfg = _config(args)
    data = _data_dir(args)
    out = _out(args)
    train_pairs, dev_pairs = _split(data, "train", cfg), _split(data, "dev", cfg, required=False)
    test_pairs = _split(data, "test", cfg)
    late = load_config(args.late_config) if args.late_config else None
    ctx = _contextual(data, cfg, ("train", "dev", "test"))
    topic_model = fit_topic_model(cfg, train_pairs) if cfg.use_topics else None
    table = run_ablation(cfg, train_pairs, dev_pairs, test_pairs, late, topic_model, ctx,
                         dataset=str(data))
    (out / "ablation.tsv").write_text(table.to_tsv())
    (out / "ablation.txt").write_text(table.to_text())
    (out / "ablation.json").write_text(table.to_json() + "\n")
    _manifest(out, "ablate", argv, cfg)
    print(table.to_json() if args.json else table.to_text(), end="")


def cmd_search(args, argv):
    cfg = _config(args)
    data = _data_dir(args)
    out = _out(args)
    train_pairs, dev_pairs = _split(data, "train", cfg), _split(data, "dev", cfg)
    best, trials = random_search(DEFAULT_SPACE, args.trials, args.seed or 0, train_pairs,
                                 dev_pairs, cfg)
    save_config(best, out / "best.cfg")
    with (out / "trials.tsv").open("w") as fh:
        fh.write("trial\tdev_f1\tfingerprint\terror\n")
        for t in trials:
            fh.write(f"{t.index}\t{t.dev_f1:.4f}\t{t.config.fingerprint()}\t{t.error or '-'}\n")
    _manifest(out, "search", argv, cfg, trials=args.trials)
    print(f"best dev F1 {max(t.dev_f1 for t in trials):.4f} -> {out / 'best.cfg'}")


def cmd_gradcheck(args, argv):
    cfg = _config(args)
    seed = args.seed or 0
    results = {}
    for fusion in ("early", "late"):
        if args.toy:
            model = toy_model(toy_config(cfg, fusion=fusion), seed)
            report = model_gradcheck(model)
        else:
            model = toy_model(cfg.replace(fusion=fusion, embedding_path=""), seed)
            report = model_gradcheck(model, max_entries=20)
        results[fusion] = report
    worst = max(r.max_relative_error for r in results.values())
    if args.out:
        out = _out(args)
        _manifest(out, "gradcheck", argv, cfg,
                  reports={k: dataclasses.asdict(v) for k, v in results.items()})
    summary = {k: {"max_relative_error": v.max_relative_error, "worst_parameter": v.worst_parameter}
               for k, v in results.items()}
    _emit({"max_relative_error": worst, "fusions": summary}, args.json,
          "\n".join(f"{k}: max relative error {v.max_relative_error:.3e} ({v.worst_parameter})"
                    for k, v in results.items())
          + f"\nmax relative error {worst:.3e}")
    if worst >= GRADCHECK_TOLERANCE:
        raise ContractError(f"gradient check failed: {worst:.3e} >= {GRADCHECK_TOLERANCE}")


COMMANDS = {
    "make-synthetic": cmd_make_synthetic,
    "lda-fit": cmd_lda_fit,
    "lda-infer": cmd_lda_infer,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "search": cmd_search,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tapa", description="Topic-aware question paraphrase identification.")
    parser.add_argument("--version", action="version", version=f"tapa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log epoch progress")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", metavar="PATH", help="config file or shipped name (quora, paws, semeval, synthetic)")
        p.add_argument("--data", metavar="PATH", help="dataset directory (train/dev/test.tsv) or file")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--seed", type=int, metavar="N", help="override every seed")
        p.add_argument("--json", action="store_true", help="print a structured report")
        p.set_defaults(usage=p.format_usage())
        return p

    p = command("make-synthetic", "generate a lexical or topical pair dataset")
    p.add_argument("--kind", default="lexical", help="lexical or topical")
    p.add_argument("--size", type=int, default=2000)
    p.add_argument("--split-sizes", metavar="A,B,C", help="write train/dev/test splits instead")
    command("lda-fit", "fit an LDA topic model on the training questions")
    p = command("lda-infer", "document topic vectors for every question")
    p.add_argument("--model", metavar="PATH", help="topics.lda file")
    p = command("train", "train a model")
    p.add_argument("--topics", metavar="PATH", help="reuse a fitted topics.lda")
    p = command("eval", "evaluate a trained model")
    p.add_argument("--model", metavar="DIR", help="directory written by 'tapa train'")
    p.add_argument("--dump-affinity", metavar="DIR", help="write affinity grids as TSV")
    p = command("ablate", "train and score the four ablation variants")
    p.add_argument("--late-config", metavar="PATH", help="separately tuned late-fusion config")
    p = command("search", "seeded random hyperparameter search")
    p.add_argument("--trials", type=int, default=5)
    p = command("gradcheck", "finite-difference check of model gradients")
    p.add_argument("--toy", action="store_true", help="shrink dims to toy size")
    return parser


def dispatch(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "tapa: error: a command is required")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s")
        COMMANDS[args.command](args, argv)
        return EXIT_OK
    except UsageError as exc:
        message = str(exc)
        usage = getattr(locals().get("args"), "usage", "")
        if usage and not message.startswith("usage:"):
            message = f"{usage}tapa {args.command}: error: {message}"
        print(message, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"tapa: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"tapa: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"tapa: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TapaError as exc:
        print(f"tapa: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - never a bare traceback
        print(f"tapa: internal error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_USAGE


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
